//! Semiparametric and Brier-type design-effect estimates, with their
//! per-group components.
//!
//! cargo run --release --example design_effect

use clustered_gof::data::housing;
use clustered_gof::dispersion::{
    brier_design_effect, semiparametric_design_effect, weights_and_effective_size,
};
use clustered_gof::estimation::{collapse, qmpe, FitOptions};
use clustered_gof::{DispersionEstimate, LogLinearModel, PowerDivergence};

fn show(label: &str, est: &DispersionEstimate) {
    println!(
        "{label}: vartheta = {:.4}, rho2 = {:.4}",
        est.vartheta, est.rho2
    );
    for g in &est.per_group {
        println!(
            "  group {} (n = {}, N = {}): weight {:.4}, component {:.4}",
            g.label, g.cluster_size, g.clusters, g.weight, g.vartheta
        );
    }
    for w in &est.warnings {
        println!("  warning: {w}");
    }
}

fn main() -> clustered_gof::Result<()> {
    let ds = housing();
    let w = weights_and_effective_size(&ds);
    println!(
        "weights {:?}, effective cluster size {}\n",
        w.weights, w.effective_size
    );

    let model = LogLinearModel::independence(3, 3)?;
    let p_hat = collapse(&ds);
    for lambda in [0.0, 2.0] {
        let fit = qmpe(
            &p_hat,
            &model,
            PowerDivergence::new(lambda)?,
            &FitOptions::default(),
        )?;
        show(
            &format!("semiparametric, lambda2 = {lambda}"),
            &semiparametric_design_effect(&ds, &fit)?,
        );
    }
    show("Brier", &brier_design_effect(&ds)?);
    Ok(())
}
