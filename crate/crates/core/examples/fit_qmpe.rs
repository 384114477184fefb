//! Minimum power-divergence fits of the independence model to a pooled
//! 3x3 table, for several values of lambda.
//!
//! cargo run --release --example fit_qmpe

use clustered_gof::data::housing;
use clustered_gof::estimation::{collapse, independence_mle, qmpe, FitOptions};
use clustered_gof::{LogLinearModel, PowerDivergence};

fn main() -> clustered_gof::Result<()> {
    let ds = housing();
    let p_hat = collapse(&ds);
    let model = LogLinearModel::independence(3, 3)?;
    println!("pooled proportions: {:.4?}", p_hat.as_slice());

    let mle = independence_mle(&p_hat, 3, 3)?;
    println!("closed-form MLE:    {:.4?}\n", mle.as_slice());

    for lambda in ["-0.5", "0", "2/3", "1", "2"] {
        let d = PowerDivergence::parse(lambda)?;
        let fit = qmpe(&p_hat, &model, d, &FitOptions::default())?;
        println!(
            "lambda {:>4}: d = {:.6}, {} iterations, |grad| = {:.1e}",
            lambda, fit.divergence_at_min, fit.iterations, fit.gradient_norm
        );
        println!("  theta  = {:.4?}", fit.theta.as_slice());
        println!("  fitted = {:.4?}", fit.fitted.as_slice());
    }

    // an infeasible request: lambda <= -1 with an empty pooled cell
    let err = qmpe(
        &p_hat,
        &model,
        PowerDivergence::new(-1.0)?,
        &FitOptions::default(),
    )
    .unwrap_err();
    println!("\nlambda -1: {err}");
    Ok(())
}
