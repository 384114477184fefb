//! Loading a design matrix from CSV, checking it, and testing a model that
//! is not two-way independence: uniform association for a 3x3 table.
//!
//! cargo run --release --example custom_design

use clustered_gof::data::{housing, read_design};
use clustered_gof::estimation::FitOptions;
use clustered_gof::gof::gof_test;
use clustered_gof::model::{validate_design, DesignReport};
use clustered_gof::{DispersionMethod, LogLinearModel, PowerDivergence};
use nalgebra::DMatrix;

// effects-coded rows and columns plus a linear-by-linear term
const UNIFORM_ASSOCIATION: &str = "\
1,0,1,0,1
1,0,0,1,0
1,0,-1,-1,-1
0,1,1,0,0
0,1,0,1,0
0,1,-1,-1,0
-1,-1,1,0,-1
-1,-1,0,1,0
-1,-1,-1,-1,1
";

fn main() -> clustered_gof::Result<()> {
    let model = read_design(UNIFORM_ASSOCIATION.as_bytes(), "uniform association")?;
    println!(
        "{} cells, {} parameters, {} df",
        model.cells(),
        model.params(),
        model.degrees_of_freedom()
    );

    let with_ones = DMatrix::from_fn(9, 2, |r, c| if c == 0 { 1.0 } else { r as f64 });
    assert_eq!(validate_design(&with_ones), DesignReport::OnesInSpan);
    println!(
        "a design containing the ones vector is rejected: {:?}",
        validate_design(&with_ones)
    );

    let ds = housing();
    let l1 = PowerDivergence::parse("2/3")?;
    let l2 = PowerDivergence::new(0.0)?;
    for (name, m) in [
        ("independence", LogLinearModel::independence(3, 3)?),
        ("uniform association", model),
    ] {
        let r = gof_test(
            &ds,
            &m,
            l1,
            l2,
            DispersionMethod::Semiparametric,
            &FitOptions::default(),
        )?;
        println!(
            "{name:>20}: T = {:.4} on {} df, p = {:.4}",
            r.statistic, r.df, r.p_value
        );
    }
    Ok(())
}
