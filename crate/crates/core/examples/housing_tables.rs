//! Recomputes both lambda-grid tables for the bundled housing-satisfaction
//! data and checks every cell against the published values.
//!
//! cargo run --release --example housing_tables

use clustered_gof::data::housing;
use clustered_gof::reproduce::reproduce;

fn main() -> clustered_gof::Result<()> {
    let ds = housing();
    let (semi, brier, report) = reproduce(&ds)?;
    println!("semiparametric design effect\n{}", semi.render());
    println!("Brier design effect\n{}", brier.render());
    let bad = report.mismatches().count();
    println!(
        "{} of {} cells within tolerance",
        report.checks.len() - bad,
        report.checks.len()
    );
    Ok(())
}
