//! A small Monte Carlo estimate of test size under overdispersion, built in
//! code; `cgof simulate` runs the same study from a TOML file such as
//! `examples/study.toml`.
//!
//! cargo run --release --example size_study -- [replications]

use clustered_gof::estimation::FitOptions;
use clustered_gof::simgen::{
    size_study, write_study_csv, GeneratorKind, GroupLayout, StudyConfig, DEFAULT_MASTER_SEED,
};
use clustered_gof::{DispersionMethod, LogLinearModel, PowerDivergence};

fn main() -> clustered_gof::Result<()> {
    let replications = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(200);
    let cfg = StudyConfig {
        true_theta: vec![0.1, 0.2, 0.4, 0.3],
        model: LogLinearModel::independence(3, 3)?,
        groups: vec![
            GroupLayout {
                cluster_size: 5,
                clusters: 18,
            },
            GroupLayout {
                cluster_size: 3,
                clusters: 2,
            },
            GroupLayout {
                cluster_size: 7,
                clusters: 5,
            },
        ],
        rho2_grid: vec![0.0, 0.2],
        distributions: GeneratorKind::OVERDISPERSED.to_vec(),
        lambda_pairs: vec![
            (PowerDivergence::parse("2/3")?, PowerDivergence::new(0.0)?),
            (PowerDivergence::new(0.0)?, PowerDivergence::new(0.0)?),
        ],
        methods: vec![DispersionMethod::Semiparametric, DispersionMethod::Brier],
        replications,
        nominal_alpha: 0.05,
        master_seed: DEFAULT_MASTER_SEED,
        fit: FitOptions::default(),
    };
    let rows = size_study(&cfg)?;
    write_study_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}
