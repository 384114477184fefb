use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("infeasible fit: {0}")]
    Infeasible(String),

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NotConverged {
        iterations: usize,
        gradient_norm: f64,
        best_theta: Vec<f64>,
    },

    #[error("fitted probability is zero in cell {0}; the fit must be interior")]
    ZeroFittedCell(usize),

    #[error("no group has at least two clusters; the design effect is undefined")]
    NoDispersionGroups,

    #[error("design effect estimate {0} is not positive")]
    NonPositiveDesignEffect(f64),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
