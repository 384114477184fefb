//! Goodness-of-fit testing for log-linear models on clustered, overdispersed
//! multinomial contingency tables.
//!
//! The pipeline is: collapse the cluster tables into a pooled probability
//! estimate ([`estimation::collapse`]), fit the model by minimum
//! power-divergence ([`estimation::qmpe`]), estimate the design effect
//! ([`dispersion`]), and scale a power-divergence statistic by it
//! ([`gof::gof_test`]). [`simgen`] generates overdispersed data for
//! Monte Carlo size studies.

pub mod cli;
pub mod data;
pub mod dispersion;
pub mod divergence;
pub mod error;
pub mod estimation;
pub mod gof;
pub mod model;
pub mod reproduce;
pub mod simgen;
pub mod special;

pub use dispersion::{DispersionEstimate, DispersionMethod};
pub use divergence::PowerDivergence;
pub use error::{Error, Result};
pub use estimation::{ClusterDataset, ClusterTable, FitOptions, FitResult};
pub use gof::GofResult;
pub use model::{LogLinearModel, ProbabilityVector};
