//! Log-linear models over `M` lexicographically ordered cells.
//!
//! A model is a design matrix `W` (`M x M0`); the parameter vector `theta`
//! maps to probabilities through `p(theta) = exp(W theta) / 1' exp(W theta)`.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Absolute tolerance on singular values when computing ranks.
pub const RANK_TOL: f64 = 1e-10;

const SIMPLEX_TOL: f64 = 1e-12;

/// A probability vector over the cells of a contingency table.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Invalid("empty probability vector".into()));
        }
        if let Some(r) = p.iter().position(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::Invalid(format!(
                "probability entry {r} is {} (must be finite and nonnegative)",
                p[r]
            )));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Invalid(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self(p))
    }

    /// Relative frequencies of a count vector.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::Invalid("count vector has zero total".into()));
        }
        let t = total as f64;
        Ok(Self(counts.iter().map(|&c| c as f64 / t).collect()))
    }

    /// Wraps a vector produced by a normalizing computation. Entries must
    /// already be nonnegative with unit sum up to rounding.
    pub(crate) fn from_normalized(p: Vec<f64>) -> Self {
        debug_assert!(p.iter().all(|&x| x >= 0.0));
        debug_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        Self(p)
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.0.iter().all(|&x| x > 0.0)
    }
}

impl Deref for ProbabilityVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Outcome of [`validate_design`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum DesignReport {
    Valid,
    TooManyParameters { m: usize, m0: usize },
    RankDeficient { rank: usize, m0: usize },
    OnesInSpan,
}

impl DesignReport {
    pub fn is_valid(&self) -> bool {
        matches!(self, DesignReport::Valid)
    }
}

impl std::fmt::Display for DesignReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DesignReport::Valid => write!(f, "design matrix is valid"),
            DesignReport::TooManyParameters { m, m0 } => {
                write!(f, "{m0} parameters for {m} cells; need M0 < M - 1")
            }
            DesignReport::RankDeficient { rank, m0 } => {
                write!(
                    f,
                    "design matrix has rank {rank}, expected full column rank {m0}"
                )
            }
            DesignReport::OnesInSpan => {
                write!(
                    f,
                    "the ones vector lies in the column span of the design matrix"
                )
            }
        }
    }
}

fn rank(a: &DMatrix<f64>) -> usize {
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL)
        .count()
}

/// Checks full column rank and independence from the ones vector.
pub fn validate_design(w: &DMatrix<f64>) -> DesignReport {
    let (m, m0) = w.shape();
    if m0 == 0 || m0 + 1 >= m {
        return DesignReport::TooManyParameters { m, m0 };
    }
    let r = rank(w);
    if r < m0 {
        return DesignReport::RankDeficient { rank: r, m0 };
    }
    let augmented = w.clone().insert_column(m0, 1.0);
    if rank(&augmented) < m0 + 1 {
        return DesignReport::OnesInSpan;
    }
    DesignReport::Valid
}

/// A log-linear model: design matrix plus optional two-way table shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLinearModel {
    design: DMatrix<f64>,
    shape: Option<(usize, usize)>,
}

impl LogLinearModel {
    /// Builds a model from a validated design matrix.
    pub fn new(design: DMatrix<f64>) -> Result<Self> {
        if design.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid(
                "design matrix has non-finite entries".into(),
            ));
        }
        match validate_design(&design) {
            DesignReport::Valid => Ok(Self {
                design,
                shape: None,
            }),
            report => Err(Error::Invalid(report.to_string())),
        }
    }

    /// Effects-coded independence model `log p_ij = u + a_i + b_j` for an
    /// `I x J` table, cells in row-major order. The last level of each factor
    /// is coded `-1` in every column of that factor.
    pub fn independence(rows: usize, cols: usize) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::Invalid(format!(
                "independence design needs I, J >= 2 (got {rows} x {cols})"
            )));
        }
        let m = rows * cols;
        let m0 = (rows - 1) + (cols - 1);
        let effect = |level: usize, k: usize, last: usize| -> f64 {
            if level == k {
                1.0
            } else if level == last {
                -1.0
            } else {
                0.0
            }
        };
        let w = DMatrix::from_fn(m, m0, |cell, col| {
            let (i, j) = (cell / cols, cell % cols);
            if col < rows - 1 {
                effect(i, col, rows - 1)
            } else {
                effect(j, col - (rows - 1), cols - 1)
            }
        });
        let mut model = Self::new(w)?;
        model.shape = Some((rows, cols));
        Ok(model)
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// Number of cells `M`.
    pub fn cells(&self) -> usize {
        self.design.nrows()
    }

    /// Number of free parameters `M0`.
    pub fn params(&self) -> usize {
        self.design.ncols()
    }

    /// Two-way table shape, when the model was built by [`Self::independence`].
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    /// Degrees of freedom `M - M0 - 1` of the goodness-of-fit statistics.
    pub fn degrees_of_freedom(&self) -> usize {
        self.cells() - self.params() - 1
    }

    /// Returns a model whose design is `W B`.
    pub fn reparameterized(&self, b: &DMatrix<f64>) -> Result<Self> {
        if b.shape() != (self.params(), self.params()) {
            return Err(Error::Dimension(format!(
                "reparameterization matrix is {:?}, expected {m0}x{m0}",
                b.shape(),
                m0 = self.params()
            )));
        }
        let mut model = Self::new(&self.design * b)?;
        model.shape = self.shape;
        Ok(model)
    }

    /// `exp(W theta)` normalized to sum to one.
    pub fn probabilities(&self, theta: &[f64]) -> Result<ProbabilityVector> {
        if theta.len() != self.params() {
            return Err(Error::Dimension(format!(
                "theta has length {}, model has {} parameters",
                theta.len(),
                self.params()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Invalid("theta has non-finite entries".into()));
        }
        Ok(self.probabilities_unchecked(theta))
    }

    pub(crate) fn probabilities_unchecked(&self, theta: &[f64]) -> ProbabilityVector {
        let eta = &self.design * DVector::from_column_slice(theta);
        ProbabilityVector::from_normalized(softmax(eta.as_slice()))
    }
}

/// Max-shifted softmax.
pub(crate) fn softmax(eta: &[f64]) -> Vec<f64> {
    let max = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = eta.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter_mut().for_each(|x| *x /= total);
    e
}

/// `D_p - p p'`, the covariance of a single multinomial draw.
pub fn sigma_matrix(p: &ProbabilityVector) -> DMatrix<f64> {
    let m = p.len();
    DMatrix::from_fn(m, m, |r, s| {
        let d = if r == s { p[r] } else { 0.0 };
        d - p[r] * p[s]
    })
}

/// Converts 1-based `(i, j)` coordinates of an `I x J` table to a 0-based
/// single cell index.
pub fn cell_index(i: usize, j: usize, cols: usize) -> usize {
    (i - 1) * cols + (j - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_theta_is_uniform() {
        let model = LogLinearModel::independence(3, 3).unwrap();
        let p = model.probabilities(&[0.0; 4]).unwrap();
        for &x in p.iter() {
            assert_abs_diff_eq!(x, 1.0 / 9.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn independence_3x3_matches_published_matrix() {
        let model = LogLinearModel::independence(3, 3).unwrap();
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(4, 9, &[
            1.0, 1.0, 1.0, 0.0, 0.0, 0.0, -1.0, -1.0, -1.0,
            0.0, 0.0, 0.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0,
            1.0, 0.0, -1.0, 1.0, 0.0, -1.0, 1.0, 0.0, -1.0,
            0.0, 1.0, -1.0, 0.0, 1.0, -1.0, 0.0, 1.0, -1.0,
        ]).transpose();
        assert_eq!(model.design(), &expected);
        assert_eq!(model.degrees_of_freedom(), 4);
        assert!(validate_design(model.design()).is_valid());
    }

    #[test]
    fn independence_2x2() {
        let model = LogLinearModel::independence(2, 2).unwrap();
        let expected =
            DMatrix::from_column_slice(4, 2, &[1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0, -1.0]);
        assert_eq!(model.design(), &expected);
    }

    #[test]
    fn independence_rejects_small_factors() {
        assert!(LogLinearModel::independence(1, 3).is_err());
        assert!(LogLinearModel::independence(3, 1).is_err());
    }

    #[test]
    fn design_with_ones_column_fails() {
        let mut w = LogLinearModel::independence(3, 3).unwrap().design().clone();
        w.set_column(1, &DVector::from_element(9, 1.0));
        assert_eq!(validate_design(&w), DesignReport::OnesInSpan);
    }

    #[test]
    fn design_with_duplicate_column_fails() {
        let mut w = LogLinearModel::independence(3, 3).unwrap().design().clone();
        let c0 = w.column(0).clone_owned();
        w.set_column(1, &c0);
        assert!(matches!(
            validate_design(&w),
            DesignReport::RankDeficient { rank: 3, m0: 4 }
        ));
        assert!(LogLinearModel::new(w).is_err());
    }

    #[test]
    fn too_many_parameters_fails() {
        let w = DMatrix::from_fn(4, 3, |r, c| if r == c { 1.0 } else { 0.0 });
        assert!(matches!(
            validate_design(&w),
            DesignReport::TooManyParameters { .. }
        ));
    }

    #[test]
    fn dimension_mismatch() {
        let model = LogLinearModel::independence(3, 3).unwrap();
        assert!(matches!(
            model.probabilities(&[0.0; 3]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn large_exponents_do_not_overflow() {
        let model = LogLinearModel::independence(3, 3).unwrap();
        let p = model.probabilities(&[800.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(p.iter().all(|x| x.is_finite()));
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sigma_two_cells() {
        let p = ProbabilityVector::new(vec![0.5, 0.5]).unwrap();
        let s = sigma_matrix(&p);
        assert_eq!(
            s,
            DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25])
        );
    }

    #[test]
    fn sigma_mass_point_has_zero_first_row() {
        let p = ProbabilityVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        let s = sigma_matrix(&p);
        assert!(s.row(0).iter().all(|&x| x == 0.0));
        assert!(s.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn probability_vector_validation() {
        assert!(ProbabilityVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbabilityVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbabilityVector::new(vec![]).is_err());
        assert!(ProbabilityVector::from_counts(&[0, 0]).is_err());
        assert_eq!(
            ProbabilityVector::from_counts(&[2, 3]).unwrap().as_slice(),
            &[0.4, 0.6]
        );
    }

    #[test]
    fn cell_index_is_row_major() {
        assert_eq!(cell_index(1, 1, 3), 0);
        assert_eq!(cell_index(1, 3, 3), 2);
        assert_eq!(cell_index(3, 3, 3), 8);
    }
}
