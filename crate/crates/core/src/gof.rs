//! Overdispersed power-divergence goodness-of-fit statistics.
//!
//! `T = 2 nN d_{lambda1}(p_hat, p(theta_hat_{lambda2})) / vartheta`, referred
//! to a chi-square law with `M - M0 - 1` degrees of freedom.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dispersion::{
    brier_design_effect, semiparametric_design_effect, DispersionEstimate, DispersionMethod,
};
use crate::divergence::{kullback, PowerDivergence};
use crate::error::{Error, Result};
use crate::estimation::{collapse, qmpe, ClusterDataset, FitOptions, FitResult};
use crate::model::{LogLinearModel, ProbabilityVector};
use crate::special::chi_square_sf;

/// `phi''(1)` for every member of the power-divergence family.
pub const PHI_CURVATURE_AT_ONE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GofResult {
    pub lambda1: f64,
    pub lambda2: f64,
    #[serde(rename = "method")]
    pub dispersion_method: DispersionMethod,
    /// `+inf` when the statistic diverges (see `finite`).
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    #[serde(rename = "vartheta")]
    pub vartheta_used: f64,
    /// `sum_g N_g n_g`.
    pub sample_scale: u64,
    pub finite: bool,
}

/// `2 nN / phi''(1) * d_{lambda1}(p_hat, p_fit)`, the statistic before
/// division by the design effect.
pub fn raw_statistic(
    lambda1: PowerDivergence,
    p_hat: &[f64],
    p_fit: &[f64],
    sample_scale: u64,
) -> Result<f64> {
    if p_hat.len() != p_fit.len() {
        return Err(Error::Dimension(format!(
            "p_hat has {} cells, p_fit has {}",
            p_hat.len(),
            p_fit.len()
        )));
    }
    if let Some(r) = p_fit.iter().position(|&x| x.is_nan() || x <= 0.0) {
        return Err(Error::ZeroFittedCell(r));
    }
    let d = lambda1.divergence_closed_form(p_hat, p_fit);
    Ok(2.0 * sample_scale as f64 / PHI_CURVATURE_AT_ONE * d)
}

/// Pearson `nN sum (p_hat - p_fit)^2 / p_fit`.
pub fn pearson_statistic(p_hat: &[f64], p_fit: &[f64], sample_scale: u64) -> f64 {
    sample_scale as f64
        * p_hat
            .iter()
            .zip(p_fit)
            .map(|(&a, &b)| (a - b) * (a - b) / b)
            .sum::<f64>()
}

/// Likelihood ratio `2 nN sum p_hat log(p_hat / p_fit)`.
pub fn likelihood_ratio_statistic(p_hat: &[f64], p_fit: &[f64], sample_scale: u64) -> f64 {
    2.0 * sample_scale as f64 * kullback(p_hat, p_fit)
}

/// A fitted model together with its design-effect estimate, from which
/// statistics for any `lambda1` follow without refitting.
#[derive(Debug, Clone)]
pub struct FittedTest {
    pub p_hat: ProbabilityVector,
    pub fit: FitResult,
    pub dispersion: DispersionEstimate,
    pub df: usize,
    pub sample_scale: u64,
}

impl FittedTest {
    pub fn new(
        ds: &ClusterDataset,
        model: &LogLinearModel,
        lambda2: PowerDivergence,
        method: DispersionMethod,
        opts: &FitOptions,
    ) -> Result<Self> {
        if ds.cells() != model.cells() {
            return Err(Error::Dimension(format!(
                "dataset has {} cells, model has {}",
                ds.cells(),
                model.cells()
            )));
        }
        let p_hat = collapse(ds);
        let fit = qmpe(&p_hat, model, lambda2, opts)?;
        let dispersion = match method {
            DispersionMethod::Semiparametric => semiparametric_design_effect(ds, &fit)?,
            DispersionMethod::Brier => brier_design_effect(ds)?,
        };
        Ok(Self {
            p_hat,
            fit,
            dispersion,
            df: model.degrees_of_freedom(),
            sample_scale: ds.total_count(),
        })
    }

    pub fn statistic(&self, lambda1: PowerDivergence) -> Result<GofResult> {
        let vartheta = self.dispersion.vartheta;
        if vartheta.is_nan() || vartheta <= 0.0 {
            return Err(Error::NonPositiveDesignEffect(vartheta));
        }
        let raw = raw_statistic(lambda1, &self.p_hat, &self.fit.fitted, self.sample_scale)?;
        let statistic = raw / vartheta;
        let finite = statistic.is_finite();
        let p_value = if finite {
            chi_square_sf(statistic, self.df)
        } else {
            0.0
        };
        Ok(GofResult {
            lambda1: lambda1.lambda(),
            lambda2: self.fit.divergence.lambda(),
            dispersion_method: self.dispersion.method,
            statistic,
            df: self.df,
            p_value,
            vartheta_used: vartheta,
            sample_scale: self.sample_scale,
            finite,
        })
    }
}

/// Fits by minimum `lambda2`-divergence, estimates the design effect, and
/// tests the fit with the `lambda1` statistic.
pub fn gof_test(
    ds: &ClusterDataset,
    model: &LogLinearModel,
    lambda1: PowerDivergence,
    lambda2: PowerDivergence,
    method: DispersionMethod,
    opts: &FitOptions,
) -> Result<GofResult> {
    FittedTest::new(ds, model, lambda2, method, opts)?.statistic(lambda1)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanCell {
    #[serde(flatten)]
    pub result: Option<GofResult>,
    pub error: Option<String>,
}

/// Statistics over a `lambda1 x lambda2` grid.
#[derive(Debug, Clone, Serialize)]
pub struct ScanTable {
    pub method: DispersionMethod,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    /// `cells[i][j]` holds `(lambda1[i], lambda2[j])`.
    pub cells: Vec<Vec<ScanCell>>,
    /// Design-effect estimate per `lambda2` column.
    pub vartheta: Vec<Option<f64>>,
}

pub fn table_scan(
    ds: &ClusterDataset,
    model: &LogLinearModel,
    lambda1_grid: &[PowerDivergence],
    lambda2_grid: &[PowerDivergence],
    method: DispersionMethod,
    opts: &FitOptions,
) -> Result<ScanTable> {
    if lambda1_grid.is_empty() || lambda2_grid.is_empty() {
        return Err(Error::Invalid("lambda grids must be nonempty".into()));
    }
    let columns: Vec<(Vec<ScanCell>, Option<f64>)> = lambda2_grid
        .par_iter()
        .map(|&l2| match FittedTest::new(ds, model, l2, method, opts) {
            Ok(test) => {
                let cells = lambda1_grid
                    .iter()
                    .map(|&l1| match test.statistic(l1) {
                        Ok(r) => ScanCell {
                            result: Some(r),
                            error: None,
                        },
                        Err(e) => ScanCell {
                            result: None,
                            error: Some(e.to_string()),
                        },
                    })
                    .collect();
                (cells, Some(test.dispersion.vartheta))
            }
            Err(e) => {
                let msg = e.to_string();
                let cells = lambda1_grid
                    .iter()
                    .map(|_| ScanCell {
                        result: None,
                        error: Some(msg.clone()),
                    })
                    .collect();
                (cells, None)
            }
        })
        .collect();

    let mut cells: Vec<Vec<ScanCell>> = (0..lambda1_grid.len()).map(|_| Vec::new()).collect();
    let mut vartheta = Vec::with_capacity(columns.len());
    for (column, v) in columns {
        for (row, cell) in cells.iter_mut().zip(column) {
            row.push(cell);
        }
        vartheta.push(v);
    }
    Ok(ScanTable {
        method,
        lambda1: lambda1_grid.iter().map(PowerDivergence::lambda).collect(),
        lambda2: lambda2_grid.iter().map(PowerDivergence::lambda).collect(),
        cells,
        vartheta,
    })
}

/// Formats a float for CSV output: full precision, `inf` for infinities.
pub(crate) fn fmt_float(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x}")
    }
}

fn fmt_lambda(l: f64) -> String {
    if (l - 2.0 / 3.0).abs() < 1e-12 {
        "2/3".into()
    } else {
        format!("{l}")
    }
}

pub const SCAN_CSV_HEADER: &str = "lambda1,lambda2,method,statistic,df,p_value,vartheta";

impl ScanTable {
    pub fn get(&self, lambda1: usize, lambda2: usize) -> Option<&GofResult> {
        self.cells.get(lambda1)?.get(lambda2)?.result.as_ref()
    }

    /// One CSV row per grid cell, `lambda1` major. Failed cells have empty
    /// statistic, p-value and design-effect fields.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{SCAN_CSV_HEADER}")?;
        for (i, row) in self.cells.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                let l1 = self.lambda1[i];
                let l2 = self.lambda2[j];
                match &cell.result {
                    Some(r) => writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        l1,
                        l2,
                        self.method,
                        fmt_float(r.statistic),
                        r.df,
                        fmt_float(r.p_value),
                        fmt_float(r.vartheta_used)
                    )?,
                    None => writeln!(out, "{l1},{l2},{},,,,", self.method)?,
                }
            }
        }
        Ok(())
    }

    /// Plain-text table: rows `lambda1`, columns `lambda2`, p-values in
    /// parentheses, and the design-effect row at the bottom.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:>10}", "l1 \\ l2");
        for &l2 in &self.lambda2 {
            let _ = write!(s, "{:>12}", fmt_lambda(l2));
        }
        s.push('\n');
        for (i, row) in self.cells.iter().enumerate() {
            let _ = write!(s, "{:>10}", fmt_lambda(self.lambda1[i]));
            for cell in row {
                match &cell.result {
                    Some(r) => {
                        let _ = write!(s, "{:>12.4}", r.statistic);
                    }
                    None => {
                        let _ = write!(s, "{:>12}", "error");
                    }
                }
            }
            s.push('\n');
            let _ = write!(s, "{:>10}", "");
            for cell in row {
                let p = match &cell.result {
                    Some(r) if r.p_value < 1e-4 => "(<0.0001)".to_string(),
                    Some(r) => format!("({:.4})", r.p_value),
                    None => String::new(),
                };
                let _ = write!(s, "{p:>12}");
            }
            s.push('\n');
        }
        let _ = write!(s, "{:>10}", "vartheta");
        for v in &self.vartheta {
            match v {
                Some(v) => {
                    let _ = write!(s, "{v:>12.4}");
                }
                None => {
                    let _ = write!(s, "{:>12}", "error");
                }
            }
        }
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pd(l: f64) -> PowerDivergence {
        PowerDivergence::new(l).unwrap()
    }

    #[test]
    fn statistic_vanishes_at_perfect_fit() {
        let p = [0.2, 0.3, 0.5];
        for l in [-1.0, -0.5, 0.0, 2.0 / 3.0, 1.0, 2.0] {
            assert_abs_diff_eq!(
                raw_statistic(pd(l), &p, &p, 100).unwrap(),
                0.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn chi_square_by_hand() {
        let v = raw_statistic(pd(1.0), &[0.5, 0.5], &[0.25, 0.75], 96).unwrap();
        assert_abs_diff_eq!(v, 32.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            pearson_statistic(&[0.5, 0.5], &[0.25, 0.75], 96),
            32.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn reverse_kullback_form_and_divergence() {
        let p_hat: [f64; 3] = [0.2, 0.5, 0.3];
        let p_fit: [f64; 3] = [0.25, 0.4, 0.35];
        let direct: f64 = 50.0
            * 2.0
            * p_fit
                .iter()
                .zip(&p_hat)
                .map(|(a, b)| a * (a / b).ln())
                .sum::<f64>();
        assert_abs_diff_eq!(
            raw_statistic(pd(-1.0), &p_hat, &p_fit, 50).unwrap(),
            direct,
            epsilon = 1e-12
        );
        let with_empty = raw_statistic(pd(-1.0), &[0.5, 0.5, 0.0], &p_fit, 50).unwrap();
        assert_eq!(with_empty, f64::INFINITY);
    }

    #[test]
    fn zero_fitted_cell_rejected() {
        assert!(matches!(
            raw_statistic(pd(1.0), &[0.5, 0.5], &[1.0, 0.0], 10),
            Err(Error::ZeroFittedCell(1))
        ));
    }

    #[test]
    fn empty_grid_rejected() {
        let ds =
            ClusterDataset::from_groups(vec![vec![vec![1, 1, 1, 1, 0, 0], vec![0, 1, 1, 1, 1, 0]]])
                .unwrap();
        let model = LogLinearModel::independence(2, 3).unwrap();
        assert!(table_scan(
            &ds,
            &model,
            &[],
            &[pd(0.0)],
            DispersionMethod::Brier,
            &FitOptions::default()
        )
        .is_err());
    }

    #[test]
    fn identical_clusters_give_non_positive_design_effect_error() {
        let ds = ClusterDataset::from_groups(vec![vec![vec![1, 2, 1, 1]; 5]]).unwrap();
        let model = LogLinearModel::independence(2, 2).unwrap();
        let err = gof_test(
            &ds,
            &model,
            pd(1.0),
            pd(0.0),
            DispersionMethod::Semiparametric,
            &FitOptions::default(),
        );
        assert!(matches!(err, Err(Error::NonPositiveDesignEffect(v)) if v == 0.0));
    }

    #[test]
    fn lambda_labels() {
        assert_eq!(fmt_lambda(2.0 / 3.0), "2/3");
        assert_eq!(fmt_lambda(-0.5), "-0.5");
        assert_eq!(fmt_float(f64::INFINITY), "inf");
    }
}
