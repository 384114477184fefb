//! Design-effect and intracluster-correlation estimators.
//!
//! Both estimators combine per-group within-cluster chi-square dispersions
//! with weights `w_g = n_g N_g / sum_h n_h N_h`. One weights squared
//! deviations by fitted model probabilities, the other (Brier) by the
//! group's own empirical probabilities.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{group_collapse, ClusterDataset, ClusterGroup, FitResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DispersionMethod {
    Semiparametric,
    Brier,
}

impl DispersionMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            DispersionMethod::Semiparametric => "semiparametric",
            DispersionMethod::Brier => "brier",
        }
    }
}

impl fmt::Display for DispersionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DispersionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semi" | "semiparametric" => Ok(DispersionMethod::Semiparametric),
            "brier" => Ok(DispersionMethod::Brier),
            other => Err(Error::Invalid(format!(
                "unknown dispersion method {other:?} (expected semi or brier)"
            ))),
        }
    }
}

/// Sampling weights of the groups.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleWeights {
    /// `w_g = n_g N_g / sum_h n_h N_h`.
    pub weights: Vec<f64>,
    /// `n* = sum_g w_g n_g`.
    pub effective_size: f64,
    /// `sum_g N_g n_g`.
    pub total_count: u64,
}

pub fn weights_and_effective_size(ds: &ClusterDataset) -> SampleWeights {
    let total = ds.total_count();
    let weights: Vec<f64> = ds
        .groups()
        .iter()
        .map(|g| g.total_count() as f64 / total as f64)
        .collect();
    let effective_size = weights
        .iter()
        .zip(ds.groups())
        .map(|(w, g)| w * g.cluster_size() as f64)
        .sum();
    SampleWeights {
        weights,
        effective_size,
        total_count: total,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupComponent {
    pub label: usize,
    pub cluster_size: u64,
    pub clusters: usize,
    /// Renormalized over the groups that enter the estimate.
    pub weight: f64,
    /// The group's own design-effect estimate.
    pub vartheta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionEstimate {
    pub vartheta: f64,
    pub rho2: f64,
    pub method: DispersionMethod,
    /// Index of the divergence used for the fit (semiparametric only).
    pub lambda2: Option<f64>,
    pub per_group: Vec<GroupComponent>,
    pub effective_size: f64,
    pub warnings: Vec<String>,
}

impl DispersionEstimate {
    /// Intracluster correlation below zero; possible for the estimate but
    /// outside the range assumed in practice.
    pub fn rho2_negative(&self) -> bool {
        self.rho2 < 0.0
    }
}

/// `sum_l (p_hat^(l,g)_r - p_hat^(g)_r)^2` for every cell `r`.
fn squared_deviations(group: &ClusterGroup, center: &[f64]) -> Vec<f64> {
    let n = group.cluster_size() as f64;
    let mut out = vec![0.0; center.len()];
    for t in group.tables() {
        for ((acc, &c), &m) in out.iter_mut().zip(t).zip(center) {
            let d = c as f64 / n - m;
            *acc += d * d;
        }
    }
    out
}

fn group_center(ds: &ClusterDataset, g: usize) -> Result<Vec<f64>> {
    Ok(group_collapse(ds, g)?.into_vec())
}

/// `X^2(Y_g, theta_hat) = n_g sum_r (1 / p_r) sum_l (p_hat^(l,g)_r - p_hat^(g)_r)^2`
/// for the group at position `g`, with `p = p_fit`.
pub fn within_group_chisq(ds: &ClusterDataset, g: usize, p_fit: &[f64]) -> Result<f64> {
    if p_fit.len() != ds.cells() {
        return Err(Error::Dimension(format!(
            "fitted vector has {} cells, data has {}",
            p_fit.len(),
            ds.cells()
        )));
    }
    if let Some(r) = p_fit.iter().position(|&x| x.is_nan() || x <= 0.0) {
        return Err(Error::ZeroFittedCell(r));
    }
    let center = group_center(ds, g)?;
    let group = &ds.groups()[g];
    let dev = squared_deviations(group, &center);
    let n = group.cluster_size() as f64;
    Ok(n * dev.iter().zip(p_fit).map(|(d, p)| d / p).sum::<f64>())
}

/// Brier's per-group dispersion sum: as [`within_group_chisq`] but centered
/// and weighted by `p_hat^(g)`. Cells with `p_hat^(g)_r = 0` have zero
/// deviation in every cluster and contribute nothing.
fn brier_group_chisq(ds: &ClusterDataset, g: usize) -> Result<f64> {
    let center = group_center(ds, g)?;
    let group = &ds.groups()[g];
    let dev = squared_deviations(group, &center);
    let n = group.cluster_size() as f64;
    Ok(n * dev
        .iter()
        .zip(&center)
        .map(|(&d, &p)| if p > 0.0 { d / p } else { 0.0 })
        .sum::<f64>())
}

fn combine(
    ds: &ClusterDataset,
    method: DispersionMethod,
    lambda2: Option<f64>,
    mut group_chisq: impl FnMut(usize) -> Result<f64>,
) -> Result<DispersionEstimate> {
    let m = ds.cells() as f64;
    let mut warnings = Vec::new();
    let mut per_group = Vec::new();
    for (g, group) in ds.groups().iter().enumerate() {
        if group.len() < 2 {
            warnings.push(format!(
                "group {} has a single cluster and is excluded from the design effect",
                group.label()
            ));
            continue;
        }
        let x2 = group_chisq(g)?;
        per_group.push(GroupComponent {
            label: group.label(),
            cluster_size: group.cluster_size(),
            clusters: group.len(),
            weight: group.total_count() as f64,
            vartheta: x2 / ((group.len() as f64 - 1.0) * (m - 1.0)),
        });
    }
    if per_group.is_empty() {
        return Err(Error::NoDispersionGroups);
    }
    let mass: f64 = per_group.iter().map(|c| c.weight).sum();
    per_group.iter_mut().for_each(|c| c.weight /= mass);

    let vartheta = per_group.iter().map(|c| c.weight * c.vartheta).sum::<f64>();
    let effective_size = per_group
        .iter()
        .map(|c| c.weight * c.cluster_size as f64)
        .sum::<f64>();
    let rho2 = if effective_size > 1.0 {
        (vartheta - 1.0) / (effective_size - 1.0)
    } else {
        f64::NAN
    };
    if rho2 < 0.0 {
        warnings.push(format!(
            "estimated intracluster correlation {rho2:.6} is negative"
        ));
    }
    Ok(DispersionEstimate {
        vartheta,
        rho2,
        method,
        lambda2,
        per_group,
        effective_size,
        warnings,
    })
}

/// Semiparametric design effect: `sum_g w_g X^2(Y_g, theta_hat) / ((N_g - 1)(M - 1))`
/// with a single fit on the pooled data.
pub fn semiparametric_design_effect(
    ds: &ClusterDataset,
    fit: &FitResult,
) -> Result<DispersionEstimate> {
    combine(
        ds,
        DispersionMethod::Semiparametric,
        Some(fit.divergence.lambda()),
        |g| within_group_chisq(ds, g, &fit.fitted),
    )
}

/// Brier's nonparametric design effect.
pub fn brier_design_effect(ds: &ClusterDataset) -> Result<DispersionEstimate> {
    combine(ds, DispersionMethod::Brier, None, |g| {
        brier_group_chisq(ds, g)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    use crate::{
        divergence::PowerDivergence,
        estimation::{collapse, qmpe, FitOptions},
        model::LogLinearModel,
    };

    #[test]
    fn two_table_chisq_by_hand() {
        let ds = ClusterDataset::from_groups(vec![vec![vec![2, 0], vec![0, 2]]]).unwrap();
        assert_abs_diff_eq!(
            within_group_chisq(&ds, 0, &[0.5, 0.5]).unwrap(),
            4.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn identical_clusters_have_no_dispersion() {
        let ds = ClusterDataset::from_groups(vec![vec![vec![1, 2, 2]; 6]]).unwrap();
        assert_eq!(within_group_chisq(&ds, 0, &[0.2, 0.4, 0.4]).unwrap(), 0.0);
        let b = brier_design_effect(&ds).unwrap();
        assert_eq!(b.vartheta, 0.0);
        assert!(b.rho2_negative());
    }

    #[test]
    fn zero_fitted_cell_is_an_error() {
        let ds = ClusterDataset::from_groups(vec![vec![vec![2, 0], vec![0, 2]]]).unwrap();
        assert!(matches!(
            within_group_chisq(&ds, 0, &[1.0, 0.0]),
            Err(Error::ZeroFittedCell(1))
        ));
    }

    #[test]
    fn weights_for_three_groups() {
        let ds = ClusterDataset::from_groups(vec![
            vec![vec![5, 0]; 18],
            vec![vec![3, 0]; 2],
            vec![vec![7, 0]; 5],
        ])
        .unwrap();
        let w = weights_and_effective_size(&ds);
        assert_eq!(w.total_count, 131);
        assert_abs_diff_eq!(w.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn singleton_groups_are_excluded_and_weights_renormalized() {
        let ds = ClusterDataset::from_groups(vec![
            vec![vec![2, 1], vec![1, 2], vec![3, 0]],
            vec![vec![1, 4]],
        ])
        .unwrap();
        let b = brier_design_effect(&ds).unwrap();
        assert_eq!(b.per_group.len(), 1);
        assert_eq!(b.per_group[0].weight, 1.0);
        assert_eq!(b.effective_size, 3.0);
        assert_eq!(b.warnings.len(), 1);

        let only_singletons =
            ClusterDataset::from_groups(vec![vec![vec![1, 1]], vec![vec![2, 1]]]).unwrap();
        assert!(matches!(
            brier_design_effect(&only_singletons),
            Err(Error::NoDispersionGroups)
        ));
    }

    #[test]
    fn brier_is_chisq_with_group_centering() {
        let ds = ClusterDataset::from_groups(vec![vec![
            vec![2, 1, 1, 1],
            vec![0, 3, 1, 1],
            vec![1, 1, 2, 1],
            vec![3, 0, 0, 2],
        ]])
        .unwrap();
        let center = group_collapse(&ds, 0).unwrap();
        let x2 = within_group_chisq(&ds, 0, &center).unwrap();
        let b = brier_design_effect(&ds).unwrap();
        assert_abs_diff_eq!(b.vartheta, x2 / (3.0 * 3.0), epsilon = 1e-14);
    }

    #[test]
    fn constant_cells_ignore_centering_value() {
        let ds = ClusterDataset::from_groups(vec![vec![vec![2, 1, 0], vec![1, 2, 0]]]).unwrap();
        let a = within_group_chisq(&ds, 0, &[0.4, 0.5, 0.1]).unwrap();
        let b = within_group_chisq(&ds, 0, &[0.4, 0.5, 1e-6]).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
    }

    #[test]
    fn design_effect_relation_holds() {
        let ds = ClusterDataset::from_groups(vec![
            vec![vec![2, 1, 1, 1], vec![0, 3, 1, 1], vec![1, 1, 2, 1]],
            vec![vec![1, 1, 1], vec![0, 2, 1], vec![2, 0, 1]]
                .into_iter()
                .map(|mut v| {
                    v.push(0);
                    v
                })
                .collect(),
        ])
        .unwrap();
        let model = LogLinearModel::independence(2, 2).unwrap();
        let fit = qmpe(
            &collapse(&ds),
            &model,
            PowerDivergence::new(0.0).unwrap(),
            &FitOptions::default(),
        )
        .unwrap();
        let est = semiparametric_design_effect(&ds, &fit).unwrap();
        assert_abs_diff_eq!(
            est.vartheta,
            1.0 + (est.effective_size - 1.0) * est.rho2,
            epsilon = 1e-14
        );
        let w: f64 = est.per_group.iter().map(|c| c.weight).sum();
        assert_abs_diff_eq!(w, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn method_parsing() {
        assert_eq!(
            "semi".parse::<DispersionMethod>().unwrap(),
            DispersionMethod::Semiparametric
        );
        assert_eq!(
            "brier".parse::<DispersionMethod>().unwrap(),
            DispersionMethod::Brier
        );
        assert!("nope".parse::<DispersionMethod>().is_err());
    }
}
