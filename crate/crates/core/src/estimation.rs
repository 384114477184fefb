//! Clustered frequency tables, their nonparametric collapse, and
//! quasi-minimum power-divergence estimation of log-linear parameters.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::divergence::PowerDivergence;
use crate::error::{Error, Result};
use crate::model::{LogLinearModel, ProbabilityVector};

/// One cluster's frequency table, labelled by group and position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterTable {
    pub group: usize,
    pub cluster: usize,
    pub counts: Vec<u64>,
}

/// Clusters sharing one cluster size `n_g`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterGroup {
    label: usize,
    size: u64,
    tables: Vec<Vec<u64>>,
}

impl ClusterGroup {
    /// The group label as it appears in the input data.
    pub fn label(&self) -> usize {
        self.label
    }

    /// Cluster size `n_g`.
    pub fn cluster_size(&self) -> u64 {
        self.size
    }

    /// Number of clusters `N_g`.
    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn tables(&self) -> &[Vec<u64>] {
        &self.tables
    }

    /// `n_g N_g`.
    pub fn total_count(&self) -> u64 {
        self.size * self.tables.len() as u64
    }

    /// Cell totals over all clusters of the group.
    pub fn cell_totals(&self) -> Vec<u64> {
        let m = self.tables.first().map_or(0, Vec::len);
        let mut totals = vec![0u64; m];
        for t in &self.tables {
            for (acc, &c) in totals.iter_mut().zip(t) {
                *acc += c;
            }
        }
        totals
    }
}

/// Frequency tables of `N` clusters over `M` cells, organized by cluster size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterDataset {
    cells: usize,
    groups: Vec<ClusterGroup>,
}

impl ClusterDataset {
    /// Groups tables by their `group` label (ascending). Within a group the
    /// input order of tables is kept.
    pub fn new(tables: Vec<ClusterTable>) -> Result<Self> {
        let cells = match tables.first() {
            Some(t) => t.counts.len(),
            None => return Err(Error::Invalid("dataset has no cluster tables".into())),
        };
        if cells < 2 {
            return Err(Error::Invalid("tables need at least two cells".into()));
        }
        let mut by_label: BTreeMap<usize, Vec<Vec<u64>>> = BTreeMap::new();
        for t in tables {
            if t.counts.len() != cells {
                return Err(Error::Dimension(format!(
                    "table (g={}, l={}) has {} cells, expected {cells}",
                    t.group,
                    t.cluster,
                    t.counts.len()
                )));
            }
            by_label.entry(t.group).or_default().push(t.counts);
        }
        let groups = by_label
            .into_iter()
            .map(|(label, tables)| Self::make_group(label, tables))
            .collect::<Result<Vec<_>>>()?;
        let ds = Self { cells, groups };
        ds.check_distinct_sizes()?;
        Ok(ds)
    }

    /// Builds a dataset from per-group count tables; labels are `1..=G`.
    pub fn from_groups(groups: Vec<Vec<Vec<u64>>>) -> Result<Self> {
        let tables = groups
            .into_iter()
            .enumerate()
            .flat_map(|(g, ts)| {
                ts.into_iter()
                    .enumerate()
                    .map(move |(l, counts)| ClusterTable {
                        group: g + 1,
                        cluster: l + 1,
                        counts,
                    })
            })
            .collect();
        Self::new(tables)
    }

    fn make_group(label: usize, tables: Vec<Vec<u64>>) -> Result<ClusterGroup> {
        let size: u64 = tables[0].iter().sum();
        if size == 0 {
            return Err(Error::Invalid(format!("group {label} has empty clusters")));
        }
        if let Some(l) = tables.iter().position(|t| t.iter().sum::<u64>() != size) {
            return Err(Error::Invalid(format!(
                "group {label}: cluster {} has size {}, other clusters have size {size}",
                l + 1,
                tables[l].iter().sum::<u64>()
            )));
        }
        Ok(ClusterGroup {
            label,
            size,
            tables,
        })
    }

    fn check_distinct_sizes(&self) -> Result<()> {
        for (i, a) in self.groups.iter().enumerate() {
            if let Some(b) = self.groups[i + 1..].iter().find(|b| b.size == a.size) {
                return Err(Error::Invalid(format!(
                    "groups {} and {} share cluster size {}; merge them into one group",
                    a.label, b.label, a.size
                )));
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn groups(&self) -> &[ClusterGroup] {
        &self.groups
    }

    /// Total number of clusters `N`.
    pub fn num_clusters(&self) -> usize {
        self.groups.iter().map(ClusterGroup::len).sum()
    }

    /// `sum_g n_g N_g`, the number of sampled individuals.
    pub fn total_count(&self) -> u64 {
        self.groups.iter().map(ClusterGroup::total_count).sum()
    }

    /// Cell totals `Y` over every cluster.
    pub fn cell_totals(&self) -> Vec<u64> {
        let mut totals = vec![0u64; self.cells];
        for g in &self.groups {
            for (acc, c) in totals.iter_mut().zip(g.cell_totals()) {
                *acc += c;
            }
        }
        totals
    }

    /// All tables with their labels, in group order.
    pub fn tables(&self) -> impl Iterator<Item = ClusterTable> + '_ {
        self.groups.iter().flat_map(|g| {
            g.tables.iter().enumerate().map(move |(l, t)| ClusterTable {
                group: g.label,
                cluster: l + 1,
                counts: t.clone(),
            })
        })
    }
}

/// Pooled nonparametric estimate `p_hat = Y / sum_h n_h N_h`.
pub fn collapse(ds: &ClusterDataset) -> ProbabilityVector {
    let total = ds.total_count() as f64;
    ProbabilityVector::from_normalized(
        ds.cell_totals()
            .into_iter()
            .map(|c| c as f64 / total)
            .collect(),
    )
}

/// Group-level estimate `p_hat^(g) = (1 / (n_g N_g)) sum_l Y^(g,l)` for the
/// group at position `g` (0-based, ascending label order).
pub fn group_collapse(ds: &ClusterDataset, g: usize) -> Result<ProbabilityVector> {
    let group = ds.groups.get(g).ok_or_else(|| {
        Error::Invalid(format!(
            "group index {g} out of range (G = {})",
            ds.groups.len()
        ))
    })?;
    let total = group.total_count() as f64;
    Ok(ProbabilityVector::from_normalized(
        group
            .cell_totals()
            .into_iter()
            .map(|c| c as f64 / total)
            .collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    /// Extra fits from random starting points; differing optima mark the
    /// result non-unique.
    pub restarts: usize,
    pub restart_seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-10,
            step_tol: 1e-12,
            restarts: 0,
            restart_seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub theta: Vec<f64>,
    /// `p(theta_hat)`.
    pub fitted: ProbabilityVector,
    pub divergence: PowerDivergence,
    pub divergence_at_min: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub non_unique: bool,
}

/// Objective, gradient and Hessian in `theta` of `d_lambda(q, p(theta))`.
struct Objective<'a> {
    model: &'a LogLinearModel,
    div: PowerDivergence,
    q: &'a [f64],
}

impl Objective<'_> {
    fn value(&self, theta: &[f64]) -> f64 {
        let p = self.model.probabilities_unchecked(theta);
        self.div.divergence_closed_form(self.q, &p)
    }

    /// With `eta = W theta`, `p = softmax(eta)`, `g = dd/dp`, `h = g - p'g`:
    /// `dd/deta = p * h` and
    /// `d2d/deta2 = S diag(d2d/dp2) S + diag(p * h) - u p' - p u'`
    /// where `S = D_p - p p'` and `u = p * h`.
    fn derivatives(&self, theta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let w = self.model.design();
        let m = w.nrows();
        let p = self.model.probabilities_unchecked(theta);
        let value = self.div.divergence_closed_form(self.q, &p);
        let mut g = vec![0.0; m];
        let mut hd = vec![0.0; m];
        self.div.grad_wrt_reference(self.q, &p, &mut g);
        self.div.hess_diag_wrt_reference(self.q, &p, &mut hd);
        let gbar: f64 = g.iter().zip(p.iter()).map(|(a, b)| a * b).sum();
        let u = DVector::from_iterator(m, p.iter().zip(&g).map(|(&pi, &gi)| pi * (gi - gbar)));
        let pv = DVector::from_column_slice(&p);
        let sigma = DMatrix::from_diagonal(&pv) - &pv * pv.transpose();
        let a = &sigma * DMatrix::from_diagonal(&DVector::from_vec(hd)) * &sigma
            + DMatrix::from_diagonal(&u)
            - &u * pv.transpose()
            - &pv * u.transpose();
        let grad = w.transpose() * &u;
        let hess = w.transpose() * a * w;
        (value, grad, hess)
    }
}

struct Minimum {
    theta: Vec<f64>,
    value: f64,
    iterations: usize,
    gradient_norm: f64,
}

/// Damped Newton with an Armijo backtracking line search. Falls back to
/// steepest descent when the Hessian is not positive definite.
fn minimize(obj: &Objective<'_>, start: Vec<f64>, opts: &FitOptions) -> Result<Minimum> {
    const ARMIJO: f64 = 1e-4;
    const ROUNDING: f64 = 1e-13;
    let mut theta = DVector::from_vec(start);
    let (mut value, mut grad, mut hess) = obj.derivatives(theta.as_slice());
    for iter in 0..opts.max_iter {
        let gnorm = grad.norm();
        if gnorm <= opts.grad_tol {
            return Ok(Minimum {
                theta: theta.data.into(),
                value,
                iterations: iter,
                gradient_norm: gnorm,
            });
        }
        let newton = hess
            .clone()
            .cholesky()
            .map(|c| -c.solve(&grad))
            .filter(|d| d.dot(&grad) < 0.0);
        let dir = newton.unwrap_or_else(|| -&grad);
        let slope = dir.dot(&grad);

        let mut alpha = 1.0;
        let mut converged_by_step = false;
        let candidate = loop {
            let step = &dir * alpha;
            let trial = &theta + &step;
            let trial_value = obj.value(trial.as_slice());
            let sufficient = trial_value <= value + ARMIJO * alpha * slope;
            // Near the minimum the objective differences drop below rounding;
            // fall back to requiring a smaller gradient.
            let within_rounding = || {
                trial_value <= value + ROUNDING * value.abs().max(1.0)
                    && obj.derivatives(trial.as_slice()).1.norm() < gnorm
            };
            if trial_value.is_finite() && (sufficient || within_rounding()) {
                if step.norm() <= opts.step_tol {
                    converged_by_step = true;
                }
                break Some(trial);
            }
            if step.norm() <= opts.step_tol {
                converged_by_step = true;
                break None;
            }
            alpha *= 0.5;
        };
        if let Some(next) = candidate {
            theta = next;
            (value, grad, hess) = obj.derivatives(theta.as_slice());
        }
        if converged_by_step {
            return Ok(Minimum {
                theta: theta.data.into(),
                value,
                iterations: iter + 1,
                gradient_norm: grad.norm(),
            });
        }
    }
    let gnorm = grad.norm();
    if gnorm <= opts.grad_tol {
        return Ok(Minimum {
            theta: theta.data.into(),
            value,
            iterations: opts.max_iter,
            gradient_norm: gnorm,
        });
    }
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        gradient_norm: gnorm,
        best_theta: theta.data.into(),
    })
}

/// Quasi-minimum power-divergence estimate: the `theta` minimizing
/// `d_lambda(p_hat, p(theta))`, started from `theta = 0`.
pub fn qmpe(
    p_hat: &ProbabilityVector,
    model: &LogLinearModel,
    divergence: PowerDivergence,
    opts: &FitOptions,
) -> Result<FitResult> {
    if p_hat.len() != model.cells() {
        return Err(Error::Dimension(format!(
            "probability vector has {} cells, model has {}",
            p_hat.len(),
            model.cells()
        )));
    }
    if divergence.lambda() <= -1.0 {
        if let Some(r) = p_hat.iter().position(|&x| x == 0.0) {
            return Err(Error::Infeasible(format!(
                "lambda = {} is undefined with the empty cell {r} in the pooled estimate",
                divergence.lambda()
            )));
        }
    }
    let obj = Objective {
        model,
        div: divergence,
        q: p_hat.as_slice(),
    };
    let best = minimize(&obj, vec![0.0; model.params()], opts)?;
    let fitted = model.probabilities_unchecked(&best.theta);

    let mut non_unique = false;
    if opts.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.restart_seed);
        for _ in 0..opts.restarts {
            let start: Vec<f64> = (0..model.params())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            if let Ok(other) = minimize(&obj, start, opts) {
                let p = model.probabilities_unchecked(&other.theta);
                let gap = p
                    .iter()
                    .zip(fitted.iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if gap > 1e-6 {
                    non_unique = true;
                }
            }
        }
    }

    Ok(FitResult {
        theta: best.theta,
        fitted,
        divergence,
        divergence_at_min: best.value,
        iterations: best.iterations,
        gradient_norm: best.gradient_norm,
        non_unique,
    })
}

/// Closed-form maximum likelihood fit of the two-way independence model:
/// the outer product of the row and column margins of `p_hat`.
pub fn independence_mle(
    p_hat: &ProbabilityVector,
    rows: usize,
    cols: usize,
) -> Result<ProbabilityVector> {
    if rows * cols != p_hat.len() {
        return Err(Error::Dimension(format!(
            "{rows} x {cols} table does not match {} cells",
            p_hat.len()
        )));
    }
    let mut r = vec![0.0; rows];
    let mut c = vec![0.0; cols];
    for i in 0..rows {
        for j in 0..cols {
            let v = p_hat[i * cols + j];
            r[i] += v;
            c[j] += v;
        }
    }
    let p = (0..rows * cols)
        .map(|k| r[k / cols] * c[k % cols])
        .collect();
    Ok(ProbabilityVector::from_normalized(p))
}
