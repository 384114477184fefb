//! Overdispersed multinomial generators and Monte Carlo size studies.
//!
//! Every generator produces counts with mean `n p` and covariance
//! `(1 + (n - 1) rho2) n (D_p - p p')`:
//!
//! * Dirichlet-multinomial: `q ~ Dirichlet(p (1 - rho2) / rho2)`, then
//!   `Multinomial(n, q)`.
//! * Random-clumped: a clump of `B ~ Binomial(n, rho)` individuals, with
//!   `rho = sqrt(rho2)`, all fall in one cell drawn from `p`; the other
//!   `n - B` are multinomial. The clumping probability is the square root of
//!   the intracluster correlation.
//! * n-inflated: with probability `rho2` all `n` individuals fall in one cell
//!   drawn from `p`, otherwise `Multinomial(n, p)`.
//!
//! Random streams are ChaCha8 keyed by the master seed, one stream per
//! replication, so replications can run in any order.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma};
use rayon::prelude::*;
use serde::Serialize;

use crate::dispersion::DispersionMethod;
use crate::divergence::PowerDivergence;
use crate::error::{Error, Result};
use crate::estimation::{ClusterDataset, FitOptions};
use crate::gof::{fmt_float, FittedTest};
use crate::model::{LogLinearModel, ProbabilityVector};

/// Below this intracluster correlation the Dirichlet concentration is
/// treated as infinite.
const DM_MIN_RHO2: f64 = 1e-12;

/// Master seed used when none is configured.
pub const DEFAULT_MASTER_SEED: u64 = 20_170_611;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum GeneratorKind {
    #[serde(rename = "multinomial")]
    Multinomial,
    #[serde(rename = "DM")]
    DirichletMultinomial,
    #[serde(rename = "RC")]
    RandomClumped,
    #[serde(rename = "NI")]
    NInflated,
}

impl GeneratorKind {
    pub const OVERDISPERSED: [GeneratorKind; 3] = [
        GeneratorKind::DirichletMultinomial,
        GeneratorKind::RandomClumped,
        GeneratorKind::NInflated,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GeneratorKind::Multinomial => "multinomial",
            GeneratorKind::DirichletMultinomial => "DM",
            GeneratorKind::RandomClumped => "RC",
            GeneratorKind::NInflated => "NI",
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial" | "M" => Ok(GeneratorKind::Multinomial),
            "DM" | "dm" => Ok(GeneratorKind::DirichletMultinomial),
            "RC" | "rc" => Ok(GeneratorKind::RandomClumped),
            "NI" | "ni" => Ok(GeneratorKind::NInflated),
            other => Err(Error::Invalid(format!("unknown distribution {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    kind: GeneratorKind,
    p: ProbabilityVector,
    rho2: f64,
    n: u64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, p: ProbabilityVector, rho2: f64, n: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho2) && !(kind == GeneratorKind::NInflated && rho2 == 1.0) {
            return Err(Error::Invalid(format!(
                "rho2 must lie in [0, 1), got {rho2}"
            )));
        }
        if n == 0 {
            return Err(Error::Invalid("cluster size must be at least 1".into()));
        }
        if kind == GeneratorKind::DirichletMultinomial && !p.is_strictly_positive() {
            return Err(Error::Invalid(
                "Dirichlet-multinomial needs strictly positive cell probabilities".into(),
            ));
        }
        Ok(Self { kind, p, rho2, n })
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    pub fn cluster_size(&self) -> u64 {
        self.n
    }

    pub fn with_cluster_size(&self, n: u64) -> Result<Self> {
        Self::new(self.kind, self.p.clone(), self.rho2, n)
    }

    /// `1 + (n - 1) rho2`.
    pub fn design_effect(&self) -> f64 {
        1.0 + (self.n as f64 - 1.0) * self.rho2
    }
}

/// `Multinomial(n, p)` by sequential conditional binomials.
pub fn sample_multinomial<R: Rng + ?Sized>(n: u64, p: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0u64; p.len()];
    let mut left = n;
    let mut mass = 1.0;
    let last = p.len() - 1;
    for (r, &pr) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if r == last {
            out[r] = left;
            break;
        }
        let prob = if mass > 0.0 {
            (pr / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let x = if prob >= 1.0 {
            left
        } else {
            Binomial::new(left, prob)
                .expect("probability clamped to [0, 1]")
                .sample(rng)
        };
        out[r] = x;
        left -= x;
        mass -= pr;
    }
    out
}

/// Index drawn from `p`.
fn sample_category<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (r, &pr) in p.iter().enumerate() {
        acc += pr;
        if u < acc {
            return r;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], p: &[f64], rng: &mut R) -> Vec<f64> {
    let mut q: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let total: f64 = q.iter().sum();
    if total > 0.0 {
        q.iter_mut().for_each(|x| *x /= total);
    } else {
        // every variate underflowed: vanishing concentration puts all mass
        // on one cell
        let r = sample_category(p, rng);
        q.iter_mut()
            .enumerate()
            .for_each(|(i, x)| *x = if i == r { 1.0 } else { 0.0 });
    }
    q
}

/// One cluster's count vector.
pub fn gen_cluster<R: Rng + ?Sized>(spec: &GeneratorSpec, rng: &mut R) -> Vec<u64> {
    let p = spec.p.as_slice();
    let n = spec.n;
    match spec.kind {
        GeneratorKind::Multinomial => sample_multinomial(n, p, rng),
        GeneratorKind::DirichletMultinomial => {
            if spec.rho2 < DM_MIN_RHO2 {
                return sample_multinomial(n, p, rng);
            }
            let scale = (1.0 - spec.rho2) / spec.rho2;
            let alpha: Vec<f64> = p.iter().map(|&x| x * scale).collect();
            let q = sample_dirichlet(&alpha, p, rng);
            sample_multinomial(n, &q, rng)
        }
        GeneratorKind::RandomClumped => {
            let rho = spec.rho2.sqrt();
            let clump_cell = sample_category(p, rng);
            let clump = Binomial::new(n, rho).expect("rho in [0, 1)").sample(rng);
            let mut counts = sample_multinomial(n - clump, p, rng);
            counts[clump_cell] += clump;
            counts
        }
        GeneratorKind::NInflated => {
            if rng.random::<f64>() < spec.rho2 {
                let mut counts = vec![0u64; p.len()];
                counts[sample_category(p, rng)] = n;
                counts
            } else {
                sample_multinomial(n, p, rng)
            }
        }
    }
}

/// Cluster layout of a study: `(n_g, N_g)` per group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GroupLayout {
    pub cluster_size: u64,
    pub clusters: usize,
}

/// Independent clusters for every group of `layout`. The cluster size in
/// `template` is replaced group by group.
pub fn gen_dataset<R: Rng + ?Sized>(
    layout: &[GroupLayout],
    template: &GeneratorSpec,
    rng: &mut R,
) -> Result<ClusterDataset> {
    let mut groups = Vec::with_capacity(layout.len());
    for g in layout {
        let spec = template.with_cluster_size(g.cluster_size)?;
        groups.push((0..g.clusters).map(|_| gen_cluster(&spec, rng)).collect());
    }
    ClusterDataset::from_groups(groups)
}

/// Random stream for replication `r` under `master_seed`.
pub fn replication_rng(master_seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replication);
    rng
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub true_theta: Vec<f64>,
    pub model: LogLinearModel,
    pub groups: Vec<GroupLayout>,
    pub rho2_grid: Vec<f64>,
    pub distributions: Vec<GeneratorKind>,
    /// `(lambda1, lambda2)`.
    pub lambda_pairs: Vec<(PowerDivergence, PowerDivergence)>,
    pub methods: Vec<DispersionMethod>,
    pub replications: usize,
    pub nominal_alpha: f64,
    pub master_seed: u64,
    pub fit: FitOptions,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Invalid("replications must be at least 1".into()));
        }
        if !(self.nominal_alpha > 0.0 && self.nominal_alpha < 1.0) {
            return Err(Error::Invalid(format!(
                "nominal alpha must be in (0, 1), got {}",
                self.nominal_alpha
            )));
        }
        if self.groups.is_empty()
            || self
                .groups
                .iter()
                .any(|g| g.clusters == 0 || g.cluster_size == 0)
        {
            return Err(Error::Invalid(
                "every group needs a positive size and count".into(),
            ));
        }
        if self.rho2_grid.is_empty()
            || self.distributions.is_empty()
            || self.lambda_pairs.is_empty()
            || self.methods.is_empty()
        {
            return Err(Error::Invalid("study grids must be nonempty".into()));
        }
        self.model.probabilities(&self.true_theta)?;
        Ok(())
    }

    /// Number of rows [`size_study`] returns.
    pub fn rows(&self) -> usize {
        self.distributions.len()
            * self.rho2_grid.len()
            * self.lambda_pairs.len()
            * self.methods.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeEstimate {
    pub distribution: GeneratorKind,
    pub rho2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub method: DispersionMethod,
    pub estimated_size: f64,
    pub mc_se: f64,
    pub failures: usize,
    pub replications: usize,
}

/// Per-replication outcomes, indexed like the output rows: `Some(reject)`
/// or `None` for a failed fit.
fn run_replication(cfg: &StudyConfig, p: &ProbabilityVector, r: usize) -> Vec<Option<bool>> {
    let mut rng = replication_rng(cfg.master_seed, r as u64);
    let mut out = Vec::with_capacity(cfg.rows());
    let mut lambda2s: Vec<PowerDivergence> = Vec::new();
    for &(_, l2) in &cfg.lambda_pairs {
        if !lambda2s.contains(&l2) {
            lambda2s.push(l2);
        }
    }
    for &kind in &cfg.distributions {
        for &rho2 in &cfg.rho2_grid {
            let ds = GeneratorSpec::new(kind, p.clone(), rho2, cfg.groups[0].cluster_size)
                .and_then(|spec| gen_dataset(&cfg.groups, &spec, &mut rng));
            // fits keyed by (lambda2, method)
            let fits: Vec<Vec<Option<FittedTest>>> = lambda2s
                .iter()
                .map(|&l2| {
                    cfg.methods
                        .iter()
                        .map(|&m| {
                            ds.as_ref().ok().and_then(|ds| {
                                FittedTest::new(ds, &cfg.model, l2, m, &cfg.fit).ok()
                            })
                        })
                        .collect()
                })
                .collect();
            for &(l1, l2) in &cfg.lambda_pairs {
                let k = lambda2s
                    .iter()
                    .position(|&x| x == l2)
                    .expect("collected above");
                for fit in &fits[k] {
                    out.push(
                        fit.as_ref()
                            .and_then(|t| t.statistic(l1).ok())
                            .map(|res| res.p_value < cfg.nominal_alpha),
                    );
                }
            }
        }
    }
    out
}

/// Estimated rejection rates at the nominal level over `R` replications.
pub fn size_study(cfg: &StudyConfig) -> Result<Vec<SizeEstimate>> {
    cfg.validate()?;
    let p = cfg.model.probabilities(&cfg.true_theta)?;
    let rows = cfg.rows();
    let (rejections, failures) = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, &p, r))
        .fold(
            || (vec![0usize; rows], vec![0usize; rows]),
            |(mut rej, mut fail), outcome| {
                for (i, o) in outcome.into_iter().enumerate() {
                    match o {
                        Some(true) => rej[i] += 1,
                        Some(false) => {}
                        None => fail[i] += 1,
                    }
                }
                (rej, fail)
            },
        )
        .reduce(
            || (vec![0usize; rows], vec![0usize; rows]),
            |(mut a, mut b), (c, d)| {
                a.iter_mut().zip(c).for_each(|(x, y)| *x += y);
                b.iter_mut().zip(d).for_each(|(x, y)| *x += y);
                (a, b)
            },
        );

    let mut out = Vec::with_capacity(rows);
    let mut i = 0;
    for &kind in &cfg.distributions {
        for &rho2 in &cfg.rho2_grid {
            for &(l1, l2) in &cfg.lambda_pairs {
                for &method in &cfg.methods {
                    let ok = cfg.replications - failures[i];
                    let size = if ok > 0 {
                        rejections[i] as f64 / ok as f64
                    } else {
                        f64::NAN
                    };
                    out.push(SizeEstimate {
                        distribution: kind,
                        rho2,
                        lambda1: l1.lambda(),
                        lambda2: l2.lambda(),
                        method,
                        estimated_size: size,
                        mc_se: (size * (1.0 - size) / ok as f64).sqrt(),
                        failures: failures[i],
                        replications: cfg.replications,
                    });
                    i += 1;
                }
            }
        }
    }
    Ok(out)
}

pub const STUDY_CSV_HEADER: &str =
    "distribution,rho2,lambda1,lambda2,method,estimated_size,mc_se,failures";

pub fn write_study_csv<W: Write>(rows: &[SizeEstimate], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{STUDY_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.distribution,
            r.rho2,
            r.lambda1,
            r.lambda2,
            r.method,
            fmt_float(r.estimated_size),
            fmt_float(r.mc_se),
            r.failures
        )?;
    }
    Ok(())
}
