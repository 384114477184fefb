//! The `cgof` command line.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::data::{housing, read_dataset_file, read_design_file};
use crate::dispersion::DispersionMethod;
use crate::divergence::PowerDivergence;
use crate::error::{Error, Result};
use crate::estimation::{ClusterDataset, FitOptions};
use crate::gof::{gof_test, table_scan};
use crate::model::LogLinearModel;
use crate::reproduce::reproduce;
use crate::simgen::{
    size_study, write_study_csv, GeneratorKind, GroupLayout, StudyConfig, DEFAULT_MASTER_SEED,
};

/// Environment variable overriding the default master seed of `simulate`.
pub const SEED_ENV: &str = "CGOF_SEED";

pub const DEFAULT_GRID: &str = "-0.5,0,2/3,1,2";

#[derive(Debug, Parser)]
#[command(
    name = "cgof",
    version,
    about = "Overdispersed goodness-of-fit tests for clustered contingency tables"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one test and print the result as JSON.
    Test(TestArgs),
    /// Compute statistics over a lambda grid.
    Scan(ScanArgs),
    /// Run a Monte Carlo size study from a config file.
    Simulate(SimulateArgs),
    /// Recompute the housing tables and diff them against the published values.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Dataset CSV with header g,l,y1,...,yM.
    #[arg(long)]
    data: PathBuf,
    /// Headerless design matrix CSV (M rows, M0 columns).
    #[arg(long, conflicts_with = "independence")]
    design: Option<PathBuf>,
    /// Two-way independence model for an I x J table.
    #[arg(long, num_args = 2, value_names = ["I", "J"])]
    independence: Option<Vec<usize>>,
}

impl ModelArgs {
    fn load(&self) -> Result<(ClusterDataset, LogLinearModel)> {
        let ds = read_dataset_file(&self.data)?;
        let model = match (&self.design, &self.independence) {
            (Some(path), _) => read_design_file(path)?,
            (None, Some(ij)) => LogLinearModel::independence(ij[0], ij[1])?,
            (None, None) => {
                return Err(Error::Invalid(
                    "one of --design or --independence is required".into(),
                ))
            }
        };
        Ok((ds, model))
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Semi,
    Brier,
}

impl From<MethodArg> for DispersionMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Semi => DispersionMethod::Semiparametric,
            MethodArg::Brier => DispersionMethod::Brier,
        }
    }
}

fn parse_lambda(s: &str) -> std::result::Result<PowerDivergence, String> {
    PowerDivergence::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
struct TestArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_lambda)]
    lambda1: PowerDivergence,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_lambda)]
    lambda2: PowerDivergence,
    #[arg(long, value_enum, default_value = "semi")]
    method: MethodArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScanFormat {
    Csv,
    Json,
    Table,
}

#[derive(Debug, Args)]
struct ScanArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated lambda values for both axes.
    #[arg(long, allow_hyphen_values = true, default_value = DEFAULT_GRID)]
    grid: String,
    /// Separate grid for the estimator index lambda2.
    #[arg(long, allow_hyphen_values = true)]
    lambda2_grid: Option<String>,
    #[arg(long, value_enum, default_value = "semi")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "csv")]
    format: ScanFormat,
    /// Write to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// TOML study configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    /// Dataset to use instead of the bundled housing fixture.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Print the diff report as JSON.
    #[arg(long)]
    json: bool,
}

fn parse_grid(s: &str) -> Result<Vec<PowerDivergence>> {
    let grid = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(PowerDivergence::parse)
        .collect::<Result<Vec<_>>>()?;
    if grid.is_empty() {
        return Err(Error::Invalid("lambda grid is empty".into()));
    }
    Ok(grid)
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn to_json(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn cmd_test(args: &TestArgs) -> Result<i32> {
    let (ds, model) = args.model.load()?;
    let res = gof_test(
        &ds,
        &model,
        args.lambda1,
        args.lambda2,
        args.method.into(),
        &FitOptions::default(),
    )?;
    println!("{}", to_json(&res));
    Ok(0)
}

fn cmd_scan(args: &ScanArgs) -> Result<i32> {
    let (ds, model) = args.model.load()?;
    let g1 = parse_grid(&args.grid)?;
    let g2 = match &args.lambda2_grid {
        Some(s) => parse_grid(s)?,
        None => g1.clone(),
    };
    let table = table_scan(
        &ds,
        &model,
        &g1,
        &g2,
        args.method.into(),
        &FitOptions::default(),
    )?;
    let mut out = output(&args.out)?;
    match args.format {
        ScanFormat::Csv => table.write_csv(&mut out)?,
        ScanFormat::Json => writeln!(out, "{}", to_json(&table))?,
        ScanFormat::Table => write!(out, "{}", table.render())?,
    }
    out.flush()?;
    Ok(0)
}

/// Flat TOML mirror of [`StudyConfig`].
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyFile {
    pub theta: Vec<f64>,
    pub independence: Option<[usize; 2]>,
    /// Design CSV path, relative to the config file.
    pub design: Option<PathBuf>,
    pub cluster_sizes: Vec<u64>,
    pub cluster_counts: Vec<usize>,
    pub rho2: Vec<f64>,
    #[serde(default = "default_distributions")]
    pub distributions: Vec<String>,
    /// `lambda1,lambda2` pairs, e.g. `"2/3,0"`.
    pub lambda_pairs: Vec<String>,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    pub replications: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub seed: Option<u64>,
}

fn default_distributions() -> Vec<String> {
    GeneratorKind::OVERDISPERSED
        .iter()
        .map(|k| k.to_string())
        .collect()
}

fn default_methods() -> Vec<String> {
    vec!["semi".into()]
}

fn default_alpha() -> f64 {
    0.05
}

/// Master seed precedence: config file, then `CGOF_SEED`, then
/// [`DEFAULT_MASTER_SEED`].
fn resolve_seed(configured: Option<u64>) -> Result<u64> {
    if let Some(s) = configured {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(DEFAULT_MASTER_SEED),
    }
}

impl StudyFile {
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: name.to_string(),
            line: 0,
            msg: e.to_string(),
        })
    }

    pub fn into_config(self, base_dir: &Path) -> Result<StudyConfig> {
        let model = match (&self.independence, &self.design) {
            (Some([i, j]), None) => LogLinearModel::independence(*i, *j)?,
            (None, Some(path)) => read_design_file(&base_dir.join(path))?,
            _ => {
                return Err(Error::Invalid(
                    "set exactly one of independence or design".into(),
                ))
            }
        };
        if self.cluster_sizes.len() != self.cluster_counts.len() {
            return Err(Error::Invalid(
                "cluster_sizes and cluster_counts must have equal length".into(),
            ));
        }
        let groups = self
            .cluster_sizes
            .iter()
            .zip(&self.cluster_counts)
            .map(|(&cluster_size, &clusters)| GroupLayout {
                cluster_size,
                clusters,
            })
            .collect();
        let distributions = self
            .distributions
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<GeneratorKind>>>()?;
        let lambda_pairs = self
            .lambda_pairs
            .iter()
            .map(|s| {
                let (a, b) = s.split_once(',').ok_or_else(|| {
                    Error::Invalid(format!("lambda pair {s:?} needs the form l1,l2"))
                })?;
                Ok((PowerDivergence::parse(a)?, PowerDivergence::parse(b)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let methods = self
            .methods
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<DispersionMethod>>>()?;
        let cfg = StudyConfig {
            true_theta: self.theta,
            model,
            groups,
            rho2_grid: self.rho2,
            distributions,
            lambda_pairs,
            methods,
            replications: self.replications,
            nominal_alpha: self.alpha,
            master_seed: resolve_seed(self.seed)?,
            fit: FitOptions::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn load_study(path: &Path) -> Result<StudyConfig> {
    let text = std::fs::read_to_string(path)?;
    let file = StudyFile::parse(&text, &path.display().to_string())?;
    file.into_config(path.parent().unwrap_or(Path::new(".")))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let cfg = load_study(&args.config)?;
    let rows = size_study(&cfg)?;
    let mut out = output(&args.out)?;
    writeln!(
        out,
        "# master_seed={} replications={} alpha={}",
        cfg.master_seed, cfg.replications, cfg.nominal_alpha
    )?;
    write_study_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(0)
}

fn cmd_reproduce(args: &ReproduceArgs) -> Result<i32> {
    let ds = match &args.data {
        Some(p) => read_dataset_file(p)?,
        None => housing(),
    };
    let (semi, brier, report) = reproduce(&ds)?;
    if args.json {
        println!("{}", to_json(&report));
    } else {
        println!("semiparametric design effect\n{}", semi.render());
        println!("Brier design effect\n{}", brier.render());
        let total = report.checks.len();
        let bad: Vec<_> = report.mismatches().collect();
        for c in &bad {
            let l1 = c.lambda1.map_or("-".to_string(), |l| format!("{l:.4}"));
            let got = c
                .computed
                .map_or("error".to_string(), |v| format!("{v:.6}"));
            println!(
                "MISMATCH {} {} lambda1={} lambda2={:.4}: expected {}, computed {}",
                c.method, c.quantity, l1, c.lambda2, c.expected, got
            );
        }
        println!("{} of {} cells match", total - bad.len(), total);
    }
    Ok(if report.passed() { 0 } else { 1 })
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let res = match &cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Reproduce(a) => cmd_reproduce(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = parse_grid(DEFAULT_GRID).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g[2].lambda(), 2.0 / 3.0);
        assert!(parse_grid("").is_err());
        assert!(parse_grid(" , ").is_err());
    }

    #[test]
    fn study_file_rejects_unknown_keys() {
        let text = "theta=[0.0]\ncluster_sizes=[2]\ncluster_counts=[2]\nrho2=[0.0]\nlambda_pairs=[\"1,0\"]\nreplications=1\nbogus=3\n";
        assert!(StudyFile::parse(text, "x").is_err());
    }

    #[test]
    fn study_file_defaults() {
        let text = r#"
theta = [0.1, 0.2, 0.4, 0.3]
independence = [3, 3]
cluster_sizes = [5, 3, 7]
cluster_counts = [18, 2, 5]
rho2 = [0.0, 0.1]
lambda_pairs = ["2/3,0", "0,0"]
replications = 3
seed = 11
"#;
        let cfg = StudyFile::parse(text, "x")
            .unwrap()
            .into_config(Path::new("."))
            .unwrap();
        assert_eq!(cfg.master_seed, 11);
        assert_eq!(cfg.distributions.len(), 3);
        assert_eq!(cfg.methods, vec![DispersionMethod::Semiparametric]);
        assert_eq!(cfg.nominal_alpha, 0.05);
        assert_eq!(cfg.rows(), 3 * 2 * 2);
    }
}
