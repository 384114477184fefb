use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/housing.csv")
}

fn cgof(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgof"))
        .args(args)
        .env_remove("CGOF_SEED")
        .output()
        .expect("spawn cgof")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json_test(method: &str, l1: &str, l2: &str) -> Value {
    let data = fixture();
    let o = cgof(&[
        "test",
        "--data",
        data.to_str().unwrap(),
        "--independence",
        "3",
        "3",
        "--lambda1",
        l1,
        "--lambda2",
        l2,
        "--method",
        method,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    serde_json::from_str(&stdout(&o)).unwrap()
}

#[test]
fn test_command_reports_semiparametric_likelihood_ratio() {
    let v = json_test("semi", "0", "0");
    assert!((v["statistic"].as_f64().unwrap() - 9.7014).abs() < 5e-4);
    assert!((v["p_value"].as_f64().unwrap() - 0.0458).abs() < 5e-4);
    assert!((v["vartheta"].as_f64().unwrap() - 1.5869).abs() < 5e-4);
    assert_eq!(v["df"].as_u64(), Some(4));
    assert_eq!(v["method"].as_str(), Some("semiparametric"));
}

#[test]
fn test_command_reports_brier() {
    let v = json_test("brier", "0", "0");
    assert!((v["statistic"].as_f64().unwrap() - 14.4521).abs() < 5e-4);
    assert!((v["p_value"].as_f64().unwrap() - 0.0060).abs() < 5e-4);
}

#[test]
fn negative_lambda_and_fraction_arguments_parse() {
    let v = json_test("semi", "-0.5", "2/3");
    assert!((v["lambda2"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!((v["lambda1"].as_f64().unwrap() + 0.5).abs() < 1e-15);
}

#[test]
fn malformed_dataset_cites_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "g,l,y1,y2,y3,y4\n1,1,1,1,1,1\n1,2,1,-1,2,1\n").unwrap();
    let o = cgof(&[
        "test",
        "--data",
        path.to_str().unwrap(),
        "--independence",
        "2",
        "2",
        "--lambda1",
        "1",
        "--lambda2",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn scan_writes_csv_with_header() {
    let data = fixture();
    let o = cgof(&[
        "scan",
        "--data",
        data.to_str().unwrap(),
        "--independence",
        "3",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("lambda1,lambda2,method,statistic,df,p_value,vartheta")
    );
    assert_eq!(lines.count(), 25);
}

#[test]
fn scan_formats_and_output_file() {
    let data = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scan.json");
    let o = cgof(&[
        "scan",
        "--data",
        data.to_str().unwrap(),
        "--independence",
        "3",
        "3",
        "--grid",
        "1,0",
        "--lambda2-grid",
        "0",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["cells"].as_array().unwrap().len(), 2);

    let o = cgof(&[
        "scan",
        "--data",
        data.to_str().unwrap(),
        "--independence",
        "3",
        "3",
        "--method",
        "brier",
        "--format",
        "table",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("14.4521"));
}

#[test]
fn empty_grid_is_a_usage_error() {
    let data = fixture();
    let o = cgof(&[
        "scan",
        "--data",
        data.to_str().unwrap(),
        "--independence",
        "3",
        "3",
        "--grid",
        "",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty"));
}

#[test]
fn missing_model_is_reported() {
    let data = fixture();
    let o = cgof(&[
        "test",
        "--data",
        data.to_str().unwrap(),
        "--lambda1",
        "1",
        "--lambda2",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn design_file_matches_built_in_independence() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("w.csv");
    let w = clustered_gof::LogLinearModel::independence(3, 3).unwrap();
    let text: String = w
        .design()
        .row_iter()
        .map(|r| {
            r.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
                + "\n"
        })
        .collect();
    std::fs::write(&design, text).unwrap();
    let data = fixture();
    let o = cgof(&[
        "test",
        "--data",
        data.to_str().unwrap(),
        "--design",
        design.to_str().unwrap(),
        "--lambda1",
        "0",
        "--lambda2",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["statistic"].as_f64().unwrap() - 9.7014).abs() < 5e-4);
}

#[test]
fn reproduce_passes_on_fixture() {
    let o = cgof(&["reproduce"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("106 of 106 cells match"));

    let o = cgof(&["reproduce", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["checks"].as_array().unwrap().len() == 106);
}

#[test]
fn reproduce_fails_on_perturbed_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("perturbed.csv");
    let text = std::fs::read_to_string(fixture()).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // move one count between cells in the first cluster
    let mut fields: Vec<u64> = lines[1].split(',').map(|f| f.parse().unwrap()).collect();
    let (from, to) = if fields[2] > 0 { (2, 3) } else { (3, 2) };
    assert!(fields[from] > 0);
    fields[from] -= 1;
    fields[to] += 1;
    lines[1] = fields
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(",");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = cgof(&["reproduce", "--data", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("MISMATCH"));
}

fn study(dir: &std::path::Path, seed: Option<u64>) -> PathBuf {
    let path = dir.join("study.toml");
    let mut text = String::from(
        "theta = [0.1, -0.2, 0.3, 0.05]\nindependence = [3, 3]\ncluster_sizes = [5]\n\
         cluster_counts = [25]\nrho2 = [0.0, 0.2]\nlambda_pairs = [\"2/3,0\", \"0,0\"]\n\
         methods = [\"semi\", \"brier\"]\nreplications = 4\n",
    );
    if let Some(s) = seed {
        text.push_str(&format!("seed = {s}\n"));
    }
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = study(dir.path(), Some(9));
    let o = cgof(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("# master_seed=9 replications=4 alpha=0.05")
    );
    assert_eq!(
        lines.next(),
        Some("distribution,rho2,lambda1,lambda2,method,estimated_size,mc_se,failures")
    );
    // 3 default distributions x 2 rho2 x 2 pairs x 2 methods
    assert_eq!(lines.count(), 24);

    let again = cgof(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(stdout(&again), text);
}

#[test]
fn simulate_seed_defaults_and_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = study(dir.path(), None);
    let o = cgof(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(stdout(&o).starts_with(&format!(
        "# master_seed={} ",
        clustered_gof::simgen::DEFAULT_MASTER_SEED
    )));

    let o = Command::new(env!("CARGO_BIN_EXE_cgof"))
        .args(["simulate", "--config", cfg.to_str().unwrap()])
        .env("CGOF_SEED", "123")
        .output()
        .unwrap();
    assert!(stdout(&o).starts_with("# master_seed=123 "));

    let o = Command::new(env!("CARGO_BIN_EXE_cgof"))
        .args(["simulate", "--config", cfg.to_str().unwrap()])
        .env("CGOF_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_rejects_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        "theta = [0.0, 0.0, 0.0]\nindependence = [3, 3]\ncluster_sizes = [5]\ncluster_counts = [25]\n\
         rho2 = [0.0]\nlambda_pairs = [\"1,0\"]\nreplications = 2\n",
    )
    .unwrap();
    let o = cgof(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
