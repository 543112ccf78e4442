use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdtune"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CROWDTUNE_OUT")
        .output()
        .expect("spawn crowdtune")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures/ml_mini")
        .join(name)
        .display()
        .to_string()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: impl AsRef<Path>) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn check_manifest(dir: &Path, name: &str) -> Value {
    let m = json(dir.join(name));
    for out in m["outputs"].as_array().unwrap() {
        let meta = fs::metadata(dir.join(out["path"].as_str().unwrap())).unwrap();
        assert!(meta.len() > 0);
        assert_eq!(meta.len(), out["bytes"].as_u64().unwrap());
    }
    m
}

#[test]
fn ingest_movielens_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(
        &["ingest", "--ratings", &fixture("u.data"), "--items", &fixture("u.item"), "--out", "pop.json"],
        tmp.path(),
    );
    assert!(stdout.contains("6 users, dim 19"), "{stdout}");
    let pop = json(tmp.path().join("pop.json"));
    assert_eq!(pop["dim"], 19);
    let m = check_manifest(tmp.path(), "pop.manifest.json");
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn ingest_synthetic_counts_users() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(&["ingest", "--synthetic", "50", "--dim", "19", "--seed", "7", "--out", "syn.json"], tmp.path());
    assert!(stdout.contains("50 users, dim 19"));
    assert_eq!(json(tmp.path().join("syn.json"))["users"].as_array().unwrap().len(), 50);
}

#[test]
fn missing_input_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let err = fails(&["ingest", "--ratings", "missing.data", "--items", &fixture("u.item")], tmp.path());
    assert!(err.contains("missing.data"), "{err}");
    let err = fails(&["simulate", "--population", "nowhere.json", "--seed", "1"], tmp.path());
    assert!(err.contains("nowhere.json"), "{err}");
}

#[test]
fn invalid_flags_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fails(&["simulate", "--rounds", "0", "--seed", "1"], tmp.path());
    fails(&["tournament", "--clones", "1", "--seed", "1"], tmp.path());
    let err = fails(&["simulate", "--users", "3", "--groups", "4", "--seed", "1"], tmp.path());
    assert!(err.contains("group"), "{err}");
    let err = fails(&["sweep", "--users", "10", "--groups", "2"], tmp.path());
    assert!(err.contains("--seed"), "{err}");
    let err = fails(&["shapley", "--users", "5"], tmp.path());
    assert!(err.contains("--seed"), "{err}");
    let err = fails(&["shapley", "--users", "15", "--estimator", "exact", "--seed", "1"], tmp.path());
    assert!(err.contains("kernel") && err.contains("14"), "{err}");
    assert!(!tmp.path().join("crowdtune-out/shapley").exists());
}

#[test]
fn simulate_writes_records_and_prints_chosen_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(&["simulate", "--users", "12", "--groups", "3", "--rounds", "30", "--out", "a"], tmp.path());
    let seed: u64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("simulation seed: "))
        .expect("seed printed")
        .parse()
        .unwrap();
    let dir = tmp.path().join("a");
    let m = check_manifest(&dir, "manifest.json");
    assert_eq!(m["seed"], seed);
    assert_eq!(json(dir.join("record.json"))["config"]["seed"], seed);
    assert_eq!(csv_rows(dir.join("rounds.csv")).len(), 31);
    assert_eq!(csv_rows(dir.join("ledger.csv")).len(), 13);

    // the manifest's snapshot reproduces every output
    ok(&["simulate", "--config", "a/manifest.json", "--out", "b"], tmp.path());
    let again = check_manifest(&tmp.path().join("b"), "manifest.json");
    assert_eq!(m["outputs"], again["outputs"]);
}

#[test]
fn repeated_runs_get_subdirectories_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["simulate", "--users", "8", "--groups", "2", "--runs", "3", "--seed", "5", "--out", "r"], tmp.path());
    let dir = tmp.path().join("r");
    for r in 0..3 {
        assert!(dir.join(format!("run_{r:03}/record.json")).exists());
    }
    assert_eq!(csv_rows(dir.join("runs.csv")).len(), 4);
    assert_eq!(csv_rows(dir.join("summary.csv"))[1][4], "3");
}

#[test]
fn output_directory_defaults_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_crowdtune"))
        .args(["tournament", "--seed", "2"])
        .current_dir(tmp.path())
        .env("CROWDTUNE_OUT", "from_env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("from_env/tournament.csv").exists());
    ok(&["tournament", "--seed", "2", "--out", "flag"], tmp.path());
    assert_eq!(
        fs::read(tmp.path().join("flag/tournament.csv")).unwrap(),
        fs::read(tmp.path().join("from_env/tournament.csv")).unwrap()
    );
}

#[test]
fn tournament_baseline_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["tournament", "--seed", "9", "--out", "t"], tmp.path());
    let baseline = csv_rows(tmp.path().join("t/baseline.csv"));
    let counts: Vec<&str> = baseline[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(counts, ["33", "66", "100"]);
    assert_eq!(csv_rows(tmp.path().join("t/tournament.csv")).len(), 5);
    check_manifest(&tmp.path().join("t"), "manifest.json");
}

fn phi(dir: &Path) -> Vec<f64> {
    csv_rows(dir.join("phi.csv"))[1..].iter().map(|r| r[1].parse().unwrap()).collect()
}

#[test]
fn shapley_estimators_agree_on_small_games() {
    let tmp = tempfile::tempdir().unwrap();
    let base = ["shapley", "--users", "8", "--groups", "3", "--rounds", "40", "--seed", "3"];
    ok(&[&base[..], &["--estimator", "exact", "--out", "exact"]].concat(), tmp.path());
    ok(&[&base[..], &["--estimator", "kernel", "--budget", "254", "--out", "kernel"]].concat(), tmp.path());
    let exact = phi(&tmp.path().join("exact"));
    for (a, b) in exact.iter().zip(phi(&tmp.path().join("kernel"))) {
        assert!((a - b).abs() < 1e-6);
    }
    let est = json(tmp.path().join("exact/estimate.json"));
    let gap = exact.iter().sum::<f64>() - (est["v_full"].as_f64().unwrap() - est["v_empty"].as_f64().unwrap());
    assert!(gap.abs() < 1e-9);

    let summary = csv_rows(tmp.path().join("exact/shapley.csv"));
    assert_eq!(summary[0][4..], ["pearson", "inverse_pearson"]);
    let r: f64 = summary[1][4].parse().unwrap();
    let inv: f64 = summary[1][5].parse().unwrap();
    assert!((r + inv - 1.0).abs() < 1e-12);
}

#[test]
fn single_cell_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        &["sweep", "--users", "6", "--groups", "2", "--runs", "2", "--rounds", "20", "--seed", "1", "--jobs", "1", "--out", "s"],
        tmp.path(),
    );
    let dir = tmp.path().join("s");
    assert_eq!(csv_rows(dir.join("configurations.csv")).len(), 2);
    assert_eq!(csv_rows(dir.join("sweep_rows.csv")).len(), 10);
    for table in ["distance_winners.csv", "pearson_winners.csv"] {
        let total: usize = csv_rows(dir.join(table))[1..].iter().map(|r| r[2].parse::<usize>().unwrap()).sum();
        assert_eq!(total, 1);
    }
    check_manifest(&dir, "manifest.json");

    // thread count does not change results
    ok(
        &["sweep", "--users", "6", "--groups", "2", "--runs", "2", "--rounds", "20", "--seed", "1", "--jobs", "3", "--out", "t"],
        tmp.path(),
    );
    assert_eq!(fs::read(dir.join("sweep.json")).unwrap(), fs::read(tmp.path().join("t/sweep.json")).unwrap());
}
