use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_twocycles"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(scenario: &Path, out: &Path, extra: &[&str]) -> (i32, Value) {
    let status = bin()
        .arg("--scenario")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs");
    let report = std::fs::read_to_string(out.join("report.json")).expect("report written");
    (status.status.code().unwrap_or(-1), serde_json::from_str(&report).unwrap())
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(str::to_owned).collect())
        .collect();
    (header, rows)
}

#[test]
fn classify_hull_counterexample() {
    let dir = tempfile::tempdir().unwrap();
    let (code, rep) = run(&scenario("hull_counterexample.toml"), dir.path(), &[]);
    assert_eq!(code, 0);
    assert_eq!(rep["command"], "classify");
    assert_eq!(rep["targets_convention"], "lengths");
    assert_eq!(rep["schema_version"], 1);
    let v = &rep["result"];
    assert_eq!(v["type_a_empirical"], false);
    let stable_anc = v["stable_ancillary"].as_array().unwrap();
    assert!(!stable_anc.is_empty());
    for i in stable_anc {
        let r = &v["records"][i.as_u64().unwrap() as usize];
        assert_eq!(r["class"], "ancillary");
        assert_eq!(r["stability"], "stable");
    }
    let (_, rows) = read_csv(&dir.path().join("equilibria.csv"));
    assert_eq!(rows.len(), v["records"].as_array().unwrap().len());
}

#[test]
fn simulate_from_design_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(
        dir.path(),
        "sc.toml",
        "version = 1\n[targets]\nvalues = [1.0, 1.0, 2.0, 1.0, 1.0]\nconvention = \"squared\"\n[chart]\nattached = 1\n[simulate]\nt_end = 5.0\n",
    );
    let out = dir.path().join("out");
    let (code, rep) = run(&sc, &out, &["--command", "simulate"]);
    assert_eq!(code, 0);
    let (_, rows) = read_csv(&out.join("trajectory.csv"));
    let first: Vec<f64> = rows[0][1..9].iter().map(|v| v.parse().unwrap()).collect();
    for row in &rows {
        for (k, v) in row[1..9].iter().enumerate() {
            assert!((v.parse::<f64>().unwrap() - first[k]).abs() < 1e-9);
        }
    }
    assert!(rep["result"]["final_max_abs_error"].as_f64().unwrap() < 1e-9);
}

#[test]
fn fixed_step_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let (ca, ra) = run(&scenario("square.toml"), &a, &["--fixed-step"]);
    let (cb, rb) = run(&scenario("square.toml"), &b, &["--fixed-step"]);
    assert_eq!((ca, cb), (0, 0));
    let ta = std::fs::read(a.join("trajectory.csv")).unwrap();
    assert_eq!(ta, std::fs::read(b.join("trajectory.csv")).unwrap());
    assert_eq!(ra["result"], rb["result"]);
    assert_eq!(ra["scenario_digest"], rb["scenario_digest"]);

    // last row's error columns are the reported endpoint errors
    let (header, rows) = read_csv(&a.join("trajectory.csv"));
    let last = rows.last().unwrap();
    let e0 = header.iter().position(|h| h == "e1").unwrap();
    for k in 0..5 {
        let csv: f64 = last[e0 + k].parse().unwrap();
        assert_eq!(csv, ra["result"]["final_errors"][k].as_f64().unwrap());
    }
}

#[test]
fn continuation_changes_sign_near_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (code, rep) = run(&scenario("aligned_s0.toml"), dir.path(), &[]);
    assert_eq!(code, 0);
    let crossing = rep["result"]["crossings"][0].as_f64().unwrap();
    assert!(crossing.abs() <= 1e-3);

    let (header, rows) = read_csv(&dir.path().join("bifurcation.csv"));
    assert_eq!(&header[..3], ["branch", "mu", "leading_re"]);
    let mut keys: Vec<(String, String)> = rows.iter().map(|r| (r[0].clone(), r[1].clone())).collect();
    let n = keys.len();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), n, "one row per (branch, mu)");

    let design: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r[0] == "design")
        .map(|r| (r[1].parse().unwrap(), r[2].parse().unwrap()))
        .collect();
    assert!(design.iter().filter(|p| p.0 <= -0.01).all(|p| p.1 < 0.0));
    assert!(design.iter().filter(|p| p.0 >= 0.01).all(|p| p.1 > 0.0));
}

#[test]
fn sotomayor_at_aligned_chart_is_transcritical() {
    let dir = tempfile::tempdir().unwrap();
    let (code, rep) = run(&scenario("aligned_s0.toml"), dir.path(), &["--command", "sotomayor"]);
    assert_eq!(code, 0);
    assert_eq!(rep["result"]["report"]["verdict"], "transcritical");
}

#[test]
fn factorize_reports_sign_table() {
    let dir = tempfile::tempdir().unwrap();
    let (code, rep) = run(&scenario("hull_counterexample.toml"), dir.path(), &["--command", "factorize"]);
    assert_eq!(code, 0);
    assert!(rep["result"]["relative_residual"].as_f64().unwrap() < 1e-10);
    let (_, rows) = read_csv(&dir.path().join("sign_table.csv"));
    assert_eq!(rows.len(), 4);
}

#[test]
fn scenario_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(
        dir.path(),
        "bad.toml",
        "version = 1\n[targets]\nvalues = [1.0, 1.0, 2.0, 1.0, 1.0]\nconvention = \"squared\"\nextra = 3\n",
    );
    let (code, rep) = run(&sc, &dir.path().join("o1"), &["--command", "attach"]);
    assert_eq!(code, 2);
    assert_eq!(rep["status"], "scenario_error");

    let sc = write(
        dir.path(),
        "nocmd.toml",
        "version = 1\n[targets]\nvalues = [1.0, 1.0, 2.0, 1.0, 1.0]\nconvention = \"squared\"\n",
    );
    let (code, _) = run(&sc, &dir.path().join("o2"), &[]);
    assert_eq!(code, 2);
}

#[test]
fn numerical_failures_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(
        dir.path(),
        "sc.toml",
        "version = 1\n[targets]\nvalues = [1.0, 1.0, 2.0, 1.0, 1.0]\nconvention = \"squared\"\n[chart]\nattached = 9\n",
    );
    let (code, rep) = run(&sc, &dir.path().join("o"), &["--command", "spectrum"]);
    assert_eq!(code, 3);
    assert_eq!(rep["status"], "numerical_failure");
    assert!(!rep["diagnostics"].as_array().unwrap().is_empty());
}

#[test]
fn seed_override_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(
        dir.path(),
        "sc.toml",
        "version = 1\n[targets]\nvalues = [1.0, 1.0, 2.0, 1.0, 1.0]\nconvention = \"squared\"\n[search]\nn_starts = 8\nt_end = 10.0\n",
    );
    let (code, rep) = run(&sc, &dir.path().join("o"), &["--command", "equilibria", "--seed-override", "42"]);
    assert_eq!(code, 0);
    assert_eq!(rep["search_seed"], 42);
    assert_eq!(rep["result"]["seed"], 42);
}

#[test]
fn shipped_scenarios_round_trip() {
    for name in ["hull_counterexample.toml", "aligned_s0.toml", "square.toml"] {
        let sc = twocycles_cli::Scenario::load(&scenario(name)).unwrap();
        assert_eq!(twocycles_cli::Scenario::parse(&sc.emit()).unwrap(), sc);
    }
}
