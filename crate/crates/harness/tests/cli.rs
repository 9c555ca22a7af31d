use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bspde-lab"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const CALCULUS: &str = r#"{
  "experiment": "stochastic-calculus",
  "seed": 1,
  "family": { "name": "constant", "sigma": [1.0] },
  "domain": { "kind": "interval", "a": 0.0, "b": 1.0, "horizon": 1.0 },
  "grid": { "nx": 11 },
  "tree": { "d": 1, "n_steps": 6 }
}"#;

#[test]
fn lists_every_experiment() {
    let out = run(&["list-experiments"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "feynman-kac-nonrandom",
        "representation-random",
        "adjoint-suite",
        "solvability-R",
        "duality-63",
        "density-64-65",
        "norm-bounds",
        "stochastic-calculus",
    ] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
}

#[test]
fn shipped_configs_validate() {
    let mut n = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let out = run(&["validate-config", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        n += 1;
    }
    assert_eq!(n, 8);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("unknown.json", CALCULUS.replace("stochastic-calculus", "no-such-experiment")),
        ("broken.json", "{ not json".to_string()),
        ("extra.json", CALCULUS.replace("\"seed\": 1,", "\"seed\": 1, \"colour\": 3,")),
        ("d.json", CALCULUS.replace("\"d\": 1", "\"d\": 2")),
        (
            "tail.json",
            CALCULUS.replace("stochastic-calculus", "density-64-65"),
        ),
    ];
    for (name, body) in cases {
        let p = write_config(dir.path(), name, &body);
        let v = run(&["validate-config", p.to_str().unwrap()]);
        assert_eq!(v.status.code(), Some(2), "{name}");
        let r = run(&["run", p.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
        assert_eq!(r.status.code(), Some(2), "{name}");
    }
    let missing = run(&["run", "/nonexistent/config.json"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "calc.json", CALCULUS);
    let out_dir = dir.path().join("out");
    let out = run(&["run", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("stochastic-calculus.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "experiment,check,paper_anchor,lhs,rhs,abs_err,rel_err,tol,pass"
    );
    assert!(lines.all(|l| l.starts_with("stochastic-calculus,") && l.ends_with(",true")));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("stochastic-calculus.summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["pass"], true);
    assert_eq!(summary["config"]["seed"], 1);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("stochastic-calculus.meta.json")).unwrap())
            .unwrap();
    assert!(meta["elapsed_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "calc.json", CALCULUS);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "run",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    assert!(out.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("stochastic-calculus.summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["config"]["seed"], 99);
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
  "experiment": "density-64-65",
  "seed": 4,
  "family": { "name": "drift-random", "sigma": [0.6, 0.8], "kappa": 0.25 },
  "domain": { "kind": "truncated-line", "a": -6.0, "b": 6.0, "horizon": 0.5 },
  "grid": { "nx": 61 },
  "tree": { "d": 1, "n_steps": 4 },
  "mc": { "paths": 2000, "dt_mc": 0.025 },
  "probe": { "times": [0.25, 0.5], "leaf": 5 }
}"#;
    let cfg = write_config(dir.path(), "density.json", body);
    let mut outputs = Vec::new();
    for workers in ["1", "3"] {
        let out_dir = dir.path().join(format!("w{workers}"));
        let out = run(&[
            "run",
            cfg.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--workers",
            workers,
        ]);
        assert!(matches!(out.status.code(), Some(0) | Some(1)));
        outputs.push((
            std::fs::read(out_dir.join("density-64-65.csv")).unwrap(),
            std::fs::read(out_dir.join("density-64-65.summary.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn divergence_is_a_failed_check() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
  "experiment": "solvability-R",
  "seed": 2,
  "family": { "name": "drift-random", "sigma": [0.6, 0.8], "kappa": 0.25 },
  "domain": { "kind": "truncated-line", "a": -6.0, "b": 6.0, "horizon": 0.5 },
  "grid": { "nx": 41 },
  "tree": { "d": 1, "n_steps": 4 },
  "solver": { "max_iter": 1, "tol": 1e-14 }
}"#;
    let cfg = write_config(dir.path(), "r.json", body);
    let out_dir = dir.path().join("out");
    let out = run(&["run", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let csv = std::fs::read_to_string(out_dir.join("solvability-R.csv")).unwrap();
    assert!(csv.lines().skip(1).any(|l| l.ends_with(",false")));
}
