use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const SIGMA: [f64; 8] = [
    51.7022, 82.0324, 10.0114, 40.2333, 24.6756, 19.2339, 28.6260, 44.5561,
];

fn qndctl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qndctl"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run qndctl")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn example_config(theta: f64, mode: &str) -> Value {
    json!({
        "observable": {"diag": SIGMA, "n_star": 2},
        "h1": {"synthesize": {}},
        "measurement": {"photon_box": {"n": 8, "phi0": 0.125, "theta": theta}},
        "controller": {"kind": "quadratic", "u_bar": 0.1},
        "loop": {
            "mode": mode,
            "steps": 200,
            "state_stride": 0,
            "rho0": {"mix": {"weight": 0.5, "a": {"basis": 0}, "b": "uniform-superposition"}}
        },
        "ensemble": {"realizations": 12, "master_seed": 7}
    })
}

#[test]
fn synthesize_example_is_feasible() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "p.json", &json!({"diag": SIGMA, "n_star": 2}));
    let out = qndctl(
        &[
            "synthesize",
            "--p-diag",
            p.to_str().unwrap(),
            "--out-dir",
            "out",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("satisfied"));
    let synth: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/synthesis.json")).unwrap())
            .unwrap();
    assert_eq!(synth["feasible"], json!(true));
    assert_eq!(synth["convention"], json!("sqrt(R/2)"));
    assert!(synth["config_hash"].as_str().unwrap().len() == 64);
    let h1: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/h1.json")).unwrap()).unwrap();
    assert_eq!(h1["n"], json!(8));
}

#[test]
fn synthesize_constant_observable_is_infeasible() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "p.json", &json!({"diag": [2.0, 2.0, 2.0]}));
    let out = qndctl(
        &[
            "synthesize",
            "--p-diag",
            p.to_str().unwrap(),
            "--out-dir",
            "out",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("out/h1.json").exists());
}

#[test]
fn sparse_synthesis_couples_only_to_target() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "p.json", &json!({"diag": SIGMA, "n_star": 2}));
    let out = qndctl(
        &[
            "synthesize",
            "--p-diag",
            p.to_str().unwrap(),
            "--sparse",
            "--out-dir",
            "out",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    let h1: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/h1.json")).unwrap()).unwrap();
    for i in 0..8 {
        for j in 0..8 {
            let v = h1["re"][i][j].as_f64().unwrap();
            if i != 2 && j != 2 {
                assert!(v.abs() <= 1e-2, "H1[{i}][{j}] = {v}");
            }
        }
    }
}

#[test]
fn synthesize_missing_file_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let out = qndctl(&["synthesize", "--p-diag", "nope.json"], dir.path());
    assert_eq!(code(&out), 1);
}

#[test]
fn synthesized_h1_file_feeds_simulate() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "p.json", &json!({"diag": SIGMA, "n_star": 2}));
    assert_eq!(
        code(&qndctl(
            &[
                "synthesize",
                "--p-diag",
                p.to_str().unwrap(),
                "--out-dir",
                "s"
            ],
            dir.path()
        )),
        0
    );
    let mut cfg = example_config(std::f64::consts::PI / 4.0, "stochastic");
    cfg["h1"] = json!({"path": "s/h1.json"});
    let inline = write(dir.path(), "from-file.json", &cfg);
    let out = qndctl(
        &[
            "simulate",
            "--config",
            inline.to_str().unwrap(),
            "--out-dir",
            "a",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    // solving inline gives the same H1, hence the same numbers
    let solved = write(
        dir.path(),
        "solved.json",
        &example_config(std::f64::consts::PI / 4.0, "stochastic"),
    );
    assert_eq!(
        code(&qndctl(
            &[
                "simulate",
                "--config",
                solved.to_str().unwrap(),
                "--out-dir",
                "b"
            ],
            dir.path()
        )),
        0
    );
    let body = |d: &str| {
        let text = fs::read_to_string(dir.path().join(d).join("trajectories.csv")).unwrap();
        text.lines().skip(1).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(body("a"), body("b"));
}

#[test]
fn simulate_is_reproducible_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        &example_config(std::f64::consts::PI / 4.0, "stochastic"),
    );
    let c = cfg.to_str().unwrap();
    for (d, t) in [("a", "1"), ("b", "1"), ("c", "8")] {
        let out = qndctl(
            &["simulate", "--config", c, "--out-dir", d, "--threads", t],
            dir.path(),
        );
        assert_eq!(code(&out), 0);
    }
    for f in ["trajectories.csv", "summary.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
        assert_eq!(a, fs::read(dir.path().join("c").join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(dir.path().join("a/trajectories.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="));
    assert!(csv.contains("master_seed=7"));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["ensemble"]["realizations"], json!(12));

    // a different seed changes the numbers but not the hash of the model
    let out = qndctl(
        &["simulate", "--config", c, "--out-dir", "d", "--seed", "8"],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    let other = fs::read_to_string(dir.path().join("d/trajectories.csv")).unwrap();
    assert_ne!(csv, other);
}

#[test]
fn simulate_deterministic_diagonal_state_is_flat() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "observable": {"diag": [0.3, 1.7, 2.9, 3.6]},
        "h1": {"matrix": {"n": 4,
            "re": [[0.0, 0.5, 0.3, 0.4], [0.5, 0.0, 0.6, 0.2], [0.3, 0.6, 0.0, 0.5], [0.4, 0.2, 0.5, 0.0]]}},
        "h0": {"diag": [0.0, 1.1, 2.9, 4.6]},
        "controller": {"kind": "linear", "kappa": 0.05},
        "loop": {"mode": "deterministic", "steps": 300, "state_stride": 0, "rho0": {"diag": [0.1, 0.2, 0.3, 0.4]}},
        "ensemble": {"realizations": 1}
    });
    let path = write(dir.path(), "det.json", &cfg);
    let out = qndctl(
        &[
            "simulate",
            "--config",
            path.to_str().unwrap(),
            "--out-dir",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("0 reached"));
    let csv = fs::read_to_string(dir.path().join("o/trajectories.csv")).unwrap();
    let v: Vec<f64> = csv
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(5).unwrap().parse().unwrap())
        .collect();
    assert_eq!(v.len(), 301);
    assert!(v.iter().all(|x| (x - v[0]).abs() <= 1e-12));
}

#[test]
fn simulate_below_floor_reports_missed_target() {
    let dir = TempDir::new().unwrap();
    let mut cfg = example_config(std::f64::consts::PI / 4.0, "stochastic");
    cfg["loop"]["steps"] = json!(5);
    cfg["success_floor"] = json!(0.5);
    let path = write(dir.path(), "cfg.json", &cfg);
    let out = qndctl(
        &[
            "simulate",
            "--config",
            path.to_str().unwrap(),
            "--out-dir",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 4);
    assert!(dir.path().join("o/summary.json").exists());
}

#[test]
fn simulate_rejects_bad_configs() {
    let dir = TempDir::new().unwrap();
    let mut no_seed = example_config(std::f64::consts::PI / 4.0, "stochastic");
    no_seed["ensemble"] = json!({"realizations": 3});
    let path = write(dir.path(), "a.json", &no_seed);
    assert_eq!(
        code(&qndctl(
            &["simulate", "--config", path.to_str().unwrap()],
            dir.path()
        )),
        1
    );

    let mut unknown = example_config(std::f64::consts::PI / 4.0, "stochastic");
    unknown["surprise"] = json!(1);
    let path = write(dir.path(), "b.json", &unknown);
    assert_eq!(
        code(&qndctl(
            &["simulate", "--config", path.to_str().unwrap()],
            dir.path()
        )),
        1
    );

    let mut linear = example_config(std::f64::consts::PI / 4.0, "stochastic");
    linear["controller"] = json!({"kind": "linear"});
    let path = write(dir.path(), "c.json", &linear);
    assert_eq!(
        code(&qndctl(
            &["simulate", "--config", path.to_str().unwrap()],
            dir.path()
        )),
        1
    );
}

#[test]
fn validate_flags_periodic_photon_box() {
    let dir = TempDir::new().unwrap();
    let path = write(
        dir.path(),
        "cfg.json",
        &example_config(std::f64::consts::PI / 4.0, "stochastic"),
    );
    let out = qndctl(
        &["validate", "--config", path.to_str().unwrap()],
        dir.path(),
    );
    assert_ne!(code(&out), 0);
    let text = stdout(&out);
    for pair in ["(0, 4)", "(1, 5)", "(2, 6)", "(3, 7)"] {
        assert!(text.contains(pair), "{pair} missing from\n{text}");
    }
}

#[test]
fn validate_accepts_finer_photon_box() {
    let dir = TempDir::new().unwrap();
    let path = write(
        dir.path(),
        "cfg.json",
        &example_config(std::f64::consts::PI / 10.0, "stochastic"),
    );
    let out = qndctl(
        &["validate", "--config", path.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stdout(&out));
}

#[test]
fn validate_names_connectivity_for_sparse_deterministic() {
    let dir = TempDir::new().unwrap();
    let mut cfg = example_config(std::f64::consts::PI / 10.0, "deterministic");
    cfg["h1"] = json!({"synthesize": {"sparse": true}});
    cfg["controller"] = json!({"kind": "linear"});
    cfg["h0"] = json!({"diag": [0.0, 0.3, 1.1, 1.7, 2.9, 3.2, 4.6, 5.5]});
    let path = write(dir.path(), "cfg.json", &cfg);
    let out = qndctl(
        &["validate", "--config", path.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
    let text = stdout(&out);
    assert!(
        text.contains("not satisfied:") && text.contains("fully connected H1"),
        "{text}"
    );
}

#[test]
fn reproduce_writes_report_consistent_with_exit_code() {
    let dir = TempDir::new().unwrap();
    let out = qndctl(
        &[
            "reproduce-paper",
            "--case",
            "sparse",
            "--seed",
            "42",
            "--out-dir",
            "r",
            "--realizations",
            "20",
        ],
        dir.path(),
    );
    let c = code(&out);
    assert!(
        c == 0 || c == 4,
        "exit {c}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = fs::read_to_string(dir.path().join("r/report.md")).unwrap();
    assert!(report.contains("| lambda_tilde pattern |"));
    let failed_rows = report.lines().filter(|l| l.ends_with("| FAIL |")).count();
    assert_eq!(c == 0, failed_rows == 0);
    // every synthesis-side check holds regardless of the ensemble outcome
    for row in report
        .lines()
        .filter(|l| l.starts_with("| ") && !l.contains("closed-loop"))
    {
        assert!(!row.ends_with("| FAIL |"), "{row}");
    }
    for f in [
        "synthesis.json",
        "h1.json",
        "trajectories.csv",
        "summary.json",
        "config.json",
    ] {
        assert!(dir.path().join("r").join(f).exists(), "{f}");
    }
    // the written config replays to the same trajectories
    let replay = qndctl(
        &[
            "simulate",
            "--config",
            "r/config.json",
            "--out-dir",
            "replay",
        ],
        dir.path(),
    );
    assert!(matches!(code(&replay), 0 | 4));
    assert_eq!(
        fs::read(dir.path().join("r/trajectories.csv")).unwrap(),
        fs::read(dir.path().join("replay/trajectories.csv")).unwrap()
    );
}

#[test]
fn reproduce_nonsparse_lambda_sums_to_zero() {
    let dir = TempDir::new().unwrap();
    let out = qndctl(
        &[
            "reproduce-paper",
            "--case",
            "nonsparse",
            "--out-dir",
            "r",
            "--realizations",
            "4",
        ],
        dir.path(),
    );
    assert!(matches!(code(&out), 0 | 4));
    let report = fs::read_to_string(dir.path().join("r/report.md")).unwrap();
    let row = report
        .lines()
        .find(|l| l.starts_with("| lambda_tilde sums to zero"))
        .unwrap();
    assert!(row.ends_with("| pass |"), "{row}");
}
