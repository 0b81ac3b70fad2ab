//! Binary-level tests: exit codes, artifact layout, and determinism.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_comono"))
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

const BASE_CONFIG: &str = r#"
problem = "example2"
methods = ["ins"]
x0 = [1.0, 1.0]

[stopping]
target_tol = 1e-7

[ins]
alpha = 10.0
beta = 4.0
gamma = 7.0
eta = 2.0
"#;

#[test]
fn run_reaches_the_distance_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, BASE_CONFIG);
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let csv = std::fs::read_to_string(out.join("example2_ins.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let err: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!(err <= 1e-7, "final err column {err:e}");
    assert_eq!(
        csv.lines().next().unwrap(),
        "n,err,diff,n_diff,yosida,n_yosida,energy_gamma,omega_norm"
    );
    assert!(out.join("run_manifest.txt").exists());
}

#[test]
fn run_with_max_iter_writes_exactly_that_many_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, BASE_CONFIG);
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--max-iter", "10"])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("example2_ins.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11, "header plus exactly 10 data rows");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, BASE_CONFIG);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert!(bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .args(["--seed", "7"])
            .status()
            .unwrap()
            .success());
    }
    let ca = std::fs::read(a.join("example2_ins.csv")).unwrap();
    let cb = std::fs::read(b.join("example2_ins.csv")).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn config_errors_exit_2_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    // missing config file
    let status = bin()
        .args(["run", "--config"])
        .arg(dir.path().join("absent.toml"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // unknown method
    let cfg = dir.path().join("bad.toml");
    write(&cfg, "problem = \"example2\"\nmethods = [\"sgd\"]\n");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // unknown problem
    write(&cfg, "problem = \"example9\"\nmethods = [\"ins\"]\n");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    assert!(!out.exists(), "no artifacts on config errors");
}

#[test]
fn numerical_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    // I + 2A is exactly singular for the scalar map -1/2
    let prob = dir.path().join("singular.problem");
    write(&prob, "name singular\ndim 1\nrho -2\nzero 0\nrow -0.5\n");
    let cfg = dir.path().join("cfg.toml");
    write(
        &cfg,
        &format!(
            "problem = \"{}\"\nmethods = [\"ins\"]\n[ins]\nalpha = 10.0\nbeta = 4.0\ngamma = 7.0\neta = 2.0\n",
            prob.display()
        ),
    );
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn check_exit_codes_follow_the_validation_outcome() {
    let ok = bin()
        .args(["check", "--problem", "example2"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let text = String::from_utf8_lossy(&ok.stdout);
    assert!(text.contains("PASS  eta > max(-2*rho, 0)"));
    assert!(text.contains("cocoercivity"));

    let fail = bin()
        .args(["check", "--problem", "example2", "--alpha", "9"])
        .output()
        .unwrap();
    assert_eq!(fail.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&fail.stdout).contains("FAIL  alpha > gamma + 2"));

    // example1 runs at rho = 0, so eta = 2 > max(0, 0) passes
    let ex1 = bin()
        .args(["check", "--problem", "example1"])
        .output()
        .unwrap();
    assert_eq!(ex1.status.code(), Some(0));
}

#[test]
fn reproduce_is_deterministic_and_rejects_unknown_figures() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert!(bin()
            .args(["reproduce", "--figure", "fig2", "--out"])
            .arg(out)
            .status()
            .unwrap()
            .success());
    }
    let ca = std::fs::read(a.join("fig2_ds.csv")).unwrap();
    let cb = std::fs::read(b.join("fig2_ds.csv")).unwrap();
    assert_eq!(ca, cb);
    // three vector channels as components
    let header = String::from_utf8_lossy(&ca)
        .lines()
        .next()
        .unwrap()
        .to_string();
    for col in ["x_0", "x_1", "xdot_0", "xdot_1", "op_0", "op_1"] {
        assert!(header.split(',').any(|c| c == col), "missing column {col}");
    }

    let status = bin()
        .args(["reproduce", "--figure", "fig9", "--out"])
        .arg(dir.path().join("c"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn ode_runs_use_the_stable_trajectory_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(
        &cfg,
        r#"
problem = "example2"
methods = ["ode-ds"]
x0 = [10.0, -10.0]
v0 = [1.0, 1.0]

[integrator]
t0 = 0.1
t_end = 10.0
samples = 50

[ode-ds]
alpha = 5.0
beta = 2.0
gamma = 2.5
eta = 2.0
"#,
    );
    let out = dir.path().join("out");
    assert!(bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let csv = std::fs::read_to_string(out.join("example2_ode-ds.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "t,err,xdot_norm,t_xdot,yosida,t_yosida,energy_gamma"
    );
    assert_eq!(csv.lines().count(), 51, "header plus one row per sample");
}

#[test]
fn generated_problems_follow_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(
        &cfg,
        r#"
problem = "random-cohypo:4:-0.4"
methods = ["ins"]

[stopping]
max_iter = 20

[ins]
alpha = 10.0
beta = 4.0
gamma = 7.0
eta = 2.0
"#,
    );
    let run = |out: &Path, seed: &str| {
        assert!(bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .args(["--seed", seed])
            .status()
            .unwrap()
            .success());
        std::fs::read(out.join("random-cohypo-4-3_ins.csv")).ok()
    };
    let a = run(&dir.path().join("a"), "3").unwrap();
    let b = run(&dir.path().join("b"), "3").unwrap();
    assert_eq!(a, b, "same seed, same data");
    // a different seed changes the instance (and the file name embeds it)
    let c = dir.path().join("c");
    assert!(bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&c)
        .args(["--seed", "4"])
        .status()
        .unwrap()
        .success());
    let other = std::fs::read(c.join("random-cohypo-4-4_ins.csv")).unwrap();
    assert_ne!(a, other, "different seed, different run data");
}

#[test]
fn environment_overrides_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, BASE_CONFIG);
    let out = dir.path().join("env_out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .env("COMONO_OUT", &out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("example2_ins.csv").exists());
}
