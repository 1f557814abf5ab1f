use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ni_consensus_cli::{
    builtin_pendulum_preset, execute, parse_scenario, run, sweep, write_sweep, Scenario,
    SweepConfig,
};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ni-consensus"));
    cmd.env_remove("NI_CONSENSUS_OUT");
    cmd
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn write_scenario(dir: &Path, name: &str, s: &Scenario) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, s.to_toml()).unwrap();
    path
}

fn short_preset(t_end: f64) -> Scenario {
    let mut s = builtin_pendulum_preset();
    s.integrator.t_end = t_end;
    s
}

fn status(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn shipped_scenarios_validate() {
    for name in ["pendulum3.toml", "ring5_mixed.toml"] {
        let out = bin()
            .arg("validate")
            .arg(scenarios_dir().join(name))
            .output()
            .unwrap();
        assert_eq!(
            status(&out),
            0,
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn preset_print_round_trips() {
    let out = bin()
        .args(["preset", "pendulum3", "--print"])
        .output()
        .unwrap();
    assert_eq!(status(&out), 0);
    let parsed = parse_scenario(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(parsed, builtin_pendulum_preset());
}

#[test]
fn one_step_horizon_exits_with_check_failure_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), "short.toml", &short_preset(0.001));
    let out_dir = dir.path().join("out");
    let out = bin()
        .arg("run")
        .arg(&path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(status(&out), 1);
    let csv = fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2);
    let metrics: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["status"], 1);
    assert_eq!(metrics["consensus"]["settled"], false);
    assert!(out_dir.join("plots/consensus.csv").exists());
    assert!(out_dir.join("plots/lyapunov.csv").exists());
}

/// Recomputes the exit status from `metrics.json` alone.
fn status_from_metrics(v: &serde_json::Value) -> i64 {
    let checks = v["checks"].as_object().unwrap();
    if !v["diverged_at"].is_null() {
        2
    } else if checks.values().all(|c| c.as_bool().unwrap()) {
        0
    } else {
        1
    }
}

#[test]
fn exit_status_follows_from_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let mut coarse = builtin_pendulum_preset();
    coarse.integrator.step = 0.5;
    for (name, s) in [
        ("short", short_preset(0.5)),
        ("full", builtin_pendulum_preset()),
        ("coarse", coarse),
    ] {
        let path = write_scenario(dir.path(), &format!("{name}.toml"), &s);
        let out_dir = dir.path().join(name);
        let out = bin()
            .arg("run")
            .arg(&path)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        let v: serde_json::Value =
            serde_json::from_slice(&fs::read(out_dir.join("metrics.json")).unwrap()).unwrap();
        assert_eq!(i64::from(status(&out)), status_from_metrics(&v), "{name}");
        assert_eq!(v["status"], status_from_metrics(&v), "{name}");
    }
}

#[test]
fn plot_series_have_two_columns() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(&short_preset(1.0), dir.path()).unwrap();
    for name in ["consensus.csv", "lyapunov.csv"] {
        let text = fs::read_to_string(dir.path().join("plots").join(name)).unwrap();
        assert_eq!(text.lines().count(), 1 + output.trajectory.len(), "{name}");
        assert!(text.lines().all(|l| l.split(',').count() == 2), "{name}");
    }
}

#[test]
fn coarse_step_diverges_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = builtin_pendulum_preset();
    s.integrator.step = 0.5;
    let path = write_scenario(dir.path(), "coarse.toml", &s);
    let out_dir = dir.path().join("out");
    let out = bin()
        .arg("run")
        .arg(&path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(status(&out), 2);
    let metrics: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["status"], 2);
    assert!(metrics["diverged_at"].as_f64().unwrap() > 0.0);
}

#[test]
fn invalid_input_exits_with_three_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let doc = fs::read_to_string(scenarios_dir().join("pendulum3.toml"))
        .unwrap()
        .replacen("epsilon = 0.05", "epsilon = 0.1", 1);
    let path = dir.path().join("bad.toml");
    fs::write(&path, doc).unwrap();
    let out = bin()
        .arg("run")
        .arg(&path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(status(&out), 3);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("controllers[0]"), "{stderr}");
    assert!(!dir.path().join("metrics.json").exists());

    let missing = bin()
        .args(["validate", "/nonexistent/scenario.toml"])
        .output()
        .unwrap();
    assert_eq!(status(&missing), 3);
}

#[test]
fn out_dir_defaults_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), "short.toml", &short_preset(0.01));
    let target = dir.path().join("from-env");
    let out = bin()
        .env("NI_CONSENSUS_OUT", &target)
        .arg("run")
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(status(&out), 1);
    assert!(target.join("metrics.json").exists());
}

#[test]
fn trajectory_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = short_preset(1.0);
    s.integrator.record_every = 10;
    run(&s, dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<_> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 16);
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 101);
    assert!(rows.iter().all(|r| r.len() == header.len()));
    assert_eq!(rows[0][..9], [0.0, 0.6, 0.0, -0.4, 0.0, 0.9, 0.0, 0.0, 0.0]);
    assert!((rows[100][0] - 1.0).abs() < 1e-12);
    for r in &rows {
        // y_p equals the pendulum angles, dy_e equals Q·y_p
        assert_eq!(r[9..12], [r[1], r[3], r[5]]);
        assert_eq!(r[14], r[9] - r[10]);
        assert_eq!(r[15], r[10] - r[11]);
    }
}

#[test]
fn metrics_floats_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let s = short_preset(2.0);
    let output = run(&s, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("metrics.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["lyapunov"]["w0"].as_f64().unwrap(), 6.057265427768849);
    assert_eq!(
        v["consensus"]["final_error"].as_f64().unwrap(),
        output.consensus.final_error
    );
    assert_eq!(v["setup"]["eps_min"].as_f64().unwrap(), 1.0 / 30.0);
}

#[test]
fn execute_is_deterministic() {
    let s = short_preset(3.0);
    let a = execute(&s).unwrap();
    let b = execute(&s).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.trajectory, b.trajectory);
}

#[test]
fn sweep_is_independent_of_thread_count_and_writes_json() {
    let s = short_preset(2.0);
    let cfg = SweepConfig {
        perturbation: 0.3,
        runs: 6,
        seed: 1,
    };
    let parallel = sweep(&s, &cfg).unwrap();
    let serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| sweep(&s, &cfg).unwrap());
    assert_eq!(parallel, serial);
    let dir = tempfile::tempdir().unwrap();
    write_sweep(&parallel, dir.path()).unwrap();
    let v: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(v["results"].as_array().unwrap().len(), 6);
    assert_eq!(v["runs"], 6);
}

#[test]
fn zero_perturbation_sweep_reproduces_the_nominal_run() {
    let s = short_preset(25.0);
    let nominal = execute(&s).unwrap().metrics.consensus;
    let cfg = SweepConfig {
        perturbation: 0.0,
        runs: 2,
        seed: 9,
    };
    let report = sweep(&s, &cfg).unwrap();
    for r in &report.results {
        assert_eq!(r.final_error, nominal.final_error);
        assert_eq!(r.settle_time, nominal.settle_time);
    }
}

#[test]
fn readme_scenario_example_parses() {
    let readme =
        fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md")).unwrap();
    let start = readme.find("```toml\n").unwrap() + "```toml\n".len();
    let end = start + readme[start..].find("```").unwrap();
    let s = parse_scenario(&readme[start..end]).unwrap();
    assert_eq!((s.plants.len(), s.controllers.len()), (3, 2));

    let bad = readme[start..end].replacen("epsilon = 0.05", "epsilon = 0.1", 1);
    let err = parse_scenario(&bad).unwrap_err().to_string();
    assert_eq!(
        err,
        "controllers[0]: invalid parameter: strictness level 0.1 outside the admissible range (0, 1/alpha] = (0, 0.05]"
    );
}
