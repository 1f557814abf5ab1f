//! Simulate a scenario, run every check and write the artifacts.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use ni_consensus::analysis::STEADY_STATE_NOTE;
use ni_consensus::{
    check_lyapunov_decrease, check_ni_dissipation, check_osni_dissipation,
    check_steady_state_consequence, consensus_error, detect_steady_state, lyapunov_series,
    member_trajectory, sample_positive_definite, simulate_closed_loop, total_storage,
    ClosedLoopSystem64, ConsensusReport64, DissipationReport64, LyapunovSeries64, Member,
    NetworkTrajectory64,
};
use serde::Serialize;
use thiserror::Error;

use crate::json::{fmt_f64, nums, Num};
use crate::scenario::{BuiltScenario, Scenario, ScenarioError};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_INVALID: i32 = 3;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("simulation failed: {0}")]
    Core(#[from] ni_consensus::Error),
    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub status: i32,
    pub pass: bool,
    pub diverged_at: Option<Num>,
    pub checks: Checks,
    pub setup: Setup,
    pub dissipation: Vec<MemberDissipation>,
    pub lyapunov: LyapunovSummary,
    pub positive_definite: PositiveDefiniteSummary,
    pub consensus: ConsensusSummary,
    pub steady_state: SteadyStateSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Checks {
    pub dissipation: bool,
    pub lyapunov: bool,
    pub positive_definite: bool,
    pub consensus: bool,
    pub steady_state: bool,
}

impl Checks {
    pub fn all(&self) -> bool {
        self.dissipation
            && self.lyapunov
            && self.positive_definite
            && self.consensus
            && self.steady_state
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Setup {
    pub nodes: usize,
    /// 1-based, in canonical order; the tail is the `+1` end.
    pub oriented_edges: Vec<[usize; 2]>,
    pub io_dim: usize,
    pub eps_min: Num,
    pub step: Num,
    pub t_end: Num,
    pub record_every: usize,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberDissipation {
    pub member: String,
    pub model: String,
    pub kind: &'static str,
    pub epsilon: Num,
    pub max_violation: Option<Num>,
    pub tolerance: Option<Num>,
    pub violations: usize,
    pub first_violation: Option<Num>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovSummary {
    pub w0: Option<Num>,
    pub w_end: Option<Num>,
    pub worst_margin: Option<Num>,
    pub tol: Num,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub x: Vec<Num>,
    pub value: Num,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositiveDefiniteSummary {
    pub radius: Num,
    pub samples: usize,
    pub seed: u64,
    pub checked: usize,
    pub value_at_origin: Num,
    pub counterexample: Option<Counterexample>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusSummary {
    pub threshold: Num,
    pub final_error: Num,
    pub settled: bool,
    pub settle_time: Option<Num>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowSummary {
    pub start: Num,
    pub end: Num,
    pub mean_controller_output: Vec<Num>,
    pub mean_controller_input: Vec<Num>,
    pub max_rate: Num,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyStateSummary {
    pub rate_tol: Num,
    pub min_duration: Num,
    pub tol: Num,
    pub windows: Vec<WindowSummary>,
    pub pass: bool,
    pub note: &'static str,
}

/// Everything produced by one run, before anything is written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub built: BuiltScenario,
    pub trajectory: NetworkTrajectory64,
    pub consensus: ConsensusReport64,
    pub lyapunov: Option<LyapunovSeries64>,
    pub metrics: Metrics,
}

/// 2 on divergence, 0 when every check passes, 1 otherwise.
pub fn exit_status(diverged: bool, checks: &Checks) -> i32 {
    if diverged {
        EXIT_DIVERGED
    } else if checks.all() {
        EXIT_PASS
    } else {
        EXIT_CHECK_FAILED
    }
}

fn dissipation_summary(
    member: String,
    model: &str,
    report: ni_consensus::Result<DissipationReport64>,
    kind: &'static str,
    epsilon: f64,
) -> MemberDissipation {
    match report {
        Ok(r) => MemberDissipation {
            member,
            model: model.to_owned(),
            kind,
            epsilon: Num(r.epsilon),
            max_violation: Some(Num(r.max_violation)),
            tolerance: Some(Num(r.tolerance)),
            violations: r.violation_times.len(),
            first_violation: r.violation_times.first().copied().map(Num),
            pass: r.pass,
            error: None,
        },
        Err(e) => MemberDissipation {
            member,
            model: model.to_owned(),
            kind,
            epsilon: Num(epsilon),
            max_violation: None,
            tolerance: None,
            violations: 0,
            first_violation: None,
            pass: false,
            error: Some(e.to_string()),
        },
    }
}

fn check_members(
    clm: &ClosedLoopSystem64,
    traj: &NetworkTrajectory64,
    tol: Option<f64>,
) -> Vec<MemberDissipation> {
    let plants = clm.plants().members().iter().enumerate().map(|(i, model)| {
        let view = member_trajectory(clm, traj, Member::Plant(i));
        dissipation_summary(
            format!("plant {}", i + 1),
            model.name(),
            check_ni_dissipation(model, &view, tol),
            "ni",
            0.0,
        )
    });
    let controllers = clm
        .controllers()
        .members()
        .iter()
        .enumerate()
        .map(|(k, model)| {
            let view = member_trajectory(clm, traj, Member::Controller(k));
            let eps = model.strictness().unwrap_or(0.0);
            dissipation_summary(
                format!("controller {}", k + 1),
                model.name(),
                check_osni_dissipation(model, &view, eps, tol),
                "osni",
                eps,
            )
        });
    plants.chain(controllers).collect()
}

/// Simulates the scenario and evaluates every check. Writes nothing.
pub fn execute(scenario: &Scenario) -> Result<RunOutput, RunError> {
    let built = scenario.build()?;
    let clm = &built.closed_loop;
    let a = &scenario.analysis;
    let trajectory = simulate_closed_loop(clm, &built.x0, &built.config)?;

    let dissipation = check_members(clm, &trajectory, a.dissipation_tol);

    let (lyapunov, lyapunov_series_opt) = match lyapunov_series(clm, &trajectory) {
        Ok(series) => {
            let check = check_lyapunov_decrease(&series, a.lyapunov_tol);
            let summary = LyapunovSummary {
                w0: Some(Num(series.w0())),
                w_end: Some(Num(series.w_end())),
                worst_margin: Some(Num(check.worst_margin)),
                tol: Num(a.lyapunov_tol),
                pass: check.pass && series.w_end() <= series.w0(),
                error: None,
            };
            (summary, Some(series))
        }
        Err(e) => (
            LyapunovSummary {
                w0: None,
                w_end: None,
                worst_margin: None,
                tol: Num(a.lyapunov_tol),
                pass: false,
                error: Some(e.to_string()),
            },
            None,
        ),
    };

    let w = |x: &[f64]| total_storage(clm, x).unwrap_or(f64::NAN);
    let pd = sample_positive_definite(
        &w,
        clm.state_dim(),
        a.pd_radius,
        a.pd_samples,
        scenario.seed,
    );
    let positive_definite = PositiveDefiniteSummary {
        radius: Num(pd.radius),
        samples: pd.n_samples,
        seed: pd.seed,
        checked: pd.n_checked,
        value_at_origin: Num(pd.value_at_origin),
        counterexample: pd.counterexample.as_ref().map(|(x, v)| Counterexample {
            x: nums(x),
            value: Num(*v),
        }),
        pass: pd.pass,
    };

    let consensus = consensus_error(&trajectory, clm.io_dim(), a.consensus_threshold);
    let consensus_summary = ConsensusSummary {
        threshold: Num(consensus.threshold),
        final_error: Num(consensus.final_error),
        settled: consensus.settled,
        settle_time: consensus.settle_time.map(Num),
    };

    let windows = detect_steady_state(&trajectory, a.rate_tol, a.min_duration);
    let steady_state = SteadyStateSummary {
        rate_tol: Num(a.rate_tol),
        min_duration: Num(a.min_duration),
        tol: Num(a.steady_state_tol),
        pass: check_steady_state_consequence(&windows, a.steady_state_tol),
        windows: windows
            .iter()
            .map(|w| WindowSummary {
                start: Num(w.start),
                end: Num(w.end),
                mean_controller_output: nums(&w.mean_controller_output),
                mean_controller_input: nums(&w.mean_controller_input),
                max_rate: Num(w.max_rate),
            })
            .collect(),
        note: STEADY_STATE_NOTE,
    };

    let checks = Checks {
        dissipation: dissipation.iter().all(|d| d.pass),
        lyapunov: lyapunov.pass,
        positive_definite: positive_definite.pass,
        consensus: consensus.settled,
        steady_state: steady_state.pass,
    };
    let diverged_at = trajectory.base.divergence;
    let status = exit_status(diverged_at.is_some(), &checks);
    let q = clm.incidence();
    let setup = Setup {
        nodes: q.n_nodes(),
        oriented_edges: (0..q.n_edges())
            .map(|k| {
                let (tail, head) = q.endpoints(k);
                [tail + 1, head + 1]
            })
            .collect(),
        io_dim: clm.io_dim(),
        eps_min: Num(clm.eps_min()),
        step: Num(built.config.step),
        t_end: Num(built.config.t_end),
        record_every: built.config.record_every,
        samples: trajectory.len(),
        seed: scenario.seed,
    };
    let metrics = Metrics {
        status,
        pass: status == EXIT_PASS,
        diverged_at: diverged_at.map(Num),
        checks,
        setup,
        dissipation,
        lyapunov,
        positive_definite,
        consensus: consensus_summary,
        steady_state,
    };
    Ok(RunOutput {
        built,
        trajectory,
        consensus,
        lyapunov: lyapunov_series_opt,
        metrics,
    })
}

/// Runs the scenario and writes `trajectory.csv`, `metrics.json` and
/// `plots/{consensus,lyapunov}.csv` under `out_dir`.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<RunOutput, RunError> {
    let output = execute(scenario)?;
    write_artifacts(&output, out_dir)?;
    Ok(output)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<(), RunError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    fill(&mut w).and_then(|()| w.flush()).map_err(io_err(path))
}

fn write_row(w: &mut dyn Write, cells: impl IntoIterator<Item = f64>) -> io::Result<()> {
    let mut first = true;
    for v in cells {
        if !first {
            w.write_all(b",")?;
        }
        first = false;
        w.write_all(fmt_f64(v).as_bytes())?;
    }
    w.write_all(b"\n")
}

fn io_columns(prefix: &str, count: usize, m: usize) -> Vec<String> {
    (1..=count)
        .flat_map(|i| {
            (1..=m).map(move |c| {
                if m == 1 {
                    format!("{prefix}{i}")
                } else {
                    format!("{prefix}{i}_{c}")
                }
            })
        })
        .collect()
}

/// Column names of `trajectory.csv`.
pub fn trajectory_header(clm: &ClosedLoopSystem64) -> Vec<String> {
    let mut cols = vec!["t".to_owned()];
    for (prefix, net) in [("x_p", clm.plants()), ("x_c", clm.controllers())] {
        for (i, (dim, _)) in net.block_dims().into_iter().enumerate() {
            cols.extend((1..=dim).map(|j| format!("{prefix}{}_{j}", i + 1)));
        }
    }
    let m = clm.io_dim();
    cols.extend(io_columns("y_p", clm.plants().len(), m));
    cols.extend(io_columns("y_c", clm.controllers().len(), m));
    cols.extend(io_columns("dy_e", clm.controllers().len(), m));
    cols
}

pub fn write_artifacts(output: &RunOutput, out_dir: &Path) -> Result<(), RunError> {
    let plots = out_dir.join("plots");
    fs::create_dir_all(&plots).map_err(io_err(&plots))?;
    let traj = &output.trajectory;

    write_file(&out_dir.join("trajectory.csv"), |w| {
        writeln!(
            w,
            "{}",
            trajectory_header(&output.built.closed_loop).join(",")
        )?;
        for i in 0..traj.len() {
            let row = std::iter::once(traj.base.times[i])
                .chain(traj.base.states[i].iter().copied())
                .chain(traj.plant_outputs[i].iter().copied())
                .chain(traj.controller_outputs[i].iter().copied())
                .chain(traj.edge_differences[i].iter().copied());
            write_row(w, row)?;
        }
        Ok(())
    })?;

    write_file(&out_dir.join("metrics.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &output.metrics)?;
        w.write_all(b"\n")
    })?;

    write_file(&plots.join("consensus.csv"), |w| {
        writeln!(w, "t,consensus_error")?;
        for (t, e) in output.consensus.times.iter().zip(&output.consensus.errors) {
            write_row(w, [*t, *e])?;
        }
        Ok(())
    })?;

    write_file(&plots.join("lyapunov.csv"), |w| {
        writeln!(w, "t,W")?;
        if let Some(s) = &output.lyapunov {
            for (t, v) in s.times.iter().zip(&s.w) {
                write_row(w, [*t, *v])?;
            }
        }
        Ok(())
    })
}
