//! Parameter-robustness sweeps.
//!
//! Each run scales every physical plant parameter (pendulum mass, length
//! and spring; all parameters of registry models) by an independent factor
//! drawn uniformly from `[1 - p, 1 + p]`. OSNI plant entries and the
//! controllers are left untouched. All factors are drawn from one seeded
//! stream before any run starts, so results do not depend on scheduling.

use std::fs;
use std::io::Write;
use std::path::Path;

use ni_consensus::{consensus_error, simulate_closed_loop};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::json::{nums, Num};
use crate::run::RunError;
use crate::scenario::{Scenario, ScenarioError};

pub const MAX_PERTURBATION: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("perturbation must lie in [0, {MAX_PERTURBATION}], got {0}")]
    Perturbation(f64),
    #[error("a sweep needs at least one run")]
    NoRuns,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Run(#[from] RunError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub perturbation: f64,
    pub runs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRun {
    pub run: usize,
    /// One row per plant, in parameter order.
    pub factors: Vec<Vec<Num>>,
    pub settled: bool,
    pub settle_time: Option<Num>,
    pub final_error: Num,
    pub diverged_at: Option<Num>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub perturbation: Num,
    pub runs: usize,
    pub seed: u64,
    pub threshold: Num,
    pub settled: usize,
    pub pass_rate: Num,
    pub results: Vec<SweepRun>,
}

impl SweepReport {
    pub fn all_settled(&self) -> bool {
        self.settled == self.runs
    }
}

/// Draws the per-run scale factors.
pub fn draw_factors(scenario: &Scenario, cfg: &SweepConfig) -> Vec<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let p = cfg.perturbation;
    (0..cfg.runs)
        .map(|_| {
            scenario
                .plants
                .iter()
                .map(|plant| {
                    (0..plant.perturbable_params())
                        .map(|_| {
                            if p == 0.0 {
                                1.0
                            } else {
                                rng.gen_range(1.0 - p..=1.0 + p)
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn one_run(scenario: &Scenario, run: usize, factors: Vec<Vec<f64>>) -> SweepRun {
    let mut perturbed = scenario.clone();
    for (plant, f) in perturbed.plants.iter_mut().zip(&factors) {
        *plant = plant.scaled(f);
    }
    let threshold = scenario.analysis.consensus_threshold;
    let factors_out = factors.iter().map(|f| nums(f)).collect();
    let outcome = perturbed.build().map_err(RunError::from).and_then(|built| {
        let traj = simulate_closed_loop(&built.closed_loop, &built.x0, &built.config)?;
        Ok((
            consensus_error(&traj, built.closed_loop.io_dim(), threshold),
            traj.base.divergence,
        ))
    });
    match outcome {
        Ok((report, divergence)) => SweepRun {
            run,
            factors: factors_out,
            settled: report.settled && divergence.is_none(),
            settle_time: report.settle_time.map(Num),
            final_error: Num(report.final_error),
            diverged_at: divergence.map(Num),
            error: None,
        },
        Err(e) => SweepRun {
            run,
            factors: factors_out,
            settled: false,
            settle_time: None,
            final_error: Num(f64::NAN),
            diverged_at: None,
            error: Some(e.to_string()),
        },
    }
}

pub fn sweep(scenario: &Scenario, cfg: &SweepConfig) -> Result<SweepReport, SweepError> {
    if !(0.0..=MAX_PERTURBATION).contains(&cfg.perturbation) {
        return Err(SweepError::Perturbation(cfg.perturbation));
    }
    if cfg.runs == 0 {
        return Err(SweepError::NoRuns);
    }
    scenario.validate()?;
    let results: Vec<SweepRun> = draw_factors(scenario, cfg)
        .into_par_iter()
        .enumerate()
        .map(|(run, factors)| one_run(scenario, run + 1, factors))
        .collect();
    let settled = results.iter().filter(|r| r.settled).count();
    Ok(SweepReport {
        perturbation: Num(cfg.perturbation),
        runs: cfg.runs,
        seed: cfg.seed,
        threshold: Num(scenario.analysis.consensus_threshold),
        settled,
        pass_rate: Num(settled as f64 / cfg.runs as f64),
        results,
    })
}

/// Writes `sweep.json` under `out_dir`.
pub fn write_sweep(report: &SweepReport, out_dir: &Path) -> Result<(), RunError> {
    let path = out_dir.join("sweep.json");
    let io = |source| RunError::Io {
        path: path.clone(),
        source,
    };
    fs::create_dir_all(out_dir).map_err(io)?;
    let mut text = serde_json::to_vec_pretty(report).expect("report serializes");
    text.push(b'\n');
    fs::File::create(&path)
        .and_then(|mut f| f.write_all(&text))
        .map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::builtin_pendulum_preset;

    #[test]
    fn factors_are_seeded_and_bounded() {
        let s = builtin_pendulum_preset();
        let cfg = SweepConfig {
            perturbation: 0.2,
            runs: 5,
            seed: 7,
        };
        let a = draw_factors(&s, &cfg);
        assert_eq!(a, draw_factors(&s, &cfg));
        assert_eq!(a.len(), 5);
        assert!(a
            .iter()
            .all(|run| run.len() == 3 && run.iter().all(|p| p.len() == 3)));
        assert!(a
            .iter()
            .flatten()
            .flatten()
            .all(|f| (0.8..=1.2).contains(f)));
        let zero = draw_factors(
            &s,
            &SweepConfig {
                perturbation: 0.0,
                ..cfg
            },
        );
        assert!(zero.iter().flatten().flatten().all(|&f| f == 1.0));
    }

    #[test]
    fn rejects_bad_configs() {
        let s = builtin_pendulum_preset();
        let bad = SweepConfig {
            perturbation: 0.6,
            runs: 1,
            seed: 0,
        };
        assert!(matches!(sweep(&s, &bad), Err(SweepError::Perturbation(_))));
        let none = SweepConfig {
            perturbation: 0.1,
            runs: 0,
            seed: 0,
        };
        assert!(matches!(sweep(&s, &none), Err(SweepError::NoRuns)));
    }
}
