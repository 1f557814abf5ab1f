use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ni_consensus_cli::run::{EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_PASS};
use ni_consensus_cli::{preset, run, sweep, write_sweep, Scenario, SweepConfig};

/// Consensus of heterogeneous negative-imaginary agents under
/// output-strictly NI edge controllers.
#[derive(Debug, Parser)]
#[command(name = "ni-consensus", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario, run all checks and write artifacts.
    ///
    /// Exit status: 0 all checks pass, 1 a check failed, 2 the simulation
    /// diverged, 3 invalid input or I/O failure.
    Run {
        /// Scenario TOML file, or the name of a built-in preset.
        scenario: String,
        #[arg(long, env = "NI_CONSENSUS_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Run a built-in scenario.
    Preset {
        name: PresetName,
        #[arg(long, env = "NI_CONSENSUS_OUT", default_value = "out")]
        out: PathBuf,
        /// Print the scenario document instead of running it.
        #[arg(long)]
        print: bool,
    },
    /// Repeat a scenario with randomly scaled plant parameters.
    ///
    /// Exit status: 0 every run settled, 1 otherwise, 3 invalid input.
    Sweep {
        scenario: String,
        /// Relative half-width p of the uniform scale factors [1-p, 1+p].
        #[arg(long, default_value_t = 0.2)]
        perturb: f64,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, env = "NI_CONSENSUS_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Parse and check a scenario without simulating it.
    Validate { scenario: String },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetName {
    Pendulum3,
}

fn load(arg: &str) -> Result<Scenario, String> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(s) = preset(arg) {
            return Ok(s);
        }
    }
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {arg}: {e}"))?;
    Scenario::parse(&text).map_err(|e| format!("{arg}: {e}"))
}

fn run_and_report(scenario: &Scenario, out: &Path) -> Result<i32, String> {
    let output = run(scenario, out).map_err(|e| e.to_string())?;
    let m = &output.metrics;
    let settle = m
        .consensus
        .settle_time
        .map_or_else(|| "never".to_owned(), |t| format!("{:.3} s", t.0));
    println!(
        "consensus error {:.3e} (settled: {settle}); W {:.6} -> {:.6}",
        m.consensus.final_error.0,
        m.lyapunov.w0.map_or(f64::NAN, |w| w.0),
        m.lyapunov.w_end.map_or(f64::NAN, |w| w.0),
    );
    let c = &m.checks;
    for (name, ok) in [
        ("dissipation", c.dissipation),
        ("lyapunov", c.lyapunov),
        ("positive_definite", c.positive_definite),
        ("consensus", c.consensus),
        ("steady_state", c.steady_state),
    ] {
        println!("  {name:<18} {}", if ok { "pass" } else { "FAIL" });
    }
    if let Some(t) = m.diverged_at {
        println!("diverged at t = {}", t.0);
    }
    println!("artifacts written to {}", out.display());
    Ok(m.status)
}

fn dispatch(cli: Cli) -> Result<i32, String> {
    match cli.command {
        Command::Run { scenario, out } => run_and_report(&load(&scenario)?, &out),
        Command::Preset { name, out, print } => {
            let scenario = match name {
                PresetName::Pendulum3 => ni_consensus_cli::builtin_pendulum_preset(),
            };
            if print {
                print!("{}", scenario.to_toml());
                Ok(EXIT_PASS)
            } else {
                run_and_report(&scenario, &out)
            }
        }
        Command::Sweep {
            scenario,
            perturb,
            runs,
            seed,
            out,
        } => {
            let scenario = load(&scenario)?;
            let cfg = SweepConfig {
                perturbation: perturb,
                runs,
                seed,
            };
            let report = sweep(&scenario, &cfg).map_err(|e| e.to_string())?;
            write_sweep(&report, &out).map_err(|e| e.to_string())?;
            println!(
                "{}/{} runs settled (pass rate {:.3}); wrote {}",
                report.settled,
                report.runs,
                report.pass_rate.0,
                out.join("sweep.json").display()
            );
            Ok(if report.all_settled() {
                EXIT_PASS
            } else {
                EXIT_CHECK_FAILED
            })
        }
        Command::Validate { scenario } => {
            let s = load(&scenario)?;
            println!(
                "ok: {} plants, {} controllers",
                s.plants.len(),
                s.controllers.len()
            );
            Ok(EXIT_PASS)
        }
    }
}

fn main() -> ExitCode {
    let code = dispatch(Cli::parse()).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_INVALID
    });
    ExitCode::from(code as u8)
}
