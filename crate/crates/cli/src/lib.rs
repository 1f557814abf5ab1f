//! Scenario files, batch runs and robustness sweeps for networked
//! negative-imaginary consensus.

pub mod json;
pub mod registry;
pub mod run;
pub mod scenario;
pub mod sweep;

pub use run::{execute, exit_status, run, Metrics, RunError, RunOutput};
pub use scenario::{builtin_pendulum_preset, parse_scenario, preset, Scenario, ScenarioError};
pub use sweep::{sweep, write_sweep, SweepConfig, SweepError, SweepReport};
