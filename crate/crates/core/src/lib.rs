//! Output-feedback consensus for networks of nonlinear negative-imaginary
//! (NI) plants coupled through output strictly NI (OSNI) edge controllers.
//!
//! Plants sit on the nodes of an undirected connected graph, one OSNI
//! controller sits on each edge and is driven by the difference of its
//! endpoint outputs, and the controller outputs are fed back to the plants
//! through the transpose of the incidence matrix in positive feedback.
//!
//! The crate simulates such networks with a fixed-step RK4 integrator and
//! numerically certifies the properties the protocol rests on: the
//! dissipation inequalities of every member, the decrease of the network
//! storage `W = V̂_p + V_c - Ŷ_pᵀ Y_c`, steady states of the controllers and
//! the resulting output consensus.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`.

// `!(a <= b)` is used on purpose so that NaN fails a check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
mod error;
pub mod network;
pub mod ni_library;
pub mod scalar;
pub mod topology;

pub use analysis::{
    check_lyapunov_decrease, check_ni_dissipation, check_osni_dissipation,
    check_steady_state_consequence, consensus_error, detect_steady_state, lyapunov_series,
    sample_positive_definite, total_storage, ConsensusReport, DissipationKind, DissipationReport,
    LyapunovCheck, LyapunovSeries, PositiveDefiniteReport, SteadyStateWindow, StorageRate,
};
pub use dynamics::{rk4_step, simulate, IntegratorConfig, SystemModel, Trajectory};
pub use error::{Error, Result};
pub use network::{
    close_loop, edge_inputs, member_trajectory, node_inputs, parallel_compose,
    simulate_closed_loop, ClosedLoopSystem, Member, NetworkTrajectory, ParallelNetwork, Role,
};
pub use ni_library::{
    make_first_order_osni, make_pendulum, make_second_order_osni, osni_residual_first_order,
    osni_residual_second_order, FirstOrderOsniParams, NonlinearitySpec, PendulumParams,
    SecondOrderOsniParams,
};
pub use scalar::Scalar;
pub use topology::{LaplacianMatrix, OrientedIncidence, UndirectedGraph};

pub type SystemModel64 = SystemModel<f64>;
pub type SystemModel32 = SystemModel<f32>;
pub type Trajectory64 = Trajectory<f64>;
pub type IntegratorConfig64 = IntegratorConfig<f64>;
pub type ClosedLoopSystem64 = ClosedLoopSystem<f64>;
pub type ClosedLoopSystem32 = ClosedLoopSystem<f32>;
pub type NetworkTrajectory64 = NetworkTrajectory<f64>;
pub type PendulumParams64 = PendulumParams<f64>;
pub type FirstOrderOsniParams64 = FirstOrderOsniParams<f64>;
pub type SecondOrderOsniParams64 = SecondOrderOsniParams<f64>;
pub type LyapunovSeries64 = LyapunovSeries<f64>;
pub type ConsensusReport64 = ConsensusReport<f64>;
pub type DissipationReport64 = DissipationReport<f64>;
