//! Declarative scenario documents (TOML).
//!
//! Node labels in scenario files are 1-based; they are mapped to 0-based
//! indices when the network is built. Unknown keys are rejected.

use std::collections::BTreeMap;

use ni_consensus::analysis::{
    DEFAULT_CONSENSUS_THRESHOLD, DEFAULT_LYAPUNOV_TOL, DEFAULT_MIN_DURATION, DEFAULT_RATE_TOL,
    DEFAULT_STEADY_STATE_TOL,
};
use ni_consensus::{
    close_loop, make_first_order_osni, make_pendulum, make_second_order_osni, parallel_compose,
    ClosedLoopSystem64, FirstOrderOsniParams, IntegratorConfig64, NonlinearitySpec, PendulumParams,
    Role, SecondOrderOsniParams, SystemModel64, UndirectedGraph,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario document: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ScenarioError {
    pub(crate) fn at(path: impl Into<String>, message: impl ToString) -> Self {
        Self::Invalid {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    pub graph: GraphSpec,
    pub plants: Vec<PlantSpec>,
    pub controllers: Vec<ControllerSpec>,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub nodes: usize,
    /// 1-based node label pairs.
    pub edges: Vec<[usize; 2]>,
    /// Per-edge orientation flips, in canonical edge order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nonlinearity {
    #[serde(default)]
    pub linear: f64,
    #[serde(default)]
    pub cubic: f64,
    #[serde(default)]
    pub sine: f64,
}

impl From<&Nonlinearity> for NonlinearitySpec<f64> {
    fn from(n: &Nonlinearity) -> Self {
        NonlinearitySpec::new(n.linear, n.cubic, n.sine)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    Pendulum {
        mass: f64,
        length: f64,
        spring: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gravity: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_state: Option<Vec<f64>>,
    },
    FirstOrderOsni {
        rho: Nonlinearity,
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_state: Option<Vec<f64>>,
    },
    SecondOrderOsni {
        eta: Nonlinearity,
        alpha: f64,
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_state: Option<Vec<f64>>,
    },
    /// A model from the built-in registry, looked up by name.
    Custom {
        name: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_state: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerSpec {
    FirstOrderOsni {
        rho: Nonlinearity,
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_state: Option<Vec<f64>>,
    },
    SecondOrderOsni {
        eta: Nonlinearity,
        alpha: f64,
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_state: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSpec {
    pub step: f64,
    pub t_end: f64,
    pub record_every: usize,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self {
            step: 1e-3,
            t_end: 30.0,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSpec {
    pub consensus_threshold: f64,
    pub lyapunov_tol: f64,
    /// Absolute dissipation tolerance; when absent the tolerance is
    /// `1e-6 + 1e-4 · max|supply|` per member.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dissipation_tol: Option<f64>,
    pub rate_tol: f64,
    pub min_duration: f64,
    pub steady_state_tol: f64,
    pub pd_radius: f64,
    pub pd_samples: usize,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            consensus_threshold: DEFAULT_CONSENSUS_THRESHOLD,
            lyapunov_tol: DEFAULT_LYAPUNOV_TOL,
            dissipation_tol: None,
            rate_tol: DEFAULT_RATE_TOL,
            min_duration: DEFAULT_MIN_DURATION,
            steady_state_tol: DEFAULT_STEADY_STATE_TOL,
            pd_radius: 1.0,
            pd_samples: 1000,
        }
    }
}

impl PlantSpec {
    pub fn initial_state(&self) -> Option<&[f64]> {
        match self {
            Self::Pendulum { initial_state, .. }
            | Self::FirstOrderOsni { initial_state, .. }
            | Self::SecondOrderOsni { initial_state, .. }
            | Self::Custom { initial_state, .. } => initial_state.as_deref(),
        }
    }

    pub fn build(&self, path: &str) -> Result<SystemModel64, ScenarioError> {
        let model = match self {
            Self::Pendulum {
                mass,
                length,
                spring,
                gravity,
                ..
            } => PendulumParams::with_gravity(
                *mass,
                *length,
                *spring,
                gravity.unwrap_or(ni_consensus::ni_library::GRAVITY),
            )
            .and_then(make_pendulum),
            Self::FirstOrderOsni {
                rho,
                alpha,
                epsilon,
                ..
            } => FirstOrderOsniParams::new(rho.into(), *alpha, *epsilon)
                .and_then(make_first_order_osni),
            Self::SecondOrderOsni {
                eta,
                alpha,
                beta,
                epsilon,
                ..
            } => SecondOrderOsniParams::new(eta.into(), *alpha, *beta, *epsilon)
                .and_then(make_second_order_osni),
            Self::Custom { name, params, .. } => {
                return registry::build(name, params).map_err(|e| ScenarioError::at(path, e))
            }
        };
        model.map_err(|e| ScenarioError::at(path, e))
    }

    /// Scales the physical parameters by `factors` (one per parameter, in
    /// [`Self::perturbable_params`] order).
    pub fn scaled(&self, factors: &[f64]) -> Self {
        let mut out = self.clone();
        match &mut out {
            Self::Pendulum {
                mass,
                length,
                spring,
                ..
            } => {
                *mass *= factors[0];
                *length *= factors[1];
                *spring *= factors[2];
            }
            Self::Custom { params, .. } => {
                for (v, f) in params.values_mut().zip(factors) {
                    *v *= f;
                }
            }
            Self::FirstOrderOsni { .. } | Self::SecondOrderOsni { .. } => {}
        }
        out
    }

    /// Number of parameters a robustness sweep perturbs.
    pub fn perturbable_params(&self) -> usize {
        match self {
            Self::Pendulum { .. } => 3,
            Self::Custom { params, .. } => params.len(),
            Self::FirstOrderOsni { .. } | Self::SecondOrderOsni { .. } => 0,
        }
    }
}

impl ControllerSpec {
    pub fn initial_state(&self) -> Option<&[f64]> {
        match self {
            Self::FirstOrderOsni { initial_state, .. }
            | Self::SecondOrderOsni { initial_state, .. } => initial_state.as_deref(),
        }
    }

    pub fn build(&self, path: &str) -> Result<SystemModel64, ScenarioError> {
        let model = match self {
            Self::FirstOrderOsni {
                rho,
                alpha,
                epsilon,
                ..
            } => FirstOrderOsniParams::new(rho.into(), *alpha, *epsilon)
                .and_then(make_first_order_osni),
            Self::SecondOrderOsni {
                eta,
                alpha,
                beta,
                epsilon,
                ..
            } => SecondOrderOsniParams::new(eta.into(), *alpha, *beta, *epsilon)
                .and_then(make_second_order_osni),
        };
        model.map_err(|e| ScenarioError::at(path, e))
    }
}

/// A scenario turned into simulation inputs.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub graph: UndirectedGraph,
    pub closed_loop: ClosedLoopSystem64,
    pub x0: Vec<f64>,
    pub config: IntegratorConfig64,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    fn graph(&self) -> Result<UndirectedGraph, ScenarioError> {
        let n = self.graph.nodes;
        let mut edges = Vec::with_capacity(self.graph.edges.len());
        for (k, &[a, b]) in self.graph.edges.iter().enumerate() {
            for label in [a, b] {
                if label == 0 || label > n {
                    return Err(ScenarioError::at(
                        format!("graph.edges[{k}]"),
                        format!("node label {label} outside 1..={n}"),
                    ));
                }
            }
            edges.push((a - 1, b - 1));
        }
        UndirectedGraph::new(n, &edges).map_err(|e| ScenarioError::at("graph", e))
    }

    /// Checks everything except the model constructors' own invariants,
    /// which [`Self::build`] reports.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.build().map(|_| ())
    }

    pub fn build(&self) -> Result<BuiltScenario, ScenarioError> {
        let graph = self.graph()?;
        if graph.n_edges() == 0 || !graph.is_connected() {
            return Err(ScenarioError::at(
                "graph",
                "communication graph is not connected",
            ));
        }
        if let Some(flip) = &self.graph.flip {
            if flip.len() != graph.n_edges() {
                return Err(ScenarioError::at(
                    "graph.flip",
                    format!(
                        "expected {} entries (one per edge), found {}",
                        graph.n_edges(),
                        flip.len()
                    ),
                ));
            }
        }
        if self.plants.len() != graph.n_nodes() {
            return Err(ScenarioError::at(
                "plants",
                format!(
                    "expected {} entries (one per node), found {}",
                    graph.n_nodes(),
                    self.plants.len()
                ),
            ));
        }
        if self.controllers.len() != graph.n_edges() {
            return Err(ScenarioError::at(
                "controllers",
                format!(
                    "expected {} entries (one per distinct edge), found {}",
                    graph.n_edges(),
                    self.controllers.len()
                ),
            ));
        }
        let q = graph
            .orient(self.graph.flip.as_deref())
            .map_err(|e| ScenarioError::at("graph.flip", e))?;

        let plants = self
            .plants
            .iter()
            .enumerate()
            .map(|(i, p)| p.build(&format!("plants[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let controllers = self
            .controllers
            .iter()
            .enumerate()
            .map(|(k, c)| c.build(&format!("controllers[{k}]")))
            .collect::<Result<Vec<_>, _>>()?;

        let mut x0 = Vec::new();
        let initial = self
            .plants
            .iter()
            .map(PlantSpec::initial_state)
            .zip(&plants)
            .enumerate()
            .map(|(i, s)| (format!("plants[{i}].initial_state"), s))
            .chain(
                self.controllers
                    .iter()
                    .map(ControllerSpec::initial_state)
                    .zip(&controllers)
                    .enumerate()
                    .map(|(k, s)| (format!("controllers[{k}].initial_state"), s)),
            );
        for (path, (state, model)) in initial {
            match state {
                Some(s) if s.len() != model.state_dim() => {
                    return Err(ScenarioError::at(
                        path,
                        format!(
                            "expected {} components, found {}",
                            model.state_dim(),
                            s.len()
                        ),
                    ))
                }
                Some(s) => x0.extend_from_slice(s),
                None => x0.extend(std::iter::repeat_n(0.0, model.state_dim())),
            }
        }

        let plant_net =
            parallel_compose(plants, Role::Plants).map_err(|e| ScenarioError::at("plants", e))?;
        let ctrl_net = parallel_compose(controllers, Role::Controllers)
            .map_err(|e| ScenarioError::at("controllers", e))?;
        let closed_loop =
            close_loop(plant_net, ctrl_net, q).map_err(|e| ScenarioError::at("graph", e))?;
        let it = self.integrator;
        let config = IntegratorConfig64::new(it.step, it.t_end, it.record_every)
            .map_err(|e| ScenarioError::at("integrator", e))?;
        self.validate_analysis()?;
        Ok(BuiltScenario {
            graph,
            closed_loop,
            x0,
            config,
        })
    }

    fn validate_analysis(&self) -> Result<(), ScenarioError> {
        let a = &self.analysis;
        let positive = [
            ("consensus_threshold", a.consensus_threshold),
            ("rate_tol", a.rate_tol),
            ("pd_radius", a.pd_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ScenarioError::at(
                    format!("analysis.{name}"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        let nonnegative = [
            ("lyapunov_tol", a.lyapunov_tol),
            ("min_duration", a.min_duration),
            ("steady_state_tol", a.steady_state_tol),
            ("dissipation_tol", a.dissipation_tol.unwrap_or(0.0)),
        ];
        for (name, v) in nonnegative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ScenarioError::at(
                    format!("analysis.{name}"),
                    format!("must be non-negative, got {v}"),
                ));
            }
        }
        if a.pd_samples == 0 {
            return Err(ScenarioError::at(
                "analysis.pd_samples",
                "must be at least 1",
            ));
        }
        Ok(())
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    Scenario::parse(text)
}

/// Shipped scenario document for the three-pendulum example.
pub const PENDULUM3_TOML: &str = include_str!("../scenarios/pendulum3.toml");

/// Three heterogeneous pendulums on a path graph with two cubic OSNI edge
/// controllers.
pub fn builtin_pendulum_preset() -> Scenario {
    let pendulum = |mass, length, spring, angle| PlantSpec::Pendulum {
        mass,
        length,
        spring,
        gravity: Some(9.8),
        initial_state: Some(vec![angle, 0.0]),
    };
    let cubic = |beta: f64, phi: f64, alpha: f64| ControllerSpec::FirstOrderOsni {
        rho: Nonlinearity {
            linear: -beta,
            cubic: -phi,
            sine: 0.0,
        },
        alpha,
        epsilon: Some(1.0 / alpha),
        initial_state: Some(vec![0.0]),
    };
    Scenario {
        seed: 42,
        graph: GraphSpec {
            nodes: 3,
            edges: vec![[1, 2], [2, 3]],
            flip: None,
        },
        plants: vec![
            pendulum(1.0, 0.5, 3.0, 0.6),
            pendulum(1.5, 0.3, 5.0, -0.4),
            pendulum(0.5, 0.8, 6.0, 0.9),
        ],
        controllers: vec![cubic(10.0, 15.0, 20.0), cubic(20.0, 5.0, 30.0)],
        integrator: IntegratorSpec::default(),
        analysis: AnalysisSpec::default(),
    }
}

/// Looks up a built-in scenario by name.
pub fn preset(name: &str) -> Option<Scenario> {
    match name {
        "pendulum3" => Some(builtin_pendulum_preset()),
        _ => None,
    }
}
