use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("graph must have at least one node")]
    NoNodes,
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("node index {node} out of range for a graph with {n_nodes} nodes")]
    NodeOutOfRange { node: usize, n_nodes: usize },
    #[error("{what}: expected length {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{what}: expected {expected}, found {found}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("storage function is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("missing storage function: {0}")]
    MissingStorage(String),
    #[error("controller {0} has no declared output strictness level")]
    MissingStrictness(usize),
    #[error("communication graph is not connected")]
    Disconnected,
    #[error("invalid integrator config: {0}")]
    InvalidConfig(String),
    #[error("non-finite or unbounded state at t = {time}")]
    Divergence { time: f64 },
    #[error("grid too short for finite differences: {0} points, need at least 3")]
    GridTooShort(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            what,
            expected,
            found,
        })
    }
}
