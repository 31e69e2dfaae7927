use thiserror::Error;

/// Errors produced by the network model, solvers, oracles and analyses.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid path set: {0}")]
    InvalidPaths(String),
    #[error("no path connects origin {origin} to destination {destination}")]
    NoPathExists { origin: String, destination: String },
    #[error("more than {max_paths} simple origin-destination paths")]
    PathBudgetExceeded { max_paths: usize },
    #[error("unknown link id {0:?}")]
    UnknownLink(String),
    #[error("empty support: the selected path set has no columns")]
    EmptySupport,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("infeasible flow: {0}")]
    InfeasibleFlow(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("operation requires linear link costs (n = 1 on every link)")]
    RequiresLinearCosts,
    #[error("too many paths for support enumeration: {paths} > {limit}")]
    TooManyPaths { paths: usize, limit: usize },
    #[error("no valid equilibrium support found ({0})")]
    NoValidSupport(String),
    #[error("grid of {points} points exceeds the budget of {budget}")]
    GridBudgetExceeded { points: u128, budget: u128 },
    #[error("network is not a path multigraph: {0}")]
    NotPathMultigraph(String),
    #[error("cannot parse network file: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
