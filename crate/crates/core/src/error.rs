use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A size argument was below the allowed minimum.
    InvalidSize {
        what: &'static str,
        got: usize,
        min: usize,
    },
    /// A scalar parameter was outside its domain.
    InvalidParameter { name: &'static str, value: f64 },
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    InvalidWeights(&'static str),
    NotBalanced { node: usize, imbalance: f64 },
    NotStronglyConnected,
    /// The graph has no edges, so its Laplacian cannot be normalized.
    DegenerateGraph,
    InvalidAgent { agent: usize, reason: &'static str },
    /// No strictly feasible point was found for the coupled constraint.
    NoSlaterPoint { slack: f64 },
    /// `1ᵀu > 0` in some coupling coordinate, so `LCP(-εu, L)` has no solution.
    InfeasibleLcp { coordinate: usize, sum: f64 },
    LcpTooLarge { m: usize, max: usize },
    SolverFailure {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    /// The `G1`/`G2` alternation did not contract; a smaller ε is needed.
    NoContraction { eps: f64, last_step: f64 },
    Unsupported(&'static str),
    StateShape(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidSize { what, got, min } => {
                write!(f, "invalid size for {what}: got {got}, need at least {min}")
            }
            Error::InvalidParameter { name, value } => {
                write!(f, "invalid value {value} for parameter `{name}`")
            }
            Error::DimensionMismatch {
                what,
                expected,
                got,
            } => write!(f, "dimension mismatch for {what}: expected {expected}, got {got}"),
            Error::InvalidWeights(why) => write!(f, "invalid weight matrix: {why}"),
            Error::NotBalanced { node, imbalance } => write!(
                f,
                "graph is not weight-balanced at node {node} (in - out = {imbalance:e})"
            ),
            Error::NotStronglyConnected => write!(f, "graph is not strongly connected"),
            Error::DegenerateGraph => write!(f, "graph has no edges"),
            Error::InvalidAgent { agent, reason } => write!(f, "agent {agent}: {reason}"),
            Error::NoSlaterPoint { slack } => {
                write!(f, "no strictly feasible point (best coupling value {slack:e})")
            }
            Error::InfeasibleLcp { coordinate, sum } => write!(
                f,
                "LCP infeasible: coupling coordinate {coordinate} has 1ᵀu = {sum:e} > 0"
            ),
            Error::LcpTooLarge { m, max } => {
                write!(f, "brute-force LCP limited to dimension {max}, got {m}")
            }
            Error::SolverFailure {
                solver,
                iterations,
                residual,
            } => write!(
                f,
                "{solver} did not converge after {iterations} iterations (residual {residual:e})"
            ),
            Error::NoContraction { eps, last_step } => write!(
                f,
                "fixed-point alternation did not contract at eps = {eps} (last step {last_step:e}); try a smaller eps"
            ),
            Error::Unsupported(what) => write!(f, "unsupported problem form: {what}"),
            Error::StateShape(what) => write!(f, "state shape error: {what}"),
        }
    }
}

impl core::error::Error for Error {}
