use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The prior has more atoms than the caller allowed to enumerate.
    #[error("enumeration budget exceeded: C(N,k) = {atoms} atoms, cap is {cap}")]
    BudgetExceeded { atoms: String, cap: u64 },

    #[error("invalid prior: N = {n}, k = {k} (need 1 <= k <= N)")]
    InvalidPrior { n: usize, k: usize },

    #[error("signals come from different priors (k = {left} vs k = {right})")]
    MismatchedSparsity { left: usize, right: usize },

    #[error("design row has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("{name} = {value} is outside {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid interval set: {0}")]
    InvalidSet(String),

    #[error("set is not balanced: Gaussian mass {mass} differs from 1/2 by more than {tol:e}")]
    Unbalanced { mass: f64, tol: f64 },

    #[error("Hermite truncation order {order} exceeds the stability cap {cap}")]
    TruncationTooLarge { order: usize, cap: usize },

    #[error("channel is degenerate: P(Y = 1) = {p}")]
    DegenerateChannel { p: f64 },

    #[error("curve value {value} at rho = {rho} is not positive")]
    NonPositiveCurve { rho: f64, value: f64 },

    #[error("beta = {beta} is not in the interior of the curve grid")]
    GridBoundary { beta: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
