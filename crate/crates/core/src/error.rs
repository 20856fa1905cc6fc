use thiserror::Error;

use crate::mfg::MfgSolution;

/// Errors raised by graph construction, activations and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("row {row} of the rate matrix sums to {sum:e}, expected 0")]
    NonConservativeRates { row: usize, sum: f64 },

    #[error("negative off-diagonal rate {value:e} at ({i}, {j})")]
    NegativeRate { i: usize, j: usize, value: f64 },

    #[error("chain is not irreducible: {0}")]
    Irreducibility(String),

    #[error("detailed balance fails at ({i}, {j}): |Q_ij pi_i - Q_ji pi_j| = {residual:e}")]
    DetailedBalanceViolation { i: usize, j: usize, residual: f64 },

    #[error("edge weights are not symmetric at ({i}, {j})")]
    AsymmetricWeights { i: usize, j: usize },

    #[error("invariant measure entry {index} is {value:e}; entries must be positive and sum to 1")]
    NonPositiveMeasure { index: usize, value: f64 },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("unknown activation kind `{0}`")]
    UnknownKind(String),

    #[error("generator is not strictly convex: phi''({x:e}) = {value:e}")]
    NonConvexGenerator { x: f64, value: f64 },

    #[error("dissipation derivative vanishes away from zero at xi = {xi:e}")]
    DegenerateDissipation { xi: f64 },

    #[error("({i}, {j}) is not an edge of the graph")]
    NotAnEdge { i: usize, j: usize },

    #[error("Lagrangian exponent must exceed 1, got {0}")]
    BadExponent(f64),

    #[error("density left the simplex at t = {time}: p[{index}] = {value:e}")]
    PositivityLoss { time: f64, index: usize, value: f64 },

    #[error("(theta, phi, psi*) triple is inconsistent: identity residual {residual:e}")]
    InconsistentTriple { residual: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("problem has no potential structure")]
    NoPotentialStructure,

    #[error("concavity requirement violated: {0}")]
    NotConcave(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        partial: Option<Box<MfgSolution>>,
    },

    #[error("Hamiltonian is not constant along the trajectory (spread {spread:e})")]
    NonConstantHamiltonian { spread: f64 },

    #[error("expected a two-state problem, got {0} states")]
    WrongStateCount(usize),

    #[error("state {x} is outside the open interval (0, 1)")]
    OutOfDomain { x: f64 },

    #[error("implicit midpoint iteration diverged at s = {time}")]
    MidpointDivergence { time: f64 },

    #[error("quadrature tolerance not met (estimate {estimate:e}, error {error:e})")]
    QuadratureFailure { estimate: f64, error: f64 },

    #[error("no monotone path: {0}")]
    NoMonotonePath(String),

    #[error("Newton iteration failed after {iterations} iterations, residuals {residuals:?}")]
    NewtonFailure { iterations: usize, residuals: Vec<f64> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for solver non-convergence, as opposed to a numerical-domain failure.
    pub fn is_non_convergence(&self) -> bool {
        matches!(self, Error::NonConvergence { .. } | Error::NewtonFailure { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
