//! Error type shared by every module of the crate.

use alloc::string::String;

/// Failures reported by the allocation engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Vector or matrix sizes disagree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// Covariance matrix is not symmetric positive definite.
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
    /// No risky asset has a drift above the risk-free rate.
    #[error("no risky asset has drift above the risk-free rate")]
    NoExcessReturn,
    /// A scalar input is outside its admissible range.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Contribution schedule is malformed.
    #[error("invalid contribution schedule: {0}")]
    InvalidSchedule(String),
    /// Time lies outside `[0, T]`.
    #[error("time {0} outside the contribution horizon")]
    TimeOutOfRange(f64),
    /// Negative risky-investment budget.
    #[error("budget bound {0} is negative")]
    InfeasibleAlpha(f64),
    /// No active set produced a KKT point (numerically degenerate problem).
    #[error("no active set satisfied the KKT conditions")]
    DegenerateProblem,
    /// Solved surface left its admissible range.
    #[error("invariant violated: {0}")]
    InvariantViolated(String),
    /// Newton iteration did not converge.
    #[error("nonlinear iteration failed to converge at t = {time} (update {update:e})")]
    NonConvergence {
        /// Calendar time of the failing step.
        time: f64,
        /// Size of the last Newton update.
        update: f64,
    },
    /// Explicit time step violates the stability bound.
    #[error("time step violates the CFL bound (ratio {0})")]
    CflViolation(f64),
    /// A characteristic left the computational domain.
    #[error("characteristic left the domain at z = {0}")]
    CharacteristicExitsDomain(f64),
    /// Two grids that must match do not.
    #[error("incompatible grid: {0}")]
    IncompatibleGrid(String),
    /// Query outside the solved domain.
    #[error("query (t = {t}, z = {z}) outside the solved domain")]
    OutOfDomain {
        /// Time of the query.
        t: f64,
        /// Log-wealth of the query.
        z: f64,
    },
    /// Regression needs at least two points.
    #[error("at least two points are required, got {0}")]
    InsufficientPoints(usize),
    /// Diffusion coefficient vanished for a strategy that is not riskless.
    #[error("diffusion coefficient {0:e} below the parabolicity floor")]
    DiffusionDegenerate(f64),
    /// Expected utility has the wrong sign for the utility function.
    #[error("expected utility {0} has the wrong sign for the risk aversion")]
    SignMismatch(f64),
    /// IRR root is not bracketed.
    #[error("certainty equivalent {0} outside the achievable IRR range")]
    BracketFailure(f64),
    /// Simulated wealth went negative.
    #[error("negative wealth {0} in simulation; reduce the time step")]
    NegativeWealth(f64),
    /// Lifetime wealth is below the present value of contributions.
    #[error("lifetime wealth {wealth} below the present value {pv}")]
    WealthBelowPv {
        /// Lifetime wealth supplied.
        wealth: f64,
        /// Present value of future contributions.
        pv: f64,
    },
    /// Inverse transform produced a negative bank holding.
    #[error("inverse transform yields negative bank holding {0}")]
    NegativeBankAfterInverse(f64),
    /// Every sweep cell failed.
    #[error("all sweep cells failed")]
    AllCellsFailed,
    /// Strategy definition is inconsistent.
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
}

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
