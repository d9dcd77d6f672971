//! Command line, HTTP service and file formats around [`lifestyle_core`].
//!
//! The binary `lifestyle` exposes `allocate`, `solve-hjb`, `welfare`, `sweep`
//! and `serve`. The library half exists so that the CLI, the service and the
//! tests share one code path for every number they print.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod cache;
pub mod cli;
pub mod config;
pub mod report;
pub mod runner;
pub mod service;

use lifestyle_core::Error as CoreError;

pub use cache::{CacheError, SurfaceCache, SurfaceInputs};
pub use config::{Config, ConfigError};

/// Errors of the front ends, each with a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Core errors raised by a numerical method rather than by its inputs.
pub fn is_solver_failure(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::NonConvergence { .. }
            | CoreError::InvariantViolated(_)
            | CoreError::CflViolation(_)
            | CoreError::CharacteristicExitsDomain(_)
            | CoreError::DiffusionDegenerate(_)
            | CoreError::DegenerateProblem
            | CoreError::NegativeWealth(_)
            | CoreError::AllCellsFailed
    )
}

impl AppError {
    /// 2 for configuration and usage errors, 3 for inputs outside the model's
    /// domain, 4 for solver failures, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) | AppError::Usage(_) => 2,
            AppError::Core(e) if is_solver_failure(e) => 4,
            AppError::Core(_) => 3,
            _ => 1,
        }
    }
}

/// Rounds to 12 significant digits, the precision of every JSON number the
/// service and the CLI emit.
pub fn round12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}
