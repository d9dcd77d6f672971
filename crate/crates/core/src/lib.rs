//! Optimal and near-optimal stochastic lifestyling for defined-contribution
//! pension savings.
//!
//! The crate solves the credit-constrained life-cycle investment problem for a
//! saver with CRRA preferences who contributes at a deterministic rate and may
//! not borrow against future contributions. It provides
//!
//! * [`market`]: market and contribution data, present value of future
//!   contributions and the capital ratio `alpha = W / (W + PV)`;
//! * [`cqp`]: the constrained mean-variance program
//!   `max pi.m - rho/2 pi Sigma pi'` over `{pi >= 0, pi.1 <= alpha}` and the
//!   explicit heuristic strategies built on it;
//! * [`samuelson`]: the transform between the world with contributions and
//!   the world where all capital is paid up front;
//! * [`hjb`]: the finite-difference solver for the indirect risk aversion
//!   surface and the resulting optimal policy;
//! * [`welfare`]: certainty equivalents and internal rates of return by PDE and
//!   by Monte Carlo;
//! * [`sweep`]: the factorial robustness study.
//!
//! The crate is `no_std` and only needs an allocator.
#![no_std]
#![warn(missing_docs)]
// NaN must fail validation, hence `!(x > 0.0)`; kernels index several arrays at once
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod cqp;
pub mod error;
pub mod grid;
pub mod hjb;
pub mod linalg;
pub mod market;
mod numeric;
pub mod pde;
pub mod samuelson;
pub mod sweep;
pub mod welfare;

pub use cqp::{ActiveSet, Allocation, Constraint, MeanVariance};
pub use error::{Error, Result};
pub use grid::{Fidelity, GridSpec};
pub use hjb::{RiskAversionSurface, SolverOptions, ValueSurface};
pub use market::{ContributionSchedule, MarketParams, PvCurve};
pub use welfare::{Strategy, StrategyKind};
