//! Constrained mean-variance allocation.
//!
//! For a budget `alpha >= 0` and risk aversion `rho > 0` the program
//!
//! ```text
//!     maximize    pi.(mu - r 1) - rho/2 pi Sigma pi'
//!     subject to  pi >= 0,  pi.1 <= alpha
//! ```
//!
//! has a unique maximizer `pi_hat(alpha, rho)`. It is found by enumerating the
//! active sets (at most `2^(d+1)` of them), solving each equality-constrained
//! subproblem in closed form and keeping the candidate that is both primal and
//! dual feasible. For a fixed active set the solution is affine in `alpha` and
//! in `1/rho`, so both coefficient vectors are computed once per market and a
//! query costs a handful of multiply-adds.
//!
//! The heuristic strategies `pi0..pi3` are thin wrappers over the solver.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;
use crate::market::MarketParams;

/// Risk aversion used for the `alpha -> 0` limit of [`MeanVariance::pi3`].
pub const PI3_ZERO_BUDGET_RHO: f64 = 1e-8;

const DUAL_TOLERANCE: f64 = 1e-10;

/// A binding constraint of the allocation program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Constraint {
    /// Asset `i` held at zero.
    AtZero(usize),
    /// Risky budget fully used, `pi.1 = alpha`.
    BudgetFull,
}

/// Set of constraints holding with equality.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActiveSet {
    zeros: Vec<usize>,
    budget: bool,
}

impl ActiveSet {
    /// Builds an active set; indices are sorted and deduplicated.
    pub fn new(mut zeros: Vec<usize>, budget: bool) -> Self {
        zeros.sort_unstable();
        zeros.dedup();
        Self { zeros, budget }
    }

    /// Assets held at zero.
    pub fn zeros(&self) -> &[usize] {
        &self.zeros
    }

    /// Whether `pi.1 = alpha` binds.
    pub fn budget_full(&self) -> bool {
        self.budget
    }

    /// Number of binding constraints.
    pub fn len(&self) -> usize {
        self.zeros.len() + usize::from(self.budget)
    }

    /// No constraint binds.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Constraints in canonical order (zeros first, then the budget).
    pub fn constraints(&self) -> Vec<Constraint> {
        let mut out: Vec<Constraint> = self.zeros.iter().map(|&i| Constraint::AtZero(i)).collect();
        if self.budget {
            out.push(Constraint::BudgetFull);
        }
        out
    }

    fn is_at_zero(&self, i: usize) -> bool {
        self.zeros.binary_search(&i).is_ok()
    }
}

/// Optimal weights together with their KKT certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Proportions invested in each risky asset.
    pub weights: Vec<f64>,
    /// Budget `alpha` of the program that produced the weights.
    pub budget_bound: f64,
    /// Binding constraints.
    pub active_set: ActiveSet,
    /// Lagrange multipliers, one per entry of [`ActiveSet::constraints`].
    pub multipliers: Vec<f64>,
}

impl Allocation {
    fn zero(d: usize, budget_bound: f64, budget: bool) -> Self {
        let active_set = ActiveSet::new((0..d).collect(), budget);
        let multipliers = vec![0.0; active_set.len()];
        Self {
            weights: vec![0.0; d],
            budget_bound,
            active_set,
            multipliers,
        }
    }

    /// Total risky proportion `pi.1`.
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Proportion held in the bank account.
    pub fn cash(&self) -> f64 {
        1.0 - self.total()
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    active: ActiveSet,
    /// Weights per unit of `1/rho`.
    per_inv_rho: Vec<f64>,
    /// Weights per unit of `alpha`.
    per_alpha: Vec<f64>,
    /// Multipliers `eta = eta_const + (rho alpha) eta_per_budget`.
    eta_const: Vec<f64>,
    eta_per_budget: Vec<f64>,
}

/// Mean-variance program prepared for one market.
#[derive(Debug, Clone)]
pub struct MeanVariance {
    dim: usize,
    excess: Vec<f64>,
    covariance: Vec<f64>,
    tangency: Vec<f64>,
    min_variance: Vec<f64>,
    candidates: Vec<Candidate>,
}

impl MeanVariance {
    /// Prepares the program for validated market parameters.
    pub fn new(params: &MarketParams) -> Result<Self> {
        let d = params.dim();
        let excess = params.excess_returns();
        let covariance = params.covariance().to_vec();
        let chol = linalg::cholesky(&covariance, d).ok_or(Error::NotPositiveDefinite)?;

        let mut tangency = excess.clone();
        linalg::cholesky_solve(&chol, d, &mut tangency);
        let mut inv_ones = vec![1.0; d];
        linalg::cholesky_solve(&chol, d, &mut inv_ones);
        let denom: f64 = inv_ones.iter().sum();
        let min_variance: Vec<f64> = inv_ones.iter().map(|v| v / denom).collect();

        // b1 for rho = 1: sigma^{-1} (mu - r 1) with sigma the Cholesky factor.
        let mut b1_unit = excess.clone();
        linalg::forward_substitute(&chol, d, &mut b1_unit);
        let zero_b1 = vec![0.0; d];
        let snap = 1e-13 * tangency.iter().map(|x| x.abs()).fold(0.0, f64::max);

        let mut candidates = Vec::new();
        for size in 0..=d {
            for mask in 0u32..(1u32 << (d + 1)) {
                let budget = mask & 1 == 1;
                let zeros: Vec<usize> = (0..d).filter(|i| mask & (1 << (i + 1)) != 0).collect();
                let active = ActiveSet::new(zeros, budget);
                if active.len() != size {
                    continue;
                }
                if let Some(c) =
                    Self::candidate(&chol, d, &excess, &tangency, &b1_unit, &zero_b1, active, snap)
                {
                    candidates.push(c);
                }
            }
        }

        Ok(Self {
            dim: d,
            excess,
            covariance,
            tangency,
            min_variance,
            candidates,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn candidate(
        chol: &[f64],
        d: usize,
        excess: &[f64],
        tangency: &[f64],
        b1_unit: &[f64],
        zero_b1: &[f64],
        active: ActiveSet,
        snap: f64,
    ) -> Option<Candidate> {
        let rows = constraint_rows(&active, d);
        let k = rows.len() / d.max(1);
        if active.is_empty() {
            return Some(Candidate {
                active,
                per_inv_rho: tangency.to_vec(),
                per_alpha: vec![0.0; d],
                eta_const: Vec::new(),
                eta_per_budget: Vec::new(),
            });
        }
        let zero_b2 = vec![0.0; k];
        let mut unit_b2 = vec![0.0; k];
        if active.budget {
            unit_b2[k - 1] = 1.0;
        }
        let mut per_inv_rho = block_formula(chol, d, &rows, b1_unit, &zero_b2)?;
        let mut per_alpha = if active.budget {
            block_formula(chol, d, &rows, zero_b1, &unit_b2)?
        } else {
            vec![0.0; d]
        };
        for i in 0..d {
            if active.is_at_zero(i) {
                per_inv_rho[i] = 0.0;
                per_alpha[i] = 0.0;
            }
            if per_inv_rho[i].abs() < snap {
                per_inv_rho[i] = 0.0;
            }
        }

        // eta = M^{-1} (A2 h - rho b2), M = A2 Sigma^{-1} A2'.
        let m = schur(chol, d, &rows);
        let a2h: Vec<f64> = (0..k).map(|r| linalg::dot(&rows[r * d..(r + 1) * d], tangency)).collect();
        let eta_const = linalg::solve_dense(&m, k, &a2h)?;
        let neg_unit: Vec<f64> = unit_b2.iter().map(|x| -x).collect();
        let eta_per_budget = linalg::solve_dense(&m, k, &neg_unit)?;
        let _ = excess;
        Some(Candidate {
            active,
            per_inv_rho,
            per_alpha,
            eta_const,
            eta_per_budget,
        })
    }

    /// Number of risky assets.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Excess returns `mu - r 1`.
    pub fn excess(&self) -> &[f64] {
        &self.excess
    }

    /// Covariance matrix, row-major.
    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    /// Unconstrained unit-risk-aversion weights `Sigma^{-1} (mu - r 1)`.
    pub fn unconstrained_weights(&self) -> &[f64] {
        &self.tangency
    }

    /// Minimum variance portfolio `Sigma^{-1} 1 / (1' Sigma^{-1} 1)`.
    pub fn min_variance_portfolio(&self) -> &[f64] {
        &self.min_variance
    }

    /// Writes `pi_hat(alpha, rho)` into `out` without allocating.
    ///
    /// `hint` holds the index of the candidate that succeeded last time and is
    /// tried first; it is updated on return.
    pub fn solve_into(&self, alpha: f64, rho: f64, hint: &mut usize, out: &mut [f64]) -> Result<()> {
        check_inputs(alpha, rho)?;
        if alpha == 0.0 || rho == f64::INFINITY {
            out.iter_mut().for_each(|x| *x = 0.0);
            return Ok(());
        }
        if *hint < self.candidates.len() && self.try_candidate(*hint, alpha, rho, out) {
            return Ok(());
        }
        for idx in 0..self.candidates.len() {
            if self.try_candidate(idx, alpha, rho, out) {
                *hint = idx;
                return Ok(());
            }
        }
        Err(Error::DegenerateProblem)
    }

    fn fill(&self, c: &Candidate, alpha: f64, rho: f64, out: &mut [f64]) {
        let inv = 1.0 / rho;
        for i in 0..self.dim {
            out[i] = c.per_inv_rho[i] * inv + c.per_alpha[i] * alpha;
        }
    }

    fn try_candidate(&self, idx: usize, alpha: f64, rho: f64, out: &mut [f64]) -> bool {
        let c = &self.candidates[idx];
        self.fill(c, alpha, rho, out);
        let scale = 1.0 + alpha + out.iter().map(|x| x.abs()).sum::<f64>();
        let tol = 1e-12 * scale;
        if out.iter().any(|&x| x < -tol) {
            return false;
        }
        if !c.active.budget && out.iter().sum::<f64>() > alpha + tol {
            return false;
        }
        let budget_term = rho * alpha;
        c.eta_const.iter().zip(&c.eta_per_budget).all(|(e0, e1)| {
            let eta = e0 + budget_term * e1;
            eta >= -(DUAL_TOLERANCE + 1e-12 * (e0.abs() + (budget_term * e1).abs()))
        })
    }

    /// The unique maximizer `pi_hat(alpha, rho)` with its active set and
    /// multipliers. `rho = +inf` and `alpha = 0` both give the zero allocation.
    pub fn solve(&self, alpha: f64, rho: f64) -> Result<Allocation> {
        check_inputs(alpha, rho)?;
        if alpha == 0.0 {
            return Ok(Allocation::zero(self.dim, alpha, true));
        }
        if rho == f64::INFINITY {
            return Ok(Allocation::zero(self.dim, alpha, false));
        }
        let mut out = vec![0.0; self.dim];
        for (idx, c) in self.candidates.iter().enumerate() {
            if self.try_candidate(idx, alpha, rho, &mut out) {
                let budget_term = rho * alpha;
                let multipliers = c
                    .eta_const
                    .iter()
                    .zip(&c.eta_per_budget)
                    .map(|(e0, e1)| e0 + budget_term * e1)
                    .collect();
                let mut weights = out;
                for w in weights.iter_mut() {
                    if *w < 0.0 {
                        *w = 0.0;
                    }
                }
                if c.active.budget {
                    let free = self.dim - c.active.zeros.len();
                    let excess = weights.iter().sum::<f64>() - alpha;
                    if free > 0 && excess != 0.0 {
                        for (i, w) in weights.iter_mut().enumerate() {
                            if !c.active.is_at_zero(i) {
                                *w -= excess / free as f64;
                            }
                        }
                    }
                }
                return Ok(Allocation {
                    weights,
                    budget_bound: alpha,
                    active_set: c.active.clone(),
                    multipliers,
                });
            }
        }
        Err(Error::DegenerateProblem)
    }

    /// Objective `pi.m - rho/2 pi Sigma pi'` at an arbitrary `pi`.
    pub fn objective(&self, weights: &[f64], rho: f64) -> f64 {
        linalg::dot(weights, &self.excess) - 0.5 * rho * linalg::quad_form(&self.covariance, self.dim, weights)
    }

    /// Optimal value `f(alpha, rho)`.
    pub fn value(&self, alpha: f64, rho: f64) -> Result<f64> {
        if rho == f64::INFINITY {
            check_inputs(alpha, rho)?;
            return Ok(0.0);
        }
        let a = self.solve(alpha, rho)?;
        Ok(self.objective(&a.weights, rho))
    }

    /// `g(rho) = f(1, rho)`.
    pub fn g(&self, rho: f64) -> Result<f64> {
        self.value(1.0, rho)
    }

    /// `g'(rho) = -1/2 pi_hat(1, rho) Sigma pi_hat(1, rho)'`.
    pub fn g_prime(&self, rho: f64) -> Result<f64> {
        let a = self.solve(1.0, rho)?;
        Ok(-0.5 * linalg::quad_form(&self.covariance, self.dim, &a.weights))
    }

    /// `(g(rho), g'(rho))` on the hot path; `rho` is floored at a tiny
    /// positive value so Newton iterates slightly below zero stay defined.
    pub fn g_and_slope(&self, rho: f64, hint: &mut usize, scratch: &mut [f64]) -> (f64, f64) {
        let rho = if rho > 1e-300 { rho } else { 1e-300 };
        self.solve_into(1.0, rho, hint, scratch)
            .expect("unit budget program always has a KKT point");
        let var = linalg::quad_form(&self.covariance, self.dim, scratch);
        (linalg::dot(scratch, &self.excess) - 0.5 * rho * var, -0.5 * var)
    }

    /// Gradient residual `|m - rho Sigma pi - A2' eta|_inf` of an allocation.
    pub fn kkt_residual(&self, alloc: &Allocation, rho: f64) -> f64 {
        let d = self.dim;
        let sp = linalg::mat_vec(&self.covariance, d, &alloc.weights);
        let mut grad: Vec<f64> = (0..d).map(|i| self.excess[i] - rho * sp[i]).collect();
        for (c, eta) in alloc.active_set.constraints().iter().zip(&alloc.multipliers) {
            match c {
                Constraint::AtZero(i) => grad[*i] += eta,
                Constraint::BudgetFull => grad.iter_mut().for_each(|g| *g -= eta),
            }
        }
        grad.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    /// Samuelson weights rescaled for leverage: `pi_hat / max(pi_hat.1, gamma)`.
    pub fn pi0(&self, gamma: f64) -> Result<Allocation> {
        check_gamma(gamma)?;
        let total: f64 = self.tangency.iter().sum();
        let scale = total.max(gamma);
        let weights: Vec<f64> = self.tangency.iter().map(|w| w / scale).collect();
        Ok(self.describe(weights, 1.0, gamma))
    }

    /// Fixed proportions `pi_hat(1, gamma)`.
    pub fn pi1(&self, gamma: f64) -> Result<Allocation> {
        check_gamma(gamma)?;
        self.solve(1.0, gamma)
    }

    /// Cash-in-hand rescaling of `pi1`: `pi1 / max(pi1.1, alpha)`.
    pub fn pi2(&self, alpha: f64, gamma: f64) -> Result<Allocation> {
        check_unit_interval(alpha)?;
        let p1 = self.pi1(gamma)?;
        let scale = p1.total().max(alpha);
        let weights: Vec<f64> = p1.weights.iter().map(|w| w / scale).collect();
        Ok(self.describe(weights, 1.0, gamma))
    }

    /// Near-optimal lifestyling `pi_hat(1, alpha gamma)`; the `alpha = 0`
    /// limit is taken at risk aversion [`PI3_ZERO_BUDGET_RHO`].
    pub fn pi3(&self, alpha: f64, gamma: f64) -> Result<Allocation> {
        check_unit_interval(alpha)?;
        check_gamma(gamma)?;
        let rho = if alpha == 0.0 { PI3_ZERO_BUDGET_RHO } else { alpha * gamma };
        self.solve(1.0, rho)
    }

    /// Allocation for weights not produced by the solver: labels are read off
    /// the weights, multipliers are not meaningful and are left empty.
    fn describe(&self, weights: Vec<f64>, budget_bound: f64, _gamma: f64) -> Allocation {
        let zeros: Vec<usize> = (0..self.dim).filter(|&i| weights[i] <= 0.0).collect();
        let budget = (weights.iter().sum::<f64>() - budget_bound).abs() <= 1e-12;
        Allocation {
            weights,
            budget_bound,
            active_set: ActiveSet::new(zeros, budget),
            multipliers: Vec::new(),
        }
    }

    /// Largest risk aversion at which `pi.1 <= 1` binds in `pi_hat(1, rho)`.
    pub fn budget_binding_risk_aversion(&self) -> f64 {
        self.threshold(|a| a.active_set.budget)
    }

    /// Largest risk aversion at which `pi_hat(1, rho)` holds a single asset.
    pub fn single_asset_risk_aversion(&self) -> f64 {
        self.threshold(|a| a.weights.iter().filter(|&&w| w > 0.0).count() <= 1)
    }

    fn threshold(&self, holds: impl Fn(&Allocation) -> bool) -> f64 {
        let test = |rho: f64| self.solve(1.0, rho).map(|a| holds(&a)).unwrap_or(false);
        let mut lo = 1e-8;
        if !test(lo) {
            return 0.0;
        }
        let mut hi = 1.0;
        while test(hi) {
            lo = hi;
            hi *= 2.0;
            if hi > 1e12 {
                return f64::INFINITY;
            }
        }
        while hi - lo > 1e-13 * hi {
            let mid = 0.5 * (lo + hi);
            if test(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Glide-path switch points in terms of the capital ratio `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlidePathThresholds {
    /// Below this `alpha` the budget `pi.1 <= 1` binds for `pi3`.
    pub budget: f64,
    /// Below this `alpha` `pi3` holds a single risky asset.
    pub full_stock: f64,
}

impl MeanVariance {
    /// Thresholds of `pi3(alpha) = pi_hat(1, alpha gamma)` on `[0, 1]`.
    pub fn glide_path_thresholds(&self, gamma: f64) -> Result<GlidePathThresholds> {
        check_gamma(gamma)?;
        Ok(GlidePathThresholds {
            budget: (self.budget_binding_risk_aversion() / gamma).min(1.0),
            full_stock: (self.single_asset_risk_aversion() / gamma).min(1.0),
        })
    }
}

fn check_inputs(alpha: f64, rho: f64) -> Result<()> {
    if alpha.is_nan() || alpha < 0.0 {
        return Err(Error::InfeasibleAlpha(alpha));
    }
    if !alpha.is_finite() {
        return Err(Error::InvalidInput("budget must be finite".into()));
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidInput(alloc::format!("risk aversion {rho} must be positive")));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidInput(alloc::format!("risk aversion {gamma} must be positive")));
    }
    Ok(())
}

fn check_unit_interval(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(alloc::format!("capital ratio {alpha} outside [0, 1]")));
    }
    Ok(())
}

/// Rows of `A2`: `-e_i` for each zero, then `1'` for the budget, so every
/// multiplier of a valid KKT point is nonnegative.
fn constraint_rows(active: &ActiveSet, d: usize) -> Vec<f64> {
    let mut rows = Vec::with_capacity(active.len() * d);
    for &i in &active.zeros {
        let mut row = vec![0.0; d];
        row[i] = -1.0;
        rows.extend(row);
    }
    if active.budget {
        rows.extend(core::iter::repeat_n(1.0, d));
    }
    rows
}

/// `A2 Sigma^{-1} A2'`.
fn schur(chol: &[f64], d: usize, rows: &[f64]) -> Vec<f64> {
    let k = rows.len() / d;
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|r| {
            let mut c = rows[r * d..(r + 1) * d].to_vec();
            linalg::cholesky_solve(chol, d, &mut c);
            c
        })
        .collect();
    let mut m = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            m[a * k + b] = linalg::dot(&rows[a * d..(a + 1) * d], &cols[b]);
        }
    }
    m
}

/// Minimizer of `|A1 x - b1|^2` subject to `A2 x = b2` with `A1 = sigma'`
/// (`sigma` the Cholesky factor of `Sigma`):
///
/// `x = A1^{-1} b1 + (A1'A1)^{-1} A2' (A2 (A1'A1)^{-1} A2')^{-1} (b2 - A2 A1^{-1} b1)`.
fn block_formula(chol: &[f64], d: usize, rows: &[f64], b1: &[f64], b2: &[f64]) -> Option<Vec<f64>> {
    let k = rows.len() / d;
    let mut x = b1.to_vec();
    linalg::back_substitute_transposed(chol, d, &mut x);
    let m = schur(chol, d, rows);
    let rhs: Vec<f64> = (0..k)
        .map(|r| b2[r] - linalg::dot(&rows[r * d..(r + 1) * d], &x))
        .collect();
    let w = linalg::solve_dense(&m, k, &rhs)?;
    let mut corr = vec![0.0; d];
    for r in 0..k {
        for j in 0..d {
            corr[j] += rows[r * d + j] * w[r];
        }
    }
    linalg::cholesky_solve(chol, d, &mut corr);
    for j in 0..d {
        x[j] += corr[j];
    }
    Some(x)
}

/// `Sigma^{-1} (mu - r 1)`.
pub fn unconstrained_weights(params: &MarketParams) -> Result<Vec<f64>> {
    Ok(MeanVariance::new(params)?.unconstrained_weights().to_vec())
}

/// Minimum variance portfolio.
pub fn min_variance_portfolio(params: &MarketParams) -> Result<Vec<f64>> {
    Ok(MeanVariance::new(params)?.min_variance_portfolio().to_vec())
}

/// `pi_hat(alpha, rho)`.
pub fn solve_cqp(alpha: f64, rho: f64, params: &MarketParams) -> Result<Allocation> {
    MeanVariance::new(params)?.solve(alpha, rho)
}

/// `f(alpha, rho)`.
pub fn mv_value(alpha: f64, rho: f64, params: &MarketParams) -> Result<f64> {
    MeanVariance::new(params)?.value(alpha, rho)
}

/// `g'(rho)`.
pub fn g_prime(rho: f64, params: &MarketParams) -> Result<f64> {
    MeanVariance::new(params)?.g_prime(rho)
}
