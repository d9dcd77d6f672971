//! Factorial robustness study over two-asset markets.
//!
//! Every cell solves the risk aversion surface, evaluates the optimal and the
//! four heuristic certainty equivalents by PDE and records the relative gaps
//! `(CE* - CE_i) / CE*`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::hjb::{solve_rho, SolverOptions};
use crate::market::{ContributionSchedule, MarketParams};
use crate::welfare::{certainty_equivalent_pde, Strategy, StrategyKind};

/// Parameter lists of the study.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    /// Bond drifts.
    pub mu_bond: Vec<f64>,
    /// Stock drifts.
    pub mu_stock: Vec<f64>,
    /// Bond volatilities.
    pub sigma_bond: Vec<f64>,
    /// Stock volatilities.
    pub sigma_stock: Vec<f64>,
    /// Bond-stock correlations.
    pub correlation: Vec<f64>,
    /// Terminal risk aversions.
    pub gammas: Vec<f64>,
    /// Risk-free rate shared by all cells.
    pub rate_riskfree: f64,
    /// Contribution schedule shared by all cells.
    pub schedule: ContributionSchedule,
}

impl SweepGrid {
    /// The full 3 x 3 x 3 x 3 x 4 factorial with four risk aversions.
    pub fn full_factorial() -> Self {
        Self {
            mu_bond: alloc::vec![0.015, 0.02, 0.03],
            mu_stock: alloc::vec![0.07, 0.10, 0.13],
            sigma_bond: alloc::vec![0.03, 0.05, 0.07],
            sigma_stock: alloc::vec![0.20, 0.25, 0.30],
            correlation: alloc::vec![-0.20, -0.05, 0.05, 0.20],
            gammas: alloc::vec![1.0, 2.0, 5.0, 8.0],
            rate_riskfree: 0.01,
            schedule: ContributionSchedule::paper_baseline(),
        }
    }

    /// Bond drift x bond volatility at correlation -0.2, other inputs at the
    /// baseline. This 3 x 3 slice contains the cell with the largest gaps.
    pub fn bond_slice() -> Self {
        Self {
            mu_stock: alloc::vec![0.10],
            sigma_stock: alloc::vec![0.25],
            correlation: alloc::vec![-0.20],
            ..Self::full_factorial()
        }
    }

    /// Number of market parametrizations.
    pub fn market_count(&self) -> usize {
        self.mu_bond.len() * self.mu_stock.len() * self.sigma_bond.len() * self.sigma_stock.len() * self.correlation.len()
    }

    /// Number of (market, gamma) cells.
    pub fn len(&self) -> usize {
        self.market_count() * self.gammas.len()
    }

    /// No cells at all.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameter indices of market `m` in lexicographic order
    /// `(mu_bond, mu_stock, sigma_bond, sigma_stock, correlation)`.
    pub fn market_indices(&self, m: usize) -> [usize; 5] {
        let dims = [
            self.mu_bond.len(),
            self.mu_stock.len(),
            self.sigma_bond.len(),
            self.sigma_stock.len(),
            self.correlation.len(),
        ];
        let mut out = [0; 5];
        let mut rest = m;
        for k in (0..5).rev() {
            out[k] = rest % dims[k];
            rest /= dims[k];
        }
        out
    }

    /// Market of parametrization `m`.
    pub fn market(&self, m: usize) -> Result<MarketParams> {
        let [a, b, c, d, e] = self.market_indices(m);
        MarketParams::two_asset(
            self.rate_riskfree,
            self.mu_bond[a],
            self.mu_stock[b],
            self.sigma_bond[c],
            self.sigma_stock[d],
            self.correlation[e],
        )
    }

    /// Checks that every parametrization is a valid market.
    pub fn validate(&self) -> Result<()> {
        for m in 0..self.market_count() {
            self.market(m)?;
        }
        if self.gammas.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::InvalidInput("risk aversions must be positive".into()));
        }
        Ok(())
    }

    /// Cell `i` as `(market, gamma index)`; cells are ordered by market, then
    /// by gamma.
    pub fn cell(&self, i: usize) -> (usize, usize) {
        (i / self.gammas.len(), i % self.gammas.len())
    }
}

/// Certainty equivalents of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellValues {
    /// Optimal certainty equivalent.
    pub ce_optimal: f64,
    /// `CE_0 .. CE_3`.
    pub ce_heuristic: [f64; 4],
}

impl CellValues {
    /// `(CE* - CE_i) / CE*` for `i = 0..3`.
    pub fn gaps(&self) -> [f64; 4] {
        self.ce_heuristic.map(|c| (self.ce_optimal - c) / self.ce_optimal)
    }
}

/// Outcome of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    /// Market index in lexicographic order.
    pub market: usize,
    /// Parameter indices.
    pub indices: [usize; 5],
    /// Terminal risk aversion.
    pub gamma: f64,
    /// Values, or the error message of a failed cell.
    pub outcome: core::result::Result<CellValues, String>,
}

/// All cell outcomes in deterministic order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    /// One entry per (market, gamma).
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    /// Cells that failed.
    pub fn failures(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.outcome.is_err())
    }
}

/// Evaluates cell `i` of the sweep.
pub fn evaluate_cell(sweep: &SweepGrid, i: usize, grid: &GridSpec, options: &SolverOptions) -> CellResult {
    let (m, gi) = sweep.cell(i);
    let gamma = sweep.gammas[gi];
    let outcome = (|| -> Result<CellValues> {
        let params = sweep.market(m)?;
        let s = &sweep.schedule;
        let surface = solve_rho(&params, s, gamma, grid, options)?;
        let ce_optimal = certainty_equivalent_pde(&Strategy::Optimal(&surface), &params, s, gamma, grid)?;
        let mut ce_heuristic = [0.0; 4];
        for (slot, kind) in ce_heuristic.iter_mut().zip(StrategyKind::HEURISTICS) {
            let strategy = Strategy::heuristic(kind).expect("heuristic kinds have no payload");
            *slot = certainty_equivalent_pde(&strategy, &params, s, gamma, grid)?;
        }
        Ok(CellValues { ce_optimal, ce_heuristic })
    })()
    .map_err(|e| e.to_string());
    CellResult {
        market: m,
        indices: sweep.market_indices(m),
        gamma,
        outcome,
    }
}

/// Runs every cell in order on the current thread.
pub fn run_sweep(sweep: &SweepGrid, grid: &GridSpec, options: &SolverOptions) -> Result<SweepResult> {
    sweep.validate()?;
    grid.validate()?;
    let cells = (0..sweep.len()).map(|i| evaluate_cell(sweep, i, grid, options)).collect();
    Ok(SweepResult { cells })
}

/// Average and maximum gaps for one risk aversion.
#[derive(Debug, Clone, PartialEq)]
pub struct GapSummary {
    /// Terminal risk aversion.
    pub gamma: f64,
    /// Mean gap of `pi0 .. pi3`.
    pub avg: [f64; 4],
    /// Largest gap of `pi0 .. pi3`.
    pub max: [f64; 4],
    /// Successful cells.
    pub cells: usize,
    /// Failed cells, excluded from the statistics.
    pub failed: usize,
}

/// Per-gamma averages and maxima over successful cells, gammas in order of
/// first appearance.
pub fn aggregate(result: &SweepResult) -> Result<Vec<GapSummary>> {
    if result.cells.iter().all(|c| c.outcome.is_err()) {
        return Err(Error::AllCellsFailed);
    }
    let mut gammas: Vec<f64> = Vec::new();
    for c in &result.cells {
        if !gammas.contains(&c.gamma) {
            gammas.push(c.gamma);
        }
    }
    let mut out = Vec::with_capacity(gammas.len());
    for g in gammas {
        let mut sum = [0.0; 4];
        let mut max = [f64::NEG_INFINITY; 4];
        let (mut ok, mut failed) = (0usize, 0usize);
        for c in result.cells.iter().filter(|c| c.gamma == g) {
            match &c.outcome {
                Ok(v) => {
                    ok += 1;
                    for (i, gap) in v.gaps().into_iter().enumerate() {
                        sum[i] += gap;
                        max[i] = max[i].max(gap);
                    }
                }
                Err(_) => failed += 1,
            }
        }
        if ok == 0 {
            continue;
        }
        out.push(GapSummary {
            gamma: g,
            avg: sum.map(|s| s / ok as f64),
            max,
            cells: ok,
            failed,
        });
    }
    Ok(out)
}
