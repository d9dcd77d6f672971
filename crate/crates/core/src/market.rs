//! Market and contribution data.
//!
//! Risky assets follow correlated geometric Brownian motions with drifts
//! `mu` and covariance `Sigma`; the bank account grows at `r`. The saver
//! contributes at a deterministic piecewise-constant rate `y(t)` on `[0, T]`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;
use crate::numeric::{discounted_length, exp};

/// Relative tolerance for the smallest covariance eigenvalue.
pub const PD_RELATIVE_TOLERANCE: f64 = 1e-12;

/// Validated market parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketParams {
    rate_riskfree: f64,
    drifts: Vec<f64>,
    covariance: Vec<f64>,
}

impl MarketParams {
    /// Builds and validates market parameters; `covariance` is row-major `d x d`.
    pub fn new(rate_riskfree: f64, drifts: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        validate_market(Self {
            rate_riskfree,
            drifts,
            covariance,
        })
    }

    /// Assembles `Sigma_ij = vol_i vol_j corr_ij` and validates.
    pub fn from_volatilities(
        rate_riskfree: f64,
        drifts: Vec<f64>,
        volatilities: &[f64],
        correlation: &[f64],
    ) -> Result<Self> {
        let d = volatilities.len();
        if correlation.len() != d * d {
            return Err(Error::DimensionMismatch(format!(
                "{d} volatilities but correlation has {} entries",
                correlation.len()
            )));
        }
        let mut covariance = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                covariance.push(volatilities[i] * volatilities[j] * correlation[i * d + j]);
            }
        }
        Self::new(rate_riskfree, drifts, covariance)
    }

    /// Two-asset bond/stock market: `r = 1%`, `mu = (2%, 10%)`, volatilities
    /// `(5%, 25%)`, correlation `-0.05`.
    pub fn paper_baseline() -> Self {
        Self::two_asset(0.01, 0.02, 0.10, 0.05, 0.25, -0.05)
            .expect("baseline market is valid")
    }

    /// Bond/stock market from scalar inputs.
    pub fn two_asset(
        rate_riskfree: f64,
        drift_bond: f64,
        drift_stock: f64,
        vol_bond: f64,
        vol_stock: f64,
        correlation: f64,
    ) -> Result<Self> {
        Self::from_volatilities(
            rate_riskfree,
            alloc::vec![drift_bond, drift_stock],
            &[vol_bond, vol_stock],
            &[1.0, correlation, correlation, 1.0],
        )
    }

    /// Number of risky assets.
    pub fn dim(&self) -> usize {
        self.drifts.len()
    }

    /// Risk-free rate.
    pub fn rate_riskfree(&self) -> f64 {
        self.rate_riskfree
    }

    /// Drift vector.
    pub fn drifts(&self) -> &[f64] {
        &self.drifts
    }

    /// Row-major covariance matrix.
    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    /// Excess returns `mu - r 1`.
    pub fn excess_returns(&self) -> Vec<f64> {
        self.drifts.iter().map(|m| m - self.rate_riskfree).collect()
    }
}

/// Checks every [`MarketParams`] invariant and returns the parameters unchanged.
pub fn validate_market(params: MarketParams) -> Result<MarketParams> {
    let d = params.drifts.len();
    if d == 0 {
        return Err(Error::DimensionMismatch("at least one risky asset required".into()));
    }
    if params.covariance.len() != d * d {
        return Err(Error::DimensionMismatch(format!(
            "{d} drifts but covariance has {} entries",
            params.covariance.len()
        )));
    }
    let finite = params.rate_riskfree.is_finite()
        && params.drifts.iter().all(|x| x.is_finite())
        && params.covariance.iter().all(|x| x.is_finite());
    if !finite {
        return Err(Error::InvalidInput("market inputs must be finite".into()));
    }
    let cov = &params.covariance;
    for i in 0..d {
        for j in 0..i {
            let (a, b) = (cov[i * d + j], cov[j * d + i]);
            if (a - b).abs() > 1e-14 * (a.abs() + b.abs()).max(1e-300) {
                return Err(Error::NotPositiveDefinite);
            }
        }
    }
    let eig = linalg::symmetric_eigenvalues(cov, d);
    let largest = eig[d - 1];
    if !(largest > 0.0) || eig[0] <= PD_RELATIVE_TOLERANCE * largest {
        return Err(Error::NotPositiveDefinite);
    }
    if !params.drifts.iter().any(|&m| m > params.rate_riskfree) {
        return Err(Error::NoExcessReturn);
    }
    Ok(params)
}

/// Deterministic contribution rate, piecewise constant on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionSchedule {
    horizon: f64,
    breakpoints: Vec<f64>,
    rates: Vec<f64>,
}

impl ContributionSchedule {
    /// Constant rate `total / horizon`.
    pub fn constant(horizon: f64, total: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidSchedule(format!("horizon {horizon} must be positive")));
        }
        Self::piecewise(horizon, alloc::vec![0.0], alloc::vec![total / horizon])
    }

    /// Forty years with unit lifetime contribution.
    pub fn paper_baseline() -> Self {
        Self::constant(40.0, 1.0).expect("baseline schedule is valid")
    }

    /// Rate `rates[k]` on `[breakpoints[k], breakpoints[k + 1])`; the first
    /// breakpoint must be 0 and the last segment runs to the horizon.
    pub fn piecewise(horizon: f64, breakpoints: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidSchedule(format!("horizon {horizon} must be positive")));
        }
        if breakpoints.is_empty() || breakpoints.len() != rates.len() {
            return Err(Error::InvalidSchedule(
                "breakpoints and rates must be nonempty and equally long".into(),
            ));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidSchedule("first breakpoint must be 0".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) || breakpoints[breakpoints.len() - 1] >= horizon {
            return Err(Error::InvalidSchedule(
                "breakpoints must increase strictly and stay below the horizon".into(),
            ));
        }
        if rates.iter().any(|&y| !(y >= 0.0) || !y.is_finite()) {
            return Err(Error::InvalidSchedule("rates must be finite and nonnegative".into()));
        }
        Ok(Self {
            horizon,
            breakpoints,
            rates,
        })
    }

    /// Horizon `T` in years.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Segment start times.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Segment rates.
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breakpoints.iter().enumerate().map(move |(k, &start)| {
            let end = self.breakpoints.get(k + 1).copied().unwrap_or(self.horizon);
            (start, end, self.rates[k])
        })
    }

    /// Contribution rate at time `t` (right-continuous; the last segment is
    /// closed at `T`).
    pub fn rate_at(&self, t: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&b| b <= t);
        self.rates[k.saturating_sub(1)]
    }

    /// Lifetime contribution `int_0^T y dt`.
    pub fn total(&self) -> f64 {
        self.segments().map(|(a, b, y)| y * (b - a)).sum()
    }

    /// Whether all segments share one rate.
    pub fn is_constant(&self) -> bool {
        self.rates.windows(2).all(|w| w[0] == w[1])
    }

    /// `int_t^T exp(-rate (u - t)) y(u) du` for any discount rate.
    pub fn discounted_from(&self, t: f64, rate: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::TimeOutOfRange(t));
        }
        let mut pv = 0.0;
        for (a, b, y) in self.segments() {
            if b <= t || y == 0.0 {
                continue;
            }
            let start = a.max(t);
            pv += y * exp(-rate * (start - t)) * discounted_length(rate, b - start);
        }
        Ok(pv)
    }

    /// Contributions accumulated to the horizon at `rate`:
    /// `int_0^T exp(rate (T - t)) y(t) dt`.
    pub fn accumulated_value(&self, rate: f64) -> f64 {
        self.segments()
            .map(|(a, b, y)| y * exp(rate * (self.horizon - b)) * discounted_length(-rate, b - a))
            .sum()
    }

    /// Contributions over `[t0, t1]` accumulated with interest to `t1`.
    pub fn accumulated_between(&self, t0: f64, t1: f64, rate: f64) -> f64 {
        let mut acc = 0.0;
        for (a, b, y) in self.segments() {
            let lo = a.max(t0);
            let hi = b.min(t1);
            if hi > lo && y != 0.0 {
                acc += y * exp(rate * (t1 - hi)) * discounted_length(-rate, hi - lo);
            }
        }
        acc
    }
}

/// Present value at `t` of the contributions still to come.
pub fn present_value(t: f64, schedule: &ContributionSchedule, r: f64) -> Result<f64> {
    schedule.discounted_from(t, r)
}

/// Capital ratio `alpha = W / (W + PV_t)`; 1 once nothing is left to contribute.
pub fn capital_ratio(t: f64, wealth: f64, schedule: &ContributionSchedule, r: f64) -> Result<f64> {
    if !(wealth >= 0.0) {
        return Err(Error::InvalidInput(format!("wealth {wealth} must be nonnegative")));
    }
    let pv = present_value(t, schedule, r)?;
    Ok(ratio(wealth, pv))
}

pub(crate) fn ratio(wealth: f64, pv: f64) -> f64 {
    if pv <= 0.0 {
        1.0
    } else {
        wealth / (wealth + pv)
    }
}

/// Present value sampled on a time grid, with exact evaluation in between.
#[derive(Debug, Clone)]
pub struct PvCurve {
    schedule: ContributionSchedule,
    rate: f64,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl PvCurve {
    /// Samples `PV_t` at the given times.
    pub fn new(schedule: &ContributionSchedule, rate: f64, times: &[f64]) -> Result<Self> {
        let values = times
            .iter()
            .map(|&t| present_value(t, schedule, rate))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            schedule: schedule.clone(),
            rate,
            times: times.to_vec(),
            values,
        })
    }

    /// Sample times.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Sampled values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Exact value at any `t` in `[0, T]`.
    pub fn at(&self, t: f64) -> Result<f64> {
        present_value(t, &self.schedule, self.rate)
    }
}
