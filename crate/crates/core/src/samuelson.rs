//! Samuelson transform: moving the present value of future contributions
//! into the bank account turns the problem with contributions into one where
//! all capital is paid up front.
//!
//! Risky holdings are unchanged and the bank holding grows by
//! `e^{-rt} PV_t`, i.e. by `PV_t / S0_t` units of the bank account.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Holdings and prices at one instant. Index 0 is the bank account.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioState {
    /// Time in years.
    pub t: f64,
    /// Units held of the bank account and each risky asset.
    pub holdings: Vec<f64>,
    /// Prices; `prices[0] = e^{rt}`.
    pub prices: Vec<f64>,
}

impl PortfolioState {
    /// State with a bank account priced `e^{rt}`.
    pub fn new(t: f64, rate: f64, holdings: Vec<f64>, risky_prices: &[f64]) -> Result<Self> {
        if holdings.len() != risky_prices.len() + 1 {
            return Err(Error::DimensionMismatch(alloc::format!(
                "{} holdings for {} risky prices",
                holdings.len(),
                risky_prices.len()
            )));
        }
        let mut prices = Vec::with_capacity(holdings.len());
        prices.push(crate::numeric::exp(rate * t));
        prices.extend_from_slice(risky_prices);
        Ok(Self { t, holdings, prices })
    }

    /// `phi . S`.
    pub fn wealth(&self) -> f64 {
        crate::linalg::dot(&self.holdings, &self.prices)
    }

    /// Proportions of wealth in the risky assets, zero when wealth is zero.
    pub fn proportions(&self) -> Vec<f64> {
        let w = self.wealth();
        if w == 0.0 {
            return alloc::vec![0.0; self.holdings.len() - 1];
        }
        (1..self.holdings.len()).map(|i| self.holdings[i] * self.prices[i] / w).collect()
    }
}

/// Adds `pv` to wealth through the bank account.
pub fn to_samuelson(state: &PortfolioState, pv: f64) -> PortfolioState {
    let mut out = state.clone();
    out.holdings[0] += pv / state.prices[0];
    out
}

/// Inverse of [`to_samuelson`]; fails when the bank holding cannot cover the
/// removed present value.
pub fn from_samuelson(state: &PortfolioState, pv: f64) -> Result<PortfolioState> {
    let shift = pv / state.prices[0];
    let bank = state.holdings[0] - shift;
    if bank < -1e-14 * state.holdings[0].abs().max(shift.abs()) {
        return Err(Error::NegativeBankAfterInverse(bank));
    }
    let mut out = state.clone();
    out.holdings[0] = bank;
    Ok(out)
}

const CONSTRAINT_TOL: f64 = 1e-12;

/// Evaluates both sides of the constraint correspondence:
/// `pi(phi) >= 0, pi(phi).1 <= 1` against
/// `pi(phi_bar) >= 0, pi(phi_bar).1 <= 1 - PV / (phi_bar . S)`.
pub fn constraint_equivalence_check(state: &PortfolioState, pv: f64) -> (bool, bool) {
    let lhs_pi = state.proportions();
    let lhs = lhs_pi.iter().all(|&p| p >= -CONSTRAINT_TOL)
        && lhs_pi.iter().sum::<f64>() <= 1.0 + CONSTRAINT_TOL
        && state.wealth() > 0.0;
    let bar = to_samuelson(state, pv);
    let bar_wealth = bar.wealth();
    let rhs_pi = bar.proportions();
    let rhs = bar_wealth > pv
        && rhs_pi.iter().all(|&p| p >= -CONSTRAINT_TOL)
        && rhs_pi.iter().sum::<f64>() <= 1.0 - pv / bar_wealth + CONSTRAINT_TOL;
    (lhs, rhs)
}

/// Proportions of accumulated savings mapped to proportions of lifetime
/// wealth: `pi_bar = pi x / (x + PV)`.
pub fn policy_to_samuelson(pi: &[f64], wealth: f64, pv: f64) -> Vec<f64> {
    let scale = crate::market::ratio(wealth, pv);
    pi.iter().map(|p| p * scale).collect()
}

/// Inverse of [`policy_to_samuelson`]: `pi = pi_bar (1 + PV / x)` with
/// `x = x_bar - PV`.
pub fn policy_from_samuelson(pi_bar: &[f64], lifetime_wealth: f64, pv: f64) -> Result<Vec<f64>> {
    let wealth = lifetime_wealth - pv;
    if !(wealth > 0.0) {
        return Err(Error::WealthBelowPv { wealth: lifetime_wealth, pv });
    }
    Ok(pi_bar.iter().map(|p| p * (lifetime_wealth / wealth)).collect())
}
