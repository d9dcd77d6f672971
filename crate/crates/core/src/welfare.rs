//! Certainty equivalents and internal rates of return of allocation
//! strategies, by PDE and by Monte Carlo.
//!
//! For a strategy `pi(t, x)` write the value as
//! `v(t, e^z) = U(e^{psi(t, z)})`, so `psi` is the log certainty equivalent.
//! In time-to-go `tau` it solves
//!
//! ```text
//!     psi_tau = b psi_z + q/2 psi_zz + (1 - gamma) q/2 psi_z^2,   psi(tau = 0) = z,
//!     b = y e^{-z} + r + pi.(mu - r 1) - q/2,   q = pi Sigma pi',
//! ```
//!
//! which is the log transform of the linear value PDE. It is marched with
//! backward Euler and Newton, with exponentially fitted diffusion.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cqp::MeanVariance;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::hjb::{default_extrapolation_points, ols_intercept, optimal_certainty_equivalent, RiskAversionSurface};
use crate::linalg;
use crate::market::{present_value, ratio, ContributionSchedule, MarketParams};
use crate::numeric::{ceil, exp, ln, powf, sqrt};
use crate::pde::{fitted_diffusion, interp_cubic};

pub use crate::numeric::pairwise_sum;

/// Smallest `pi Sigma pi'` accepted by the value PDE.
pub const DIFFUSION_FLOOR: f64 = 1e-10;

/// CRRA utility `w^{1-gamma} / (1 - gamma)`, `ln w` for `gamma = 1`.
pub fn utility(wealth: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        ln(wealth)
    } else {
        powf(wealth, 1.0 - gamma) / (1.0 - gamma)
    }
}

/// Inverse of [`utility`].
pub fn certainty_equivalent(expected_utility: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidInput(alloc::format!("risk aversion {gamma} must be positive")));
    }
    if gamma == 1.0 {
        return Ok(exp(expected_utility));
    }
    let scaled = expected_utility * (1.0 - gamma);
    if !(scaled > 0.0) {
        return Err(Error::SignMismatch(expected_utility));
    }
    Ok(powf(scaled, 1.0 / (1.0 - gamma)))
}

/// Default IRR search interval.
pub const IRR_BRACKET: (f64, f64) = (-0.5, 0.5);

/// Rate at which the contribution stream accumulates to `ce` at the horizon.
pub fn irr(ce: f64, schedule: &ContributionSchedule) -> Result<f64> {
    match irr_in(ce, schedule, IRR_BRACKET) {
        Err(Error::BracketFailure(_)) => irr_in(ce, schedule, (-1.5, 1.5)),
        other => other,
    }
}

/// [`irr`] on an explicit bracket.
pub fn irr_in(ce: f64, schedule: &ContributionSchedule, bracket: (f64, f64)) -> Result<f64> {
    if !(ce > 0.0) || schedule.total() <= 0.0 {
        return Err(Error::InvalidInput("IRR needs positive CE and contributions".into()));
    }
    let f = |rate: f64| schedule.accumulated_value(rate) - ce;
    let (mut lo, mut hi) = bracket;
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return Err(Error::BracketFailure(ce));
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Strategy labels without payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    /// Samuelson weights scaled for leverage.
    Pi0,
    /// Fixed proportions `pi_hat(1, gamma)`.
    Pi1,
    /// Cash-in-hand rescaling of `Pi1`.
    Pi2,
    /// Near-optimal lifestyling `pi_hat(1, alpha gamma)`.
    Pi3,
    /// Optimal policy from a solved surface.
    Optimal,
    /// Constant user weights.
    Fixed,
}

impl StrategyKind {
    /// The four explicit heuristics.
    pub const HEURISTICS: [StrategyKind; 4] =
        [StrategyKind::Pi0, StrategyKind::Pi1, StrategyKind::Pi2, StrategyKind::Pi3];

    /// Lower-case name.
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Pi0 => "pi0",
            StrategyKind::Pi1 => "pi1",
            StrategyKind::Pi2 => "pi2",
            StrategyKind::Pi3 => "pi3",
            StrategyKind::Optimal => "optimal",
            StrategyKind::Fixed => "fixed",
        }
    }

    /// Parses [`StrategyKind::name`].
    pub fn from_name(name: &str) -> Option<Self> {
        [
            StrategyKind::Pi0,
            StrategyKind::Pi1,
            StrategyKind::Pi2,
            StrategyKind::Pi3,
            StrategyKind::Optimal,
            StrategyKind::Fixed,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }
}

/// An allocation rule `(t, x) -> pi`.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy<'a> {
    /// See [`StrategyKind::Pi0`].
    Pi0,
    /// See [`StrategyKind::Pi1`].
    Pi1,
    /// See [`StrategyKind::Pi2`].
    Pi2,
    /// See [`StrategyKind::Pi3`].
    Pi3,
    /// Optimal policy read off a risk aversion surface.
    Optimal(&'a RiskAversionSurface),
    /// Constant weights.
    Fixed(Vec<f64>),
}

impl Strategy<'_> {
    /// Label of the strategy.
    pub fn kind(&self) -> StrategyKind {
        match self {
            Strategy::Pi0 => StrategyKind::Pi0,
            Strategy::Pi1 => StrategyKind::Pi1,
            Strategy::Pi2 => StrategyKind::Pi2,
            Strategy::Pi3 => StrategyKind::Pi3,
            Strategy::Optimal(_) => StrategyKind::Optimal,
            Strategy::Fixed(_) => StrategyKind::Fixed,
        }
    }

    /// Heuristic with the given label; `None` for kinds that need a payload.
    pub fn heuristic(kind: StrategyKind) -> Option<Strategy<'static>> {
        match kind {
            StrategyKind::Pi0 => Some(Strategy::Pi0),
            StrategyKind::Pi1 => Some(Strategy::Pi1),
            StrategyKind::Pi2 => Some(Strategy::Pi2),
            StrategyKind::Pi3 => Some(Strategy::Pi3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
enum Rule<'a> {
    Constant(Vec<f64>),
    Rescaled(Vec<f64>),
    Lifestyle,
    Optimal(&'a RiskAversionSurface),
}

/// A strategy bound to a market, a contribution schedule and a risk aversion.
#[derive(Debug, Clone)]
pub struct StrategyEvaluator<'a> {
    mv: MeanVariance,
    schedule: ContributionSchedule,
    rate: f64,
    gamma: f64,
    kind: StrategyKind,
    rule: Rule<'a>,
    hint: usize,
}

impl<'a> StrategyEvaluator<'a> {
    /// Validates and prepares `strategy`.
    pub fn new(
        strategy: &Strategy<'a>,
        params: &MarketParams,
        schedule: &ContributionSchedule,
        gamma: f64,
    ) -> Result<Self> {
        let mv = MeanVariance::new(params)?;
        let d = mv.dim();
        let rule = match strategy {
            Strategy::Pi0 => Rule::Constant(mv.pi0(gamma)?.weights),
            Strategy::Pi1 => Rule::Constant(mv.pi1(gamma)?.weights),
            Strategy::Pi2 => Rule::Rescaled(mv.pi1(gamma)?.weights),
            Strategy::Pi3 => {
                if !(gamma > 0.0) {
                    return Err(Error::InvalidInput(alloc::format!("risk aversion {gamma} must be positive")));
                }
                Rule::Lifestyle
            }
            Strategy::Optimal(surface) => {
                if (surface.gamma() - gamma).abs() > 1e-12 {
                    return Err(Error::InvalidStrategy(alloc::format!(
                        "surface solved for gamma = {}, requested {gamma}",
                        surface.gamma()
                    )));
                }
                let horizon = surface.times()[surface.times().len() - 1];
                if (horizon - schedule.horizon()).abs() > 1e-9 {
                    return Err(Error::InvalidStrategy("surface horizon differs from the schedule".into()));
                }
                Rule::Optimal(surface)
            }
            Strategy::Fixed(w) => {
                if w.len() != d {
                    return Err(Error::DimensionMismatch(alloc::format!("{} weights for {d} assets", w.len())));
                }
                let sum: f64 = w.iter().sum();
                if w.iter().any(|&x| !(x >= 0.0)) || sum > 1.0 + 1e-12 {
                    return Err(Error::InvalidStrategy(String::from("fixed weights must be >= 0 and sum to <= 1")));
                }
                Rule::Constant(w.clone())
            }
        };
        Ok(Self {
            mv,
            schedule: schedule.clone(),
            rate: params.rate_riskfree(),
            gamma,
            kind: strategy.kind(),
            rule,
            hint: 0,
        })
    }

    /// Label of the bound strategy.
    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    /// Terminal risk aversion.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The prepared mean-variance program.
    pub fn mean_variance(&self) -> &MeanVariance {
        &self.mv
    }

    /// Whether the weights depend on neither time nor wealth.
    pub fn is_constant(&self) -> bool {
        matches!(self.rule, Rule::Constant(_))
    }

    /// Weights at `(t, x)` given `PV_t`.
    pub fn weights_with_pv(&mut self, t: f64, wealth: f64, pv: f64, out: &mut [f64]) {
        match &self.rule {
            Rule::Constant(w) => out.copy_from_slice(w),
            Rule::Rescaled(p1) => {
                let alpha = ratio(wealth, pv);
                let scale = p1.iter().sum::<f64>().max(alpha);
                for (o, w) in out.iter_mut().zip(p1) {
                    *o = w / scale;
                }
            }
            Rule::Lifestyle => {
                let alpha = ratio(wealth, pv);
                let rho = if alpha > 0.0 { alpha * self.gamma } else { crate::cqp::PI3_ZERO_BUDGET_RHO };
                self.mv
                    .solve_into(1.0, rho, &mut self.hint, out)
                    .expect("unit budget program always solvable");
            }
            Rule::Optimal(surface) => {
                let z = if wealth > 0.0 { ln(wealth) } else { f64::NEG_INFINITY };
                let rho = surface.at_clamped(t, z);
                self.mv
                    .solve_into(1.0, rho.max(1e-300), &mut self.hint, out)
                    .expect("unit budget program always solvable");
            }
        }
    }

    /// Weights at `(t, x)`.
    pub fn weights(&mut self, t: f64, wealth: f64) -> Result<Vec<f64>> {
        let pv = present_value(t, &self.schedule, self.rate)?;
        let mut out = vec![0.0; self.mv.dim()];
        self.weights_with_pv(t, wealth, pv, &mut out);
        Ok(out)
    }
}

/// `psi(0, z) = ln CE(0, e^z)` on the spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialValue {
    /// Terminal risk aversion.
    pub gamma: f64,
    /// First node.
    pub z_min: f64,
    /// Spatial step.
    pub dz: f64,
    /// Log certainty equivalents.
    pub log_ce: Vec<f64>,
}

impl InitialValue {
    /// Certainty equivalent when starting from wealth `x`.
    pub fn ce_at(&self, x: f64) -> f64 {
        exp(interp_cubic(self.z_min, self.dz, &self.log_ce, ln(x)))
    }

    /// `v(0, x)`.
    pub fn value_at(&self, x: f64) -> f64 {
        utility(self.ce_at(x), self.gamma)
    }

    /// Certainty equivalent at zero initial wealth, from the least-squares
    /// intercept of `v(0, x)` over `xs`.
    pub fn ce_at_zero(&self, xs: &[f64]) -> Result<f64> {
        let vals: Vec<f64> = xs.iter().map(|&x| self.value_at(x)).collect();
        certainty_equivalent(ols_intercept(xs, &vals)?, self.gamma)
    }
}

struct ValueStepper {
    n: usize,
    dz: f64,
    gamma: f64,
    b: Vec<f64>,
    q: Vec<f64>,
    diff: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
}

impl ValueStepper {
    fn freeze(&mut self, old: &[f64]) {
        let n = self.n;
        let k = 1.0 - self.gamma;
        for j in 0..n {
            let d1 = if j == 0 {
                (old[1] - old[0]) / self.dz
            } else if j == n - 1 {
                1.0
            } else {
                (old[j + 1] - old[j - 1]) / (2.0 * self.dz)
            };
            let speed = self.b[j] + 0.5 * self.q[j] * k * d1;
            self.diff[j] = fitted_diffusion(speed, 0.5 * self.q[j], self.dz);
        }
    }

    fn step(&mut self, psi: &mut [f64], old: &[f64], dtau: f64, tol: f64, max_iter: usize) -> core::result::Result<(), f64> {
        let n = self.n;
        let dz = self.dz;
        let k = 1.0 - self.gamma;
        self.freeze(old);
        psi.copy_from_slice(old);
        let mut update = f64::INFINITY;
        for _ in 0..max_iter {
            {
                let d1 = (psi[1] - psi[0]) / dz;
                let s = self.b[0] + self.q[0] * k * d1;
                self.rhs[0] = -((psi[0] - old[0]) / dtau - self.b[0] * d1 - 0.5 * self.q[0] * k * d1 * d1);
                self.lower[0] = 0.0;
                self.diag[0] = 1.0 / dtau + s / dz;
                self.upper[0] = -s / dz;
            }
            for j in 1..n - 1 {
                let d1 = (psi[j + 1] - psi[j - 1]) / (2.0 * dz);
                let d2 = (psi[j + 1] - 2.0 * psi[j] + psi[j - 1]) / (dz * dz);
                let (b, q, dd) = (self.b[j], self.q[j], self.diff[j]);
                self.rhs[j] = -((psi[j] - old[j]) / dtau - b * d1 - dd * d2 - 0.5 * q * k * d1 * d1);
                let s = (b + q * k * d1) / (2.0 * dz);
                self.lower[j] = s - dd / (dz * dz);
                self.upper[j] = -s - dd / (dz * dz);
                self.diag[j] = 1.0 / dtau + 2.0 * dd / (dz * dz);
            }
            {
                let j = n - 1;
                let d2 = 2.0 * (psi[j - 1] - psi[j] + dz) / (dz * dz);
                let (b, q, dd) = (self.b[j], self.q[j], self.diff[j]);
                self.rhs[j] = -((psi[j] - old[j]) / dtau - b - dd * d2 - 0.5 * q * k);
                self.lower[j] = -2.0 * dd / (dz * dz);
                self.upper[j] = 0.0;
                self.diag[j] = 1.0 / dtau + 2.0 * dd / (dz * dz);
            }
            solve_tridiagonal_in_place(self);
            update = 0.0;
            let mut scale: f64 = 1.0;
            for j in 0..n {
                psi[j] += self.rhs[j];
                update = update.max(self.rhs[j].abs());
                scale = scale.max(psi[j].abs());
            }
            if !update.is_finite() {
                return Err(update);
            }
            if update <= tol * scale {
                return Ok(());
            }
        }
        Err(update)
    }
}

fn solve_tridiagonal_in_place(s: &mut ValueStepper) {
    linalg::solve_tridiagonal(&s.lower, &s.diag, &s.upper, &mut s.rhs, &mut s.scratch);
}

/// Solves the value PDE of a strategy back to `t = 0`.
pub fn value_pde(
    strategy: &Strategy<'_>,
    params: &MarketParams,
    schedule: &ContributionSchedule,
    gamma: f64,
    grid: &GridSpec,
) -> Result<InitialValue> {
    grid.validate()?;
    if (grid.t_max - schedule.horizon()).abs() > 1e-9 {
        return Err(Error::IncompatibleGrid("grid and contribution horizons differ".into()));
    }
    let mut ev = StrategyEvaluator::new(strategy, params, schedule, gamma)?;
    let n = grid.space_nodes();
    let r = params.rate_riskfree();
    let zs: Vec<f64> = (0..n).map(|j| grid.z(j)).collect();

    if let Rule::Constant(w) = &ev.rule {
        if w.iter().all(|&x| x == 0.0) {
            let growth = exp(r * grid.t_max);
            let acc = schedule.accumulated_value(r);
            let log_ce = zs.iter().map(|&z| ln(growth * exp(z) + acc)).collect();
            return Ok(InitialValue { gamma, z_min: grid.z_min, dz: grid.dz, log_ce });
        }
    }

    let d = params.dim();
    let excess = params.excess_returns();
    let cov = params.covariance().to_vec();
    let mut stepper = ValueStepper {
        n,
        dz: grid.dz,
        gamma,
        b: vec![0.0; n],
        q: vec![0.0; n],
        diff: vec![0.0; n],
        lower: vec![0.0; n],
        diag: vec![0.0; n],
        upper: vec![0.0; n],
        rhs: vec![0.0; n],
        scratch: Vec::with_capacity(n),
    };
    let wealth: Vec<f64> = zs.iter().map(|&z| exp(z)).collect();
    let mut w = vec![0.0; d];
    let mut psi = zs.clone();
    let taus = grid.tau_levels();
    const MAX_HALVINGS: u32 = 8;

    for k in 1..taus.len() {
        // stack of pending sub-intervals, processed left to right
        let mut pending: Vec<(f64, f64, u32)> = vec![(taus[k - 1], taus[k], 0)];
        while let Some((a, b, depth)) = pending.pop() {
            let t = grid.t_max - b;
            let t = if t < 0.0 { 0.0 } else { t };
            let y = schedule.rate_at(t);
            let pv = present_value(t, schedule, r)?;
            let mut qmin = f64::INFINITY;
            for j in 0..n {
                ev.weights_with_pv(t, wealth[j], pv, &mut w);
                let q = linalg::quad_form(&cov, d, &w);
                stepper.q[j] = q;
                stepper.b[j] = y / wealth[j] + r + linalg::dot(&w, &excess) - 0.5 * q;
                qmin = qmin.min(q);
            }
            if qmin < DIFFUSION_FLOOR {
                return Err(Error::DiffusionDegenerate(qmin));
            }
            let old = psi.clone();
            match stepper.step(&mut psi, &old, b - a, 1e-11, 30) {
                Ok(()) => {}
                Err(update) => {
                    if depth >= MAX_HALVINGS {
                        return Err(Error::NonConvergence { time: t, update });
                    }
                    psi.copy_from_slice(&old);
                    let mid = 0.5 * (a + b);
                    pending.push((mid, b, depth + 1));
                    pending.push((a, mid, depth + 1));
                }
            }
        }
    }
    Ok(InitialValue { gamma, z_min: grid.z_min, dz: grid.dz, log_ce: psi })
}

/// Certainty equivalent at zero initial wealth by the PDE route.
pub fn certainty_equivalent_pde(
    strategy: &Strategy<'_>,
    params: &MarketParams,
    schedule: &ContributionSchedule,
    gamma: f64,
    grid: &GridSpec,
) -> Result<f64> {
    let xs = default_extrapolation_points();
    match strategy {
        Strategy::Optimal(surface) => optimal_certainty_equivalent(surface, params, schedule, &xs),
        _ => value_pde(strategy, params, schedule, gamma, grid)?.ce_at_zero(&xs),
    }
}

/// Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    /// Number of simulated paths.
    pub n_paths: usize,
    /// Simulation time step in years.
    pub dt_sim: f64,
    /// Base seed; path `i` uses stream `i` of this seed.
    pub seed: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { n_paths: 1_000_000, dt_sim: 1.0 / 250.0, seed: 0x5eed }
    }
}

/// Monte Carlo certainty equivalent with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    /// Certainty equivalent.
    pub ce: f64,
    /// Standard error of `ce`.
    pub stderr: f64,
    /// Sample mean of terminal utility.
    pub mean_utility: f64,
    /// Standard error of the mean utility.
    pub utility_stderr: f64,
    /// Paths used.
    pub n_paths: usize,
}

/// Path simulator for one strategy.
#[derive(Debug, Clone)]
pub struct PathSimulator<'a> {
    ev: StrategyEvaluator<'a>,
    chol: Vec<f64>,
    excess: Vec<f64>,
    cov: Vec<f64>,
    rate: f64,
    steps: usize,
    h: f64,
    pv: Vec<f64>,
    contrib: Vec<f64>,
    weights: Vec<f64>,
    loadings: Vec<f64>,
    shocks: Vec<f64>,
}

impl<'a> PathSimulator<'a> {
    /// Prepares the simulator; the step is `T / ceil(T / dt_sim)`.
    pub fn new(
        strategy: &Strategy<'a>,
        params: &MarketParams,
        schedule: &ContributionSchedule,
        gamma: f64,
        dt_sim: f64,
    ) -> Result<Self> {
        if !(dt_sim > 0.0) || !dt_sim.is_finite() {
            return Err(Error::InvalidInput(alloc::format!("simulation step {dt_sim} must be positive")));
        }
        let ev = StrategyEvaluator::new(strategy, params, schedule, gamma)?;
        let d = params.dim();
        let chol = linalg::cholesky(params.covariance(), d).ok_or(Error::NotPositiveDefinite)?;
        let t_max = schedule.horizon();
        let steps = ceil(t_max / dt_sim - 1e-9).max(1.0) as usize;
        let h = t_max / steps as f64;
        let r = params.rate_riskfree();
        let mut pv = Vec::with_capacity(steps);
        let mut contrib = Vec::with_capacity(steps);
        for i in 0..steps {
            let t = i as f64 * h;
            pv.push(present_value(t, schedule, r)?);
            contrib.push(schedule.accumulated_between(t, t + h, r));
        }
        Ok(Self {
            ev,
            chol,
            excess: params.excess_returns(),
            cov: params.covariance().to_vec(),
            rate: r,
            steps,
            h,
            pv,
            contrib,
            weights: vec![0.0; d],
            loadings: vec![0.0; d],
            shocks: vec![0.0; d],
        })
    }

    /// Label of the simulated strategy.
    pub fn kind(&self) -> StrategyKind {
        self.ev.kind()
    }

    /// Terminal wealth of path `index` started at `x0`.
    ///
    /// Each step applies the exact log-normal growth for the weights frozen
    /// at the start of the step, then adds the contributions of the step
    /// accumulated at the risk-free rate.
    pub fn terminal_wealth(&mut self, x0: f64, seed: u64, index: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let d = self.weights.len();
        let sq = sqrt(self.h);
        let mut wealth = x0;
        for i in 0..self.steps {
            let t = i as f64 * self.h;
            self.ev.weights_with_pv(t, wealth, self.pv[i], &mut self.weights);
            // loadings = L' pi
            for c in 0..d {
                let mut s = 0.0;
                for row in c..d {
                    s += self.chol[row * d + c] * self.weights[row];
                }
                self.loadings[c] = s;
            }
            for z in self.shocks.iter_mut() {
                *z = StandardNormal.sample(&mut rng);
            }
            let q = linalg::quad_form(&self.cov, d, &self.weights);
            let drift = (self.rate + linalg::dot(&self.weights, &self.excess) - 0.5 * q) * self.h;
            let noise = linalg::dot(&self.loadings, &self.shocks) * sq;
            wealth = wealth * exp(drift + noise) + self.contrib[i];
            if !(wealth >= 0.0) || !wealth.is_finite() {
                return Err(Error::NegativeWealth(wealth));
            }
        }
        Ok(wealth)
    }
}

/// Mean utility and delta-method CE error from terminal wealths.
pub fn summarize(terminal: &[f64], gamma: f64) -> Result<McEstimate> {
    let n = terminal.len();
    if n < 2 {
        return Err(Error::InsufficientPoints(n));
    }
    // two passes on data shifted by the first sample; identical samples give
    // exactly zero variance and their own value as the mean
    let shift = utility(terminal[0], gamma);
    let utils: Vec<f64> = terminal.iter().map(|&w| utility(w, gamma) - shift).collect();
    let centred = pairwise_sum(&utils) / n as f64;
    let dev: Vec<f64> = utils.iter().map(|u| (u - centred) * (u - centred)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    let mean = shift + centred;
    let se = sqrt(var / n as f64);
    let ce = certainty_equivalent(mean, gamma)?;
    Ok(McEstimate {
        ce,
        stderr: marginal_ce(ce, gamma) * se,
        mean_utility: mean,
        utility_stderr: se,
        n_paths: n,
    })
}

/// `dCE / dE[U] = 1 / U'(CE) = CE^gamma`.
fn marginal_ce(ce: f64, gamma: f64) -> f64 {
    powf(ce, gamma)
}

/// Sequential Monte Carlo certainty equivalent from initial wealth `x0`.
pub fn monte_carlo_ce(
    strategy: &Strategy<'_>,
    params: &MarketParams,
    schedule: &ContributionSchedule,
    gamma: f64,
    x0: f64,
    options: &McOptions,
) -> Result<McEstimate> {
    if options.n_paths < 2 {
        return Err(Error::InsufficientPoints(options.n_paths));
    }
    let mut sim = PathSimulator::new(strategy, params, schedule, gamma, options.dt_sim)?;
    let mut terminal = Vec::with_capacity(options.n_paths);
    for i in 0..options.n_paths {
        terminal.push(sim.terminal_wealth(x0, options.seed, i as u64)?);
    }
    summarize(&terminal, gamma)
}

/// Difference of two certainty equivalents estimated on common paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapEstimate {
    /// `CE_a - CE_b`.
    pub gap: f64,
    /// Standard error using the pairing of paths.
    pub stderr_paired: f64,
    /// Standard error as if the samples were independent.
    pub stderr_independent: f64,
}

/// CE gap from terminal wealths simulated with common random numbers.
pub fn paired_gap(terminal_a: &[f64], terminal_b: &[f64], gamma: f64) -> Result<GapEstimate> {
    if terminal_a.len() != terminal_b.len() {
        return Err(Error::DimensionMismatch("paths differ in number".into()));
    }
    let a = summarize(terminal_a, gamma)?;
    let b = summarize(terminal_b, gamma)?;
    let (ca, cb) = (marginal_ce(a.ce, gamma), marginal_ce(b.ce, gamma));
    let n = terminal_a.len();
    let diffs: Vec<f64> = terminal_a
        .iter()
        .zip(terminal_b)
        .map(|(&wa, &wb)| ca * (utility(wa, gamma) - a.mean_utility) - cb * (utility(wb, gamma) - b.mean_utility))
        .collect();
    let sq: Vec<f64> = diffs.iter().map(|x| x * x).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    Ok(GapEstimate {
        gap: a.ce - b.ce,
        stderr_paired: sqrt(var / n as f64),
        stderr_independent: sqrt(a.stderr * a.stderr + b.stderr * b.stderr),
    })
}

/// How a certainty equivalent was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Value PDE (or characteristics for the optimal policy).
    Pde,
    /// Monte Carlo simulation.
    Mc,
}

impl Method {
    /// Lower-case name.
    pub fn name(self) -> &'static str {
        match self {
            Method::Pde => "pde",
            Method::Mc => "mc",
        }
    }
}

/// One line of a welfare comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct WelfareRow {
    /// Terminal risk aversion.
    pub gamma: f64,
    /// Strategy label.
    pub strategy: StrategyKind,
    /// Certainty equivalent at zero initial wealth.
    pub ce: f64,
    /// Internal rate of return matching `ce`.
    pub irr: f64,
    /// Computation route.
    pub method: Method,
    /// Monte Carlo standard error of `ce`.
    pub stderr: Option<f64>,
    /// Wall time in seconds.
    pub runtime_s: f64,
}

/// Rows of a welfare comparison.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WelfareReport {
    /// One row per strategy and method.
    pub rows: Vec<WelfareRow>,
}

impl WelfareReport {
    /// First row for a strategy and method.
    pub fn find(&self, strategy: StrategyKind, method: Method) -> Option<&WelfareRow> {
        self.rows.iter().find(|r| r.strategy == strategy && r.method == method)
    }
}

/// Evaluates every strategy with every requested method. `clock` returns
/// seconds from an arbitrary origin and is only used for the runtime column.
/// Monte Carlo uses the same seed, hence common random numbers, for all
/// strategies.
#[allow(clippy::too_many_arguments)]
pub fn compare_strategies(
    strategies: &[Strategy<'_>],
    params: &MarketParams,
    schedule: &ContributionSchedule,
    gamma: f64,
    methods: &[Method],
    grid: &GridSpec,
    mc: &McOptions,
    clock: &dyn Fn() -> f64,
) -> Result<WelfareReport> {
    let mut report = WelfareReport::default();
    for s in strategies {
        for &method in methods {
            let start = clock();
            let (ce, stderr) = match method {
                Method::Pde => (certainty_equivalent_pde(s, params, schedule, gamma, grid)?, None),
                Method::Mc => {
                    let est = monte_carlo_ce(s, params, schedule, gamma, 0.0, mc)?;
                    (est.ce, Some(est.stderr))
                }
            };
            let irr = irr(ce, schedule)?;
            report.rows.push(WelfareRow {
                gamma,
                strategy: s.kind(),
                ce,
                irr,
                method,
                stderr,
                runtime_s: clock() - start,
            });
        }
    }
    Ok(report)
}
