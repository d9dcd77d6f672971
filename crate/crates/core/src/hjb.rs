//! Indirect risk aversion and the optimal policy.
//!
//! With `z = ln x` and `tau = T - t` the indirect relative risk aversion
//! `rho(t, z) = R(t, e^z)` solves the quasilinear Cauchy problem
//!
//! ```text
//!     rho_tau = d_zz G(rho) + d_z F(rho, z),     rho(tau = 0) = gamma,
//!     G(rho) = -g(rho),   F(rho, z) = (y e^{-z} + r) rho - (1 - rho) g(rho),
//! ```
//!
//! where `g(rho) = f(1, rho)` is the optimal value of the unit-budget
//! mean-variance program. `G' = -g' > 0`, so the problem is uniformly
//! parabolic. It is marched backward from the horizon with a fully implicit
//! conservative scheme: backward Euler in time, Newton with a tridiagonal
//! Jacobian, and exponentially fitted dissipation on the advective flux. The
//! advection speed grows like `y e^{-z}` at the left end, far beyond what an
//! explicit step could follow.
//!
//! Boundaries: Robin `rho_z = kappa rho` at `z_min` while contributions remain
//! (the solution behaves like `c e^z` as wealth vanishes, and is flat once
//! they stop) and Neumann `rho_z = 0` at `z_max`.
//!
//! The value function is constant along the characteristics
//! `dx/dt = y + x (r + g(rho(t, ln x)))`, which is how both [`ValueSurface`]
//! and the optimal certainty equivalent are computed.

use alloc::vec;
use alloc::vec::Vec;

use crate::cqp::{Allocation, MeanVariance};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::linalg::solve_tridiagonal;
use crate::market::{present_value, ContributionSchedule, MarketParams};
use crate::numeric::{ceil, exp, ln};
use crate::pde::{artificial_viscosity, interp_cubic, locate};
use crate::welfare::{certainty_equivalent, utility};

/// Tuning knobs for [`solve_rho`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Coefficient of the Robin condition `rho_z = kappa rho` at `z_min`.
    pub robin_kappa: f64,
    /// Newton stops once the largest update falls below this.
    pub newton_tol: f64,
    /// Newton iterations per step before the step is halved.
    pub max_newton_iter: usize,
    /// How many times a step may be halved before giving up.
    pub max_step_halvings: u32,
    /// Allowed overshoot of `rho <= gamma`.
    pub invariant_slack: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            robin_kappa: 1.0,
            newton_tol: 1e-10,
            max_newton_iter: 30,
            max_step_halvings: 8,
            invariant_slack: 1e-6,
        }
    }
}

/// `rho(t, z)` sampled on a time-ascending grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskAversionSurface {
    gamma: f64,
    horizon: f64,
    times: Vec<f64>,
    z_min: f64,
    dz: f64,
    nz: usize,
    values: Vec<f64>,
}

impl RiskAversionSurface {
    /// Assembles a surface from raw parts, e.g. when reading a cache file.
    /// `values` is row-major with one row of `nz` values per time.
    pub fn from_parts(
        gamma: f64,
        times: Vec<f64>,
        z_min: f64,
        dz: f64,
        nz: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if times.len() < 2 || nz < 2 || values.len() != times.len() * nz {
            return Err(Error::IncompatibleGrid(alloc::format!(
                "{} values for {} times x {nz} nodes",
                values.len(),
                times.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || !(dz > 0.0) || !(gamma > 0.0) {
            return Err(Error::IncompatibleGrid("times must increase and dz, gamma be positive".into()));
        }
        let horizon = times[times.len() - 1];
        Ok(Self {
            gamma,
            horizon,
            times,
            z_min,
            dz,
            nz,
            values,
        })
    }

    /// Terminal risk aversion.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Stored times, ascending from 0 to `T`.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// First stored log-wealth node.
    pub fn z_min(&self) -> f64 {
        self.z_min
    }

    /// Last stored log-wealth node.
    pub fn z_max(&self) -> f64 {
        self.z_min + (self.nz - 1) as f64 * self.dz
    }

    /// Stored spatial step.
    pub fn dz(&self) -> f64 {
        self.dz
    }

    /// Stored nodes per time.
    pub fn space_nodes(&self) -> usize {
        self.nz
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values at stored time index `k`.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.nz..(k + 1) * self.nz]
    }

    fn time_weight(&self, t: f64) -> (usize, f64) {
        let k = self.times.partition_point(|&s| s <= t);
        let k = k.clamp(1, self.times.len() - 1) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        (k, ((t - t0) / (t1 - t0)).clamp(0.0, 1.0))
    }

    fn bilinear(&self, t: f64, z: f64) -> f64 {
        let (k, wt) = self.time_weight(t);
        let (j, wz) = locate(self.z_min, self.dz, self.nz, z);
        let a = self.row(k);
        let b = self.row(k + 1);
        let lo = a[j] * (1.0 - wz) + a[j + 1] * wz;
        let hi = b[j] * (1.0 - wz) + b[j + 1] * wz;
        lo * (1.0 - wt) + hi * wt
    }

    /// Bilinear value at `(t, z)`. Queries up to one stored cell outside the
    /// `z` range take the boundary value with a warning; further out is an
    /// error.
    pub fn at(&self, t: f64, z: f64) -> Result<f64> {
        if !(t >= -1e-12 && t <= self.horizon + 1e-12) {
            return Err(Error::TimeOutOfRange(t));
        }
        if !z.is_finite() || z < self.z_min - self.dz || z > self.z_max() + self.dz {
            return Err(Error::OutOfDomain { t, z });
        }
        if z < self.z_min || z > self.z_max() {
            log::warn!("z = {z} outside [{}, {}], using the boundary value", self.z_min, self.z_max());
        }
        Ok(self.bilinear(t, z))
    }

    /// Bilinear value with `t` and `z` clamped to the grid.
    pub fn at_clamped(&self, t: f64, z: f64) -> f64 {
        self.bilinear(t.clamp(0.0, self.horizon), z)
    }

    /// Smallest and largest stored value.
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

struct RhoStepper<'a> {
    mv: &'a MeanVariance,
    n: usize,
    dz: f64,
    kappa: f64,
    rate: f64,
    options: SolverOptions,
    exp_neg_z: Vec<f64>,
    hints: Vec<usize>,
    weights: Vec<f64>,
    ext: Vec<f64>,
    g: Vec<f64>,
    g_slope: Vec<f64>,
    flux: Vec<f64>,
    flux_slope: Vec<f64>,
    nu: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> RhoStepper<'a> {
    fn new(mv: &'a MeanVariance, grid: &GridSpec, rate: f64, options: SolverOptions) -> Self {
        let n = grid.space_nodes();
        let exp_neg_z = (0..n + 2).map(|e| exp(-(grid.z_min + (e as f64 - 1.0) * grid.dz))).collect();
        Self {
            mv,
            n,
            dz: grid.dz,
            kappa: options.robin_kappa,
            rate,
            options,
            exp_neg_z,
            hints: vec![0; n + 2],
            weights: vec![0.0; mv.dim()],
            ext: vec![0.0; n + 2],
            g: vec![0.0; n + 2],
            g_slope: vec![0.0; n + 2],
            flux: vec![0.0; n + 2],
            flux_slope: vec![0.0; n + 2],
            nu: vec![0.0; n + 1],
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            rhs: vec![0.0; n],
            scratch: Vec::with_capacity(n),
        }
    }

    /// Fills the ghost-extended state and the nonlinear coefficients.
    fn evaluate(&mut self, rho: &[f64], y: f64) {
        let n = self.n;
        self.ext[1..=n].copy_from_slice(rho);
        self.ext[0] = rho[1] - 2.0 * self.dz * self.kappa * rho[0];
        self.ext[n + 1] = rho[n - 2];
        for e in 0..n + 2 {
            let r = self.ext[e];
            let (g, gp) = self.mv.g_and_slope(r, &mut self.hints[e], &mut self.weights);
            let a = y * self.exp_neg_z[e] + self.rate;
            self.g[e] = g;
            self.g_slope[e] = gp;
            self.flux[e] = a * r - (1.0 - r) * g;
            self.flux_slope[e] = a + g - (1.0 - r) * gp;
        }
    }

    fn freeze_viscosity(&mut self) {
        for f in 0..=self.n {
            let diffusion = -0.5 * (self.g_slope[f] + self.g_slope[f + 1]);
            let speed = 0.5 * (self.flux_slope[f] + self.flux_slope[f + 1]);
            self.nu[f] = artificial_viscosity(speed, diffusion, self.dz);
        }
    }

    fn step(&mut self, rho: &mut [f64], old: &[f64], dtau: f64, y: f64, time: f64) -> Result<()> {
        let n = self.n;
        let dz = self.dz;
        let inv_dz2 = 1.0 / (dz * dz);
        self.evaluate(old, y);
        self.freeze_viscosity();
        rho.copy_from_slice(old);
        let mut update = f64::INFINITY;
        for _ in 0..self.options.max_newton_iter {
            self.evaluate(rho, y);
            for j in 0..n {
                let e = j + 1;
                let (nl, nr) = (self.nu[j], self.nu[j + 1]);
                let big_g = |k: usize| -self.g[k];
                let big_gp = |k: usize| -self.g_slope[k];
                let phi_r = 0.5 * (self.flux[e] + self.flux[e + 1]) + nr * (self.ext[e + 1] - self.ext[e]);
                let phi_l = 0.5 * (self.flux[e - 1] + self.flux[e]) + nl * (self.ext[e] - self.ext[e - 1]);
                self.rhs[j] = -((rho[j] - old[j]) / dtau
                    - (big_g(e + 1) - 2.0 * big_g(e) + big_g(e - 1)) * inv_dz2
                    - (phi_r - phi_l) / dz);
                self.lower[j] = -big_gp(e - 1) * inv_dz2 + (0.5 * self.flux_slope[e - 1] - nl) / dz;
                self.upper[j] = -big_gp(e + 1) * inv_dz2 - (0.5 * self.flux_slope[e + 1] + nr) / dz;
                self.diag[j] = 1.0 / dtau + 2.0 * big_gp(e) * inv_dz2 + (nl + nr) / dz;
            }
            // ghost at -1 depends on rho_0 and rho_1; ghost at N+1 equals rho_{N-1}
            let l0 = self.lower[0];
            self.diag[0] += l0 * (-2.0 * dz * self.kappa);
            self.upper[0] += l0;
            self.lower[0] = 0.0;
            let un = self.upper[n - 1];
            self.lower[n - 1] += un;
            self.upper[n - 1] = 0.0;

            solve_tridiagonal(&self.lower, &self.diag, &self.upper, &mut self.rhs, &mut self.scratch);
            update = 0.0;
            let mut scale: f64 = 1.0;
            for j in 0..n {
                rho[j] += self.rhs[j];
                update = update.max(self.rhs[j].abs());
                scale = scale.max(rho[j].abs());
            }
            if !update.is_finite() {
                break;
            }
            if update <= self.options.newton_tol * scale {
                return Ok(());
            }
        }
        Err(Error::NonConvergence { time, update })
    }

    fn advance(
        &mut self,
        rho: &mut Vec<f64>,
        tau0: f64,
        tau1: f64,
        horizon: f64,
        schedule: &ContributionSchedule,
        depth: u32,
    ) -> Result<()> {
        let old = rho.clone();
        let t_new = horizon - tau1;
        let y = schedule.rate_at(t_new.max(0.0));
        // without contributions left rho is flat in z as wealth vanishes
        let pv = schedule.discounted_from(t_new.clamp(0.0, horizon), self.rate)?;
        self.kappa = if pv > 0.0 { self.options.robin_kappa } else { 0.0 };
        match self.step(rho, &old, tau1 - tau0, y, t_new) {
            Ok(()) => Ok(()),
            Err(err @ Error::NonConvergence { .. }) => {
                if depth >= self.options.max_step_halvings {
                    return Err(err);
                }
                rho.copy_from_slice(&old);
                let mid = 0.5 * (tau0 + tau1);
                self.advance(rho, tau0, mid, horizon, schedule, depth + 1)?;
                self.advance(rho, mid, tau1, horizon, schedule, depth + 1)
            }
            Err(e) => Err(e),
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidInput(alloc::format!("risk aversion {gamma} must be positive")));
    }
    Ok(())
}

fn check_horizon(grid: &GridSpec, schedule: &ContributionSchedule) -> Result<()> {
    if (grid.t_max - schedule.horizon()).abs() > 1e-9 {
        return Err(Error::IncompatibleGrid(alloc::format!(
            "grid horizon {} differs from contribution horizon {}",
            grid.t_max,
            schedule.horizon()
        )));
    }
    Ok(())
}

/// Solves for the indirect risk aversion `rho(t, z)`.
pub fn solve_rho(
    params: &MarketParams,
    schedule: &ContributionSchedule,
    gamma: f64,
    grid: &GridSpec,
    options: &SolverOptions,
) -> Result<RiskAversionSurface> {
    grid.validate()?;
    check_gamma(gamma)?;
    check_horizon(grid, schedule)?;
    if !(options.robin_kappa >= 0.0) {
        return Err(Error::InvalidInput("Robin coefficient must be nonnegative".into()));
    }
    let mv = MeanVariance::new(params)?;
    let n = grid.space_nodes();
    let taus = grid.tau_levels();
    let stored = grid.stored_tau_indices();
    let stride = grid.store_every_z;
    let nz = grid.stored_space_nodes();
    let mut rows: Vec<f64> = Vec::with_capacity(stored.len() * nz);
    let mut stored_taus = Vec::with_capacity(stored.len());

    let mut rho = vec![gamma; n];
    let mut next_store = 0usize;
    let mut keep = |k: usize, rho: &[f64], rows: &mut Vec<f64>, stored_taus: &mut Vec<f64>| {
        if next_store < stored.len() && stored[next_store] == k {
            rows.extend(rho.iter().step_by(stride).take(nz));
            stored_taus.push(taus[k]);
            next_store += 1;
        }
    };
    keep(0, &rho, &mut rows, &mut stored_taus);

    let mut stepper = RhoStepper::new(&mv, grid, params.rate_riskfree(), *options);
    let upper = gamma + options.invariant_slack;
    for k in 1..taus.len() {
        stepper.advance(&mut rho, taus[k - 1], taus[k], grid.t_max, schedule, 0)?;
        let t = grid.t_max - taus[k];
        for (j, &v) in rho.iter().enumerate() {
            if !(v > 0.0 && v <= upper) {
                return Err(Error::InvariantViolated(alloc::format!(
                    "rho = {v} at t = {t}, z = {} outside (0, {gamma}]",
                    grid.z(j)
                )));
            }
        }
        keep(k, &rho, &mut rows, &mut stored_taus);
    }

    // rows were produced backward in time
    let mut values = Vec::with_capacity(rows.len());
    for k in (0..stored_taus.len()).rev() {
        values.extend_from_slice(&rows[k * nz..(k + 1) * nz]);
    }
    let times: Vec<f64> = stored_taus.iter().rev().map(|tau| grid.t_max - tau).collect();
    let mut times = times;
    times[0] = 0.0;
    let last = times.len() - 1;
    times[last] = grid.t_max;
    RiskAversionSurface::from_parts(gamma, times, grid.z_min, grid.dz * stride as f64, nz, values)
}

/// `R(t, x) = rho(t, ln x)`.
pub fn indirect_risk_aversion(surface: &RiskAversionSurface, t: f64, wealth: f64) -> Result<f64> {
    if !(wealth > 0.0) {
        return Err(Error::InvalidInput(alloc::format!("wealth {wealth} must be positive")));
    }
    surface.at(t, ln(wealth))
}

/// Risk aversion of the value function in the paid-up-front world,
/// `R_bar(t, x_bar) = R(t, x_bar - PV_t) x_bar / (x_bar - PV_t)`.
pub fn samuelson_risk_aversion(
    surface: &RiskAversionSurface,
    schedule: &ContributionSchedule,
    r: f64,
    t: f64,
    lifetime_wealth: f64,
) -> Result<f64> {
    let pv = present_value(t, schedule, r)?;
    let wealth = lifetime_wealth - pv;
    if !(wealth > 0.0) {
        return Err(Error::WealthBelowPv { wealth: lifetime_wealth, pv });
    }
    Ok(indirect_risk_aversion(surface, t, wealth)? * lifetime_wealth / wealth)
}

/// Optimal proportions of accumulated savings, `pi*(t, x) = pi_hat(1, R(t, x))`.
pub fn optimal_policy(
    surface: &RiskAversionSurface,
    mv: &MeanVariance,
    t: f64,
    wealth: f64,
) -> Result<Allocation> {
    let rho = indirect_risk_aversion(surface, t, wealth)?;
    mv.solve(1.0, rho)
}

/// Optimal proportions of lifetime wealth,
/// `pi_bar*(t, x_bar) = pi_hat(1 - PV_t / x_bar, R_bar(t, x_bar))`.
pub fn optimal_policy_samuelson(
    surface: &RiskAversionSurface,
    mv: &MeanVariance,
    schedule: &ContributionSchedule,
    r: f64,
    t: f64,
    lifetime_wealth: f64,
) -> Result<Allocation> {
    let pv = present_value(t, schedule, r)?;
    if lifetime_wealth < pv || !lifetime_wealth.is_finite() {
        return Err(Error::WealthBelowPv { wealth: lifetime_wealth, pv });
    }
    let alpha = if lifetime_wealth > 0.0 { 1.0 - pv / lifetime_wealth } else { 0.0 };
    if alpha <= 0.0 {
        return mv.solve(0.0, 1.0);
    }
    let r_bar = samuelson_risk_aversion(surface, schedule, r, t, lifetime_wealth)?;
    mv.solve(alpha, r_bar)
}

/// Drift of a characteristic in wealth space, `y + x (r + g(rho))`.
struct Characteristic<'a> {
    surface: &'a RiskAversionSurface,
    mv: &'a MeanVariance,
    schedule: &'a ContributionSchedule,
    rate: f64,
    hint: usize,
    weights: Vec<f64>,
}

/// Largest RK4 step along characteristics.
const CHARACTERISTIC_STEP: f64 = 0.01;

impl<'a> Characteristic<'a> {
    fn new(
        surface: &'a RiskAversionSurface,
        mv: &'a MeanVariance,
        schedule: &'a ContributionSchedule,
        rate: f64,
    ) -> Self {
        Self {
            surface,
            mv,
            schedule,
            rate,
            hint: 0,
            weights: vec![0.0; mv.dim()],
        }
    }

    fn drift(&mut self, t: f64, x: f64, y: f64) -> f64 {
        let z = if x > 0.0 { ln(x) } else { f64::NEG_INFINITY };
        let rho = self.surface.at_clamped(t, z);
        let (g, _) = self.mv.g_and_slope(rho, &mut self.hint, &mut self.weights);
        y + x * (self.rate + g)
    }

    /// Moves `x` from `t0` to `t1` with RK4, splitting at contribution
    /// breakpoints so the rate is constant on every substep.
    fn advance(&mut self, mut x: f64, t0: f64, t1: f64) -> f64 {
        let mut cuts: Vec<f64> = vec![t0];
        cuts.extend(self.schedule.breakpoints().iter().copied().filter(|&b| b > t0 && b < t1));
        cuts.push(t1);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let y = self.schedule.rate_at(a);
            let n = ceil((b - a) / CHARACTERISTIC_STEP).max(1.0) as usize;
            let h = (b - a) / n as f64;
            for i in 0..n {
                let t = a + i as f64 * h;
                let k1 = self.drift(t, x, y);
                let k2 = self.drift(t + 0.5 * h, x + 0.5 * h * k1, y);
                let k3 = self.drift(t + 0.5 * h, x + 0.5 * h * k2, y);
                let k4 = self.drift(t + h, x + h * k3, y);
                x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
        x
    }
}

/// Terminal point `x_T` of the characteristic through `(0, x0)`. The optimal
/// value is `v(0, x0) = U(x_T)`, so `x_T` is the certainty equivalent.
pub fn characteristic_terminal_wealth(
    surface: &RiskAversionSurface,
    params: &MarketParams,
    schedule: &ContributionSchedule,
    x0: f64,
) -> Result<f64> {
    if !(x0 >= 0.0) || !x0.is_finite() {
        return Err(Error::InvalidInput(alloc::format!("initial wealth {x0} must be nonnegative")));
    }
    let mv = MeanVariance::new(params)?;
    let mut ch = Characteristic::new(surface, &mv, schedule, params.rate_riskfree());
    let times = surface.times();
    let mut x = x0;
    for w in times.windows(2) {
        x = ch.advance(x, w[0], w[1]);
    }
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::CharacteristicExitsDomain(ln(x.abs())));
    }
    Ok(x)
}

/// Ordinary least squares of `values` on `xs`; returns the intercept.
pub fn ols_intercept(xs: &[f64], values: &[f64]) -> Result<f64> {
    if xs.len() != values.len() {
        return Err(Error::DimensionMismatch(alloc::format!("{} abscissae, {} values", xs.len(), values.len())));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::InsufficientPoints(n));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = values.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientPoints(1));
    }
    let sxy: f64 = xs.iter().zip(values).map(|(x, v)| (x - mx) * (v - my)).sum();
    Ok(my - sxy / sxx * mx)
}

/// Default abscissae `e^-10, ..., e^-5` for extrapolating values to `x = 0`.
pub fn default_extrapolation_points() -> Vec<f64> {
    (5..=10).rev().map(|k| exp(-(k as f64))).collect()
}

/// Value function `u(t, z)` stored as `psi = ln CE(t, z)`, so that
/// `u = e^{(1 - gamma) psi} / (1 - gamma)` (or `u = psi` for log utility).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    gamma: f64,
    times: Vec<f64>,
    z_min: f64,
    dz: f64,
    nz: usize,
    psi: Vec<f64>,
}

impl ValueSurface {
    /// Terminal risk aversion.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Stored times, ascending.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Stored nodes per time.
    pub fn space_nodes(&self) -> usize {
        self.nz
    }

    /// Log-wealth of node `j`.
    pub fn z(&self, j: usize) -> f64 {
        self.z_min + j as f64 * self.dz
    }

    /// Stored spatial step.
    pub fn dz(&self) -> f64 {
        self.dz
    }

    /// `ln CE` at stored time `k`.
    pub fn log_ce_row(&self, k: usize) -> &[f64] {
        &self.psi[k * self.nz..(k + 1) * self.nz]
    }

    /// `ln CE(t_k, z)` by cubic interpolation.
    pub fn log_ce(&self, k: usize, z: f64) -> f64 {
        interp_cubic(self.z_min, self.dz, self.log_ce_row(k), z)
    }

    /// `u(t_k, z_j)`.
    pub fn value(&self, k: usize, j: usize) -> f64 {
        utility(exp(self.log_ce_row(k)[j]), self.gamma)
    }

    /// `1 - u_zz / u_z` at an interior node from central differences; this is
    /// the risk aversion the value function implies.
    pub fn implied_risk_aversion(&self, k: usize, j: usize) -> f64 {
        let p = self.log_ce_row(k);
        let d1 = (p[j + 1] - p[j - 1]) / (2.0 * self.dz);
        let d2 = (p[j + 1] - 2.0 * p[j] + p[j - 1]) / (self.dz * self.dz);
        1.0 - (1.0 - self.gamma) * d1 - d2 / d1
    }

    /// `v(0, 0)` by regressing `v(0, x)` on `x` over `xs`.
    pub fn value_at_zero(&self, xs: &[f64]) -> Result<f64> {
        value_at_zero_extrapolation(self, xs)
    }
}

/// Intercept of the least-squares line through `(x, u(0, ln x))`.
pub fn value_at_zero_extrapolation(u: &ValueSurface, xs: &[f64]) -> Result<f64> {
    let z_hi = u.z(u.nz - 1);
    let mut vals = Vec::with_capacity(xs.len());
    for &x in xs {
        let z = ln(x);
        if !(x > 0.0) || z < u.z_min || z > z_hi {
            return Err(Error::OutOfDomain { t: 0.0, z });
        }
        vals.push(utility(exp(u.log_ce(0, z)), u.gamma));
    }
    ols_intercept(xs, &vals)
}

/// Transports the terminal utility back along characteristics on the stored
/// grid of `surface` (semi-Lagrangian, cubic interpolation in `z`).
pub fn solve_value_u(
    surface: &RiskAversionSurface,
    params: &MarketParams,
    schedule: &ContributionSchedule,
) -> Result<ValueSurface> {
    if (surface.times()[surface.times().len() - 1] - schedule.horizon()).abs() > 1e-9 {
        return Err(Error::IncompatibleGrid("surface and schedule horizons differ".into()));
    }
    let mv = MeanVariance::new(params)?;
    let mut ch = Characteristic::new(surface, &mv, schedule, params.rate_riskfree());
    let nz = surface.space_nodes();
    let nt = surface.times().len();
    let (z0, dz) = (surface.z_min(), surface.dz());
    let z_hi = surface.z_max();
    let mut psi = vec![0.0; nt * nz];
    for j in 0..nz {
        psi[(nt - 1) * nz + j] = z0 + j as f64 * dz;
    }
    for k in (0..nt - 1).rev() {
        let (t0, t1) = (surface.times()[k], surface.times()[k + 1]);
        let (head, tail) = psi.split_at_mut((k + 1) * nz);
        let next = &tail[..nz];
        let row = &mut head[k * nz..];
        for j in 0..nz {
            let x = ch.advance(exp(z0 + j as f64 * dz), t0, t1);
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::CharacteristicExitsDomain(z0 + j as f64 * dz));
            }
            let z = ln(x);
            row[j] = if z > z_hi { next[nz - 1] + (z - z_hi) } else { interp_cubic(z0, dz, next, z) };
        }
    }
    Ok(ValueSurface {
        gamma: surface.gamma(),
        times: surface.times().to_vec(),
        z_min: z0,
        dz,
        nz,
        psi,
    })
}

/// Optimal certainty equivalent: characteristics from `xs`, utilities
/// regressed to `x = 0`.
pub fn optimal_certainty_equivalent(
    surface: &RiskAversionSurface,
    params: &MarketParams,
    schedule: &ContributionSchedule,
    xs: &[f64],
) -> Result<f64> {
    let gamma = surface.gamma();
    let mut vals = Vec::with_capacity(xs.len());
    for &x0 in xs {
        vals.push(utility(characteristic_terminal_wealth(surface, params, schedule, x0)?, gamma));
    }
    certainty_equivalent(ols_intercept(xs, &vals)?, gamma)
}
