//! TOML configuration: market, contribution schedule, solver grid, Monte
//! Carlo budget and sweep lists. Every section is optional and falls back to
//! the baseline two-asset market with forty years of unit contributions.

use std::path::Path;

use lifestyle_core::hjb::SolverOptions;
use lifestyle_core::sweep::SweepGrid;
use lifestyle_core::welfare::McOptions;
use lifestyle_core::{ContributionSchedule, Fidelity, GridSpec, MarketParams};
use serde::{Deserialize, Serialize};

/// Version understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Name of the built-in baseline market.
pub const BASELINE_PRESET: &str = "paper-baseline";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("schema_version {0} is not supported (expected {SCHEMA_VERSION})")]
    UnsupportedVersion(u32),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error("{0}")]
    Invalid(String),
}

/// Whole configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default)]
    pub market: MarketSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub monte_carlo: MonteCarloSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            market: MarketSpec::default(),
            schedule: ScheduleSpec::default(),
            solver: SolverSpec::default(),
            monte_carlo: MonteCarloSpec::default(),
            sweep: SweepSpec::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::UnsupportedVersion(cfg.schema_version));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Reads `path` if given, defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, ConfigError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Builds every core object once so errors surface at load time.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let schedule = self.schedule.build()?;
        self.market.build()?;
        self.solver.grid(schedule.horizon())?;
        self.solver.options()?;
        self.monte_carlo.options()?;
        self.sweep.build(&self.market, &schedule)?;
        Ok(())
    }
}

fn invalid(e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

/// Market either by preset name or by explicit numbers. The covariance is
/// given directly or as volatilities plus a correlation matrix.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_riskfree: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drifts: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volatilities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_names: Option<Vec<String>>,
}

impl MarketSpec {
    pub fn preset(name: &str) -> Self {
        Self { preset: Some(name.to_string()), ..Self::default() }
    }

    fn is_explicit(&self) -> bool {
        self.rate_riskfree.is_some()
            || self.drifts.is_some()
            || self.covariance.is_some()
            || self.volatilities.is_some()
            || self.correlation.is_some()
    }

    pub fn build(&self) -> Result<MarketParams, ConfigError> {
        if let Some(name) = &self.preset {
            if self.is_explicit() {
                return Err(invalid("market: give either a preset or explicit parameters, not both"));
            }
            return match name.as_str() {
                BASELINE_PRESET => Ok(MarketParams::paper_baseline()),
                _ => Err(ConfigError::UnknownPreset(name.clone())),
            };
        }
        if !self.is_explicit() {
            return Ok(MarketParams::paper_baseline());
        }
        let r = self.rate_riskfree.ok_or_else(|| invalid("market.rate_riskfree is required"))?;
        let drifts = self.drifts.clone().ok_or_else(|| invalid("market.drifts is required"))?;
        let d = drifts.len();
        let flat = |m: &[Vec<f64>], what: &str| -> Result<Vec<f64>, ConfigError> {
            if m.len() != d || m.iter().any(|row| row.len() != d) {
                return Err(invalid(format!("market.{what} must be {d} x {d}")));
            }
            Ok(m.iter().flatten().copied().collect())
        };
        let params = match (&self.covariance, &self.volatilities, &self.correlation) {
            (Some(c), None, None) => MarketParams::new(r, drifts, flat(c, "covariance")?),
            (None, Some(v), Some(c)) => {
                if v.len() != d {
                    return Err(invalid(format!("market.volatilities must have {d} entries")));
                }
                MarketParams::from_volatilities(r, drifts, v, &flat(c, "correlation")?)
            }
            _ => {
                return Err(invalid(
                    "market: give covariance, or volatilities together with correlation",
                ))
            }
        };
        let params = params.map_err(|e| invalid(format!("market: {e}")))?;
        if let Some(names) = &self.asset_names {
            if names.len() != d {
                return Err(invalid(format!("market.asset_names must have {d} entries")));
            }
        }
        Ok(params)
    }

    /// Display names, `asset0..` when not configured.
    pub fn names(&self, d: usize) -> Vec<String> {
        match (&self.asset_names, &self.preset, self.is_explicit()) {
            (Some(n), _, _) => n.clone(),
            (None, _, false) if d == 2 => vec!["bond".into(), "stock".into()],
            _ => (0..d).map(|i| format!("asset{i}")).collect(),
        }
    }
}

/// Contribution rate: constant `total / horizon`, or piecewise constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakpoints: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
}

fn default_horizon() -> f64 {
    40.0
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self { horizon: default_horizon(), total: None, breakpoints: None, rates: None }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<ContributionSchedule, ConfigError> {
        let s = match (&self.total, &self.breakpoints, &self.rates) {
            (total, None, None) => ContributionSchedule::constant(self.horizon, total.unwrap_or(1.0)),
            (None, Some(b), Some(r)) => ContributionSchedule::piecewise(self.horizon, b.clone(), r.clone()),
            _ => return Err(invalid("schedule: give total, or breakpoints together with rates")),
        };
        s.map_err(|e| invalid(format!("schedule: {e}")))
    }
}

/// Grid preset with optional overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_fidelity")]
    pub fidelity: String,
    #[serde(default = "default_kappa")]
    pub robin_kappa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_max: Option<f64>,
}

fn default_fidelity() -> String {
    Fidelity::Desk.name().into()
}

fn default_kappa() -> f64 {
    1.0
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self { fidelity: default_fidelity(), robin_kappa: default_kappa(), dt: None, dz: None, z_min: None, z_max: None }
    }
}

impl SolverSpec {
    pub fn fidelity(&self) -> Result<Fidelity, ConfigError> {
        Fidelity::from_name(&self.fidelity).ok_or_else(|| ConfigError::UnknownPreset(self.fidelity.clone()))
    }

    pub fn grid(&self, horizon: f64) -> Result<GridSpec, ConfigError> {
        let mut g = GridSpec::preset(self.fidelity()?, horizon);
        g.dt = self.dt.unwrap_or(g.dt);
        g.dz = self.dz.unwrap_or(g.dz);
        g.z_min = self.z_min.unwrap_or(g.z_min);
        g.z_max = self.z_max.unwrap_or(g.z_max);
        if g.tail_length > horizon {
            g.tail_length = horizon;
        }
        g.validate().map_err(|e| invalid(format!("solver: {e}")))?;
        Ok(g)
    }

    pub fn options(&self) -> Result<SolverOptions, ConfigError> {
        if !(self.robin_kappa >= 0.0) || !self.robin_kappa.is_finite() {
            return Err(invalid("solver.robin_kappa must be finite and nonnegative"));
        }
        Ok(SolverOptions { robin_kappa: self.robin_kappa, ..SolverOptions::default() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_dt_sim")]
    pub dt_sim: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_paths() -> usize {
    McOptions::default().n_paths
}

fn default_dt_sim() -> f64 {
    McOptions::default().dt_sim
}

fn default_seed() -> u64 {
    McOptions::default().seed
}

impl Default for MonteCarloSpec {
    fn default() -> Self {
        Self { n_paths: default_paths(), dt_sim: default_dt_sim(), seed: default_seed() }
    }
}

impl MonteCarloSpec {
    pub fn options(&self) -> Result<McOptions, ConfigError> {
        if self.n_paths < 2 {
            return Err(invalid("monte_carlo.n_paths must be at least 2"));
        }
        if !(self.dt_sim > 0.0) || !self.dt_sim.is_finite() {
            return Err(invalid("monte_carlo.dt_sim must be positive"));
        }
        Ok(McOptions { n_paths: self.n_paths, dt_sim: self.dt_sim, seed: self.seed })
    }
}

/// Sweep lists; `grid` picks the starting lists, explicit lists replace them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_sweep_grid")]
    pub grid: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_bond: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_stock: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_bond: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_stock: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
}

fn default_sweep_grid() -> String {
    "full".into()
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            grid: default_sweep_grid(),
            mu_bond: None,
            mu_stock: None,
            sigma_bond: None,
            sigma_stock: None,
            correlation: None,
            gammas: None,
        }
    }
}

impl SweepSpec {
    /// Sweep lists; the risk-free rate comes from the market section when it
    /// is explicit.
    pub fn build(&self, market: &MarketSpec, schedule: &ContributionSchedule) -> Result<SweepGrid, ConfigError> {
        let mut g = match self.grid.as_str() {
            "full" => SweepGrid::full_factorial(),
            "bond-slice" => SweepGrid::bond_slice(),
            other => return Err(ConfigError::UnknownPreset(other.into())),
        };
        let set = |dst: &mut Vec<f64>, src: &Option<Vec<f64>>| {
            if let Some(v) = src {
                dst.clone_from(v);
            }
        };
        set(&mut g.mu_bond, &self.mu_bond);
        set(&mut g.mu_stock, &self.mu_stock);
        set(&mut g.sigma_bond, &self.sigma_bond);
        set(&mut g.sigma_stock, &self.sigma_stock);
        set(&mut g.correlation, &self.correlation);
        set(&mut g.gammas, &self.gammas);
        if let Some(r) = market.rate_riskfree {
            g.rate_riskfree = r;
        }
        g.schedule = schedule.clone();
        g.validate().map_err(|e| invalid(format!("sweep: {e}")))?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_is_the_baseline() {
        let cfg = Config::from_toml("schema_version = 1\n").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.market.build().unwrap(), MarketParams::paper_baseline());
        assert_eq!(cfg.schedule.build().unwrap(), ContributionSchedule::paper_baseline());
    }

    #[test]
    fn round_trips_through_toml() {
        let market = MarketSpec {
            rate_riskfree: Some(0.01),
            drifts: Some(vec![0.02, 0.1]),
            volatilities: Some(vec![0.05, 0.25]),
            correlation: Some(vec![vec![1.0, -0.05], vec![-0.05, 1.0]]),
            ..MarketSpec::default()
        };
        let cfg = Config { market, ..Config::default() };
        let back = Config::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.market.build().unwrap(), MarketParams::paper_baseline());
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(Config::from_toml("schema_version = 2"), Err(ConfigError::UnsupportedVersion(2))));
        assert!(matches!(Config::from_toml(""), Err(ConfigError::Parse(_))));
        assert!(matches!(Config::from_toml("schema_version = 1\nfoo = 3"), Err(ConfigError::Parse(_))));
        let preset = "schema_version = 1\n[market]\npreset = \"moon\"";
        assert!(matches!(Config::from_toml(preset), Err(ConfigError::UnknownPreset(_))));
        let bad_dt = "schema_version = 1\n[solver]\ndt = 0.0";
        assert!(matches!(Config::from_toml(bad_dt), Err(ConfigError::Invalid(_))));
        let not_pd = "schema_version = 1\n[market]\nrate_riskfree = 0.01\ndrifts = [0.05, 0.05]\ncovariance = [[1.0, 2.0], [2.0, 1.0]]";
        assert!(matches!(Config::from_toml(not_pd), Err(ConfigError::Invalid(_))));
        let both = "schema_version = 1\n[market]\npreset = \"paper-baseline\"\nrate_riskfree = 0.02";
        assert!(matches!(Config::from_toml(both), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn piecewise_schedule_and_sweep_lists() {
        let text = r#"
schema_version = 1
[schedule]
horizon = 30.0
breakpoints = [0.0, 10.0]
rates = [0.02, 0.04]
[sweep]
grid = "bond-slice"
gammas = [5.0]
"#;
        let cfg = Config::from_toml(text).unwrap();
        let s = cfg.schedule.build().unwrap();
        assert!((s.total() - 1.0).abs() < 1e-12);
        let sweep = cfg.sweep.build(&cfg.market, &s).unwrap();
        assert_eq!(sweep.len(), 9);
        assert_eq!(sweep.schedule.horizon(), 30.0);
        assert_eq!(cfg.solver.grid(30.0).unwrap().t_max, 30.0);
    }
}
