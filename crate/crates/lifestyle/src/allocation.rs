//! Allocation and glide-path responses shared by the CLI and the service.

use lifestyle_core::hjb::indirect_risk_aversion;
use lifestyle_core::market::capital_ratio;
use lifestyle_core::{Allocation, ContributionSchedule, MarketParams, MeanVariance, RiskAversionSurface, StrategyKind};
use serde::{Deserialize, Serialize};

use crate::config::{MarketSpec, ScheduleSpec};
use crate::{round12, AppError};

/// Market, schedule and the prepared mean-variance program.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: MarketParams,
    pub schedule: ContributionSchedule,
    pub names: Vec<String>,
    pub mv: MeanVariance,
}

impl Scenario {
    pub fn new(market: &MarketSpec, schedule: &ScheduleSpec) -> Result<Self, AppError> {
        let params = market.build()?;
        let schedule = schedule.build()?;
        let mv = MeanVariance::new(&params)?;
        Ok(Self { names: market.names(params.dim()), params, schedule, mv })
    }

    pub fn rate(&self) -> f64 {
        self.params.rate_riskfree()
    }
}

/// Where to evaluate a strategy: a capital ratio, or a state `(t, W)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default)]
    pub wealth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResponse {
    pub strategy: String,
    pub gamma: f64,
    /// Capital ratio; absent for strategies that do not depend on it when
    /// no state was given.
    pub alpha: Option<f64>,
    pub t: Option<f64>,
    pub wealth: Option<f64>,
    pub assets: Vec<String>,
    /// Proportions of accumulated savings, one per asset.
    pub weights: Vec<f64>,
    /// Proportion in the bank account.
    pub cash: f64,
    /// Upper bound on the total risky proportion.
    pub budget: f64,
    /// `alpha * gamma`.
    pub effective_risk_aversion: Option<f64>,
    /// `R(t, W)` for the optimal strategy.
    pub indirect_risk_aversion: Option<f64>,
    /// `at_zero:<asset>` and `budget_full`.
    pub binding: Vec<String>,
}

pub fn parse_strategy(name: &str) -> Result<StrategyKind, AppError> {
    match StrategyKind::from_name(name) {
        Some(StrategyKind::Fixed) | None => Err(AppError::Usage(format!(
            "unknown strategy '{name}' (expected pi0, pi1, pi2, pi3 or optimal)"
        ))),
        Some(k) => Ok(k),
    }
}

fn binding_labels(a: &Allocation, names: &[String]) -> Vec<String> {
    let mut out: Vec<String> = a.active_set.zeros().iter().map(|&i| format!("at_zero:{}", names[i])).collect();
    if a.active_set.budget_full() {
        out.push("budget_full".into());
    }
    out
}

fn resolve_alpha(scn: &Scenario, state: &State) -> Result<Option<f64>, AppError> {
    match (state.alpha, state.t, state.wealth) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            Err(AppError::Usage("give either alpha or time and wealth, not both".into()))
        }
        (Some(a), None, None) => Ok(Some(a)),
        (None, Some(t), Some(w)) => Ok(Some(capital_ratio(t, w, &scn.schedule, scn.rate())?)),
        (None, None, None) => Ok(None),
        _ => Err(AppError::Usage("time and wealth must be given together".into())),
    }
}

/// Allocation of `strategy` at `state`; the optimal strategy needs a surface
/// for the same market, schedule and `gamma`, and a state `(t, W)`.
pub fn allocate(
    scn: &Scenario,
    strategy: StrategyKind,
    gamma: f64,
    state: &State,
    surface: Option<&RiskAversionSurface>,
) -> Result<AllocationResponse, AppError> {
    let alpha = resolve_alpha(scn, state)?;
    let need_alpha = || alpha.ok_or_else(|| AppError::Usage(format!("{} needs alpha or time and wealth", strategy.name())));
    let mut rbar = None;
    let a = match strategy {
        StrategyKind::Pi0 => scn.mv.pi0(gamma)?,
        StrategyKind::Pi1 => scn.mv.pi1(gamma)?,
        StrategyKind::Pi2 => scn.mv.pi2(need_alpha()?, gamma)?,
        StrategyKind::Pi3 => scn.mv.pi3(need_alpha()?, gamma)?,
        StrategyKind::Optimal => {
            let surface = surface.ok_or_else(|| AppError::Usage("the optimal strategy needs a solved surface".into()))?;
            let (Some(t), Some(w)) = (state.t, state.wealth) else {
                return Err(AppError::Usage("the optimal strategy needs time and wealth".into()));
            };
            let r = indirect_risk_aversion(surface, t, w)?;
            rbar = Some(round12(r));
            scn.mv.solve(1.0, r)?
        }
        StrategyKind::Fixed => return Err(AppError::Usage("fixed weights are not an allocation rule".into())),
    };
    Ok(AllocationResponse {
        strategy: strategy.name().into(),
        gamma,
        alpha: alpha.map(round12),
        t: state.t,
        wealth: state.wealth,
        assets: scn.names.clone(),
        weights: a.weights.iter().map(|&w| round12(w)).collect(),
        cash: round12(a.cash()),
        budget: round12(a.budget_bound),
        effective_risk_aversion: alpha.map(|a| round12(a * gamma)),
        indirect_risk_aversion: rbar,
        binding: binding_labels(&a, &scn.names),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Below this capital ratio the budget binds.
    pub budget: f64,
    /// Below this capital ratio only one risky asset is held.
    pub full_stock: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlidePathResponse {
    pub gamma: f64,
    pub strategy: String,
    pub thresholds: Thresholds,
    pub points: Vec<AllocationResponse>,
}

/// `alpha = 0, 0.01, .., 1`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=100).map(|k| k as f64 / 100.0).collect()
}

pub fn glide_path(
    scn: &Scenario,
    strategy: StrategyKind,
    gamma: f64,
    states: &[State],
    surface: Option<&RiskAversionSurface>,
) -> Result<GlidePathResponse, AppError> {
    if states.is_empty() {
        return Err(AppError::Usage("the grid must not be empty".into()));
    }
    let th = scn.mv.glide_path_thresholds(gamma)?;
    let points = states
        .iter()
        .map(|s| allocate(scn, strategy, gamma, s, surface))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GlidePathResponse {
        gamma,
        strategy: strategy.name().into(),
        thresholds: Thresholds { budget: round12(th.budget), full_stock: round12(th.full_stock) },
        points,
    })
}

/// Checks that a grid is sorted ascending.
pub fn check_sorted(xs: &[f64], what: &str) -> Result<(), AppError> {
    if xs.is_empty() {
        return Err(AppError::Usage(format!("{what} must not be empty")));
    }
    if xs.iter().any(|x| !x.is_finite()) || xs.windows(2).any(|w| w[1] < w[0]) {
        return Err(AppError::Usage(format!("{what} must be finite and sorted ascending")));
    }
    Ok(())
}
