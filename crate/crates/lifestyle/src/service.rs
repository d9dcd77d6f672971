//! HTTP/JSON service. Heuristic endpoints compute live; the optimal strategy
//! is only served from a surface already in the cache.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State as AxumState;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lifestyle_core::welfare::{Method, WelfareRow};
use lifestyle_core::{RiskAversionSurface, StrategyKind};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::allocation::{self, check_sorted, default_alpha_grid, parse_strategy, Scenario, State};
use crate::cache::{SurfaceCache, SurfaceInputs};
use crate::config::{Config, MarketSpec, ScheduleSpec, BASELINE_PRESET};
use crate::runner::{run_welfare, WelfareJob};
use crate::{is_solver_failure, round12, AppError, ConfigError};

/// Largest Monte Carlo budget a single request may ask for.
pub const MAX_REQUEST_PATHS: usize = 2_000_000;

/// Read-only state shared by all requests.
#[derive(Debug, Clone)]
pub struct AppState {
    pub config: Config,
    pub cache: SurfaceCache,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/allocate", post(allocate))
        .route("/api/glidepath", post(glidepath))
        .route("/api/compare", post(compare))
        .fallback(not_found)
        .with_state(state)
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    correlation_id: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), correlation_id: None }
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        let id = uuid::Uuid::new_v4().to_string();
        log::error!("internal error [{id}]: {message}");
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: "internal error; quote the correlation id when reporting it".into(),
            correlation_id: Some(id),
        }
    }
}

impl From<AppError> for ApiError {
    fn from(e: AppError) -> Self {
        match e {
            AppError::Config(ConfigError::UnknownPreset(name)) => {
                ApiError::new(StatusCode::NOT_FOUND, "unknown_preset", format!("unknown preset '{name}'"))
            }
            AppError::Config(e) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()),
            AppError::Usage(m) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", m),
            AppError::Core(e) if is_solver_failure(&e) => ApiError::internal(e),
            AppError::Core(e) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()),
            other => ApiError::internal(other),
        }
    }
}

impl From<ConfigError> for ApiError {
    fn from(e: ConfigError) -> Self {
        AppError::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut err = json!({
            "status": self.status.as_u16(),
            "code": self.code,
            "message": self.message,
        });
        if let Some(id) = self.correlation_id {
            err["correlation_id"] = json!(id);
        }
        (self.status, Json(json!({ "error": err }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

/// Fields every POST body shares.
#[derive(Debug, Clone)]
struct Setting {
    gamma: f64,
    preset: Option<String>,
    market: Option<MarketSpec>,
    schedule: Option<ScheduleSpec>,
    fidelity: Option<String>,
}

impl Setting {
    fn scenario(&self, cfg: &Config) -> Result<Scenario, AppError> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(AppError::Usage(format!("gamma {} must be positive", self.gamma)));
        }
        let market = match (&self.preset, &self.market) {
            (Some(_), Some(_)) => return Err(AppError::Usage("give preset or market, not both".into())),
            (Some(name), None) if name == BASELINE_PRESET => MarketSpec::preset(name),
            (Some(name), None) => return Err(ConfigError::UnknownPreset(name.clone()).into()),
            (None, Some(m)) => m.clone(),
            (None, None) => cfg.market.clone(),
        };
        Scenario::new(&market, self.schedule.as_ref().unwrap_or(&cfg.schedule))
    }

    fn surface_inputs(&self, scn: &Scenario, cfg: &Config) -> Result<SurfaceInputs, AppError> {
        let mut solver = cfg.solver.clone();
        if let Some(f) = &self.fidelity {
            solver.fidelity = f.clone();
        }
        Ok(SurfaceInputs {
            params: scn.params.clone(),
            schedule: scn.schedule.clone(),
            gamma: self.gamma,
            grid: solver.grid(scn.schedule.horizon())?,
            options: solver.options()?,
        })
    }

    /// Cached surface, or 409 telling the caller how to produce it.
    fn cached_surface(&self, scn: &Scenario, st: &AppState) -> Result<RiskAversionSurface, ApiError> {
        let inputs = self.surface_inputs(scn, &st.config)?;
        match st.cache.load(&inputs).map_err(ApiError::internal)? {
            Some(s) => Ok(s),
            None => Err(ApiError::new(
                StatusCode::CONFLICT,
                "surface_missing",
                format!(
                    "no cached surface for gamma {} with these inputs (key {}); run `lifestyle solve-hjb --gamma {} --fidelity {}` with the same config and LIFESTYLE_CACHE_DIR first",
                    self.gamma,
                    inputs.key(),
                    self.gamma,
                    self.fidelity.as_deref().unwrap_or(&st.config.solver.fidelity),
                ),
            )),
        }
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

fn default_strategy() -> String {
    "pi3".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AllocateRequest {
    gamma: f64,
    #[serde(default = "default_strategy")]
    strategy: String,
    #[serde(default)]
    alpha: Option<f64>,
    #[serde(default)]
    t: Option<f64>,
    #[serde(default)]
    wealth: Option<f64>,
    #[serde(default)]
    preset: Option<String>,
    #[serde(default)]
    market: Option<MarketSpec>,
    #[serde(default)]
    schedule: Option<ScheduleSpec>,
    #[serde(default)]
    fidelity: Option<String>,
}

async fn allocate(AxumState(st): AxumState<Arc<AppState>>, body: Bytes) -> ApiResult<allocation::AllocationResponse> {
    let req: AllocateRequest = parse(&body)?;
    let setting = Setting {
        gamma: req.gamma,
        preset: req.preset,
        market: req.market,
        schedule: req.schedule,
        fidelity: req.fidelity,
    };
    let state = State { alpha: req.alpha, t: req.t, wealth: req.wealth };
    let strategy = parse_strategy(&req.strategy)?;
    blocking(move || {
        let scn = setting.scenario(&st.config)?;
        let surface = match strategy {
            StrategyKind::Optimal => Some(setting.cached_surface(&scn, &st)?),
            _ => None,
        };
        Ok(Json(allocation::allocate(&scn, strategy, setting.gamma, &state, surface.as_ref())?))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GlidePathRequest {
    gamma: f64,
    #[serde(default = "default_strategy")]
    strategy: String,
    #[serde(default)]
    alphas: Option<Vec<f64>>,
    #[serde(default)]
    states: Option<Vec<TimeWealth>>,
    #[serde(default)]
    preset: Option<String>,
    #[serde(default)]
    market: Option<MarketSpec>,
    #[serde(default)]
    schedule: Option<ScheduleSpec>,
    #[serde(default)]
    fidelity: Option<String>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeWealth {
    t: f64,
    wealth: f64,
}

async fn glidepath(AxumState(st): AxumState<Arc<AppState>>, body: Bytes) -> ApiResult<allocation::GlidePathResponse> {
    let req: GlidePathRequest = parse(&body)?;
    let strategy = parse_strategy(&req.strategy)?;
    let states: Vec<State> = match (&req.alphas, &req.states) {
        (Some(_), Some(_)) => return Err(AppError::Usage("give alphas or states, not both".into()).into()),
        (Some(a), None) => {
            check_sorted(a, "alphas")?;
            a.iter().map(|&a| State { alpha: Some(a), ..State::default() }).collect()
        }
        (None, Some(s)) => {
            if s.is_empty() {
                return Err(AppError::Usage("states must not be empty".into()).into());
            }
            let keys: Vec<f64> = s.iter().map(|p| p.t).collect();
            check_sorted(&keys, "state times")?;
            s.iter().map(|p| State { alpha: None, t: Some(p.t), wealth: Some(p.wealth) }).collect()
        }
        (None, None) => default_alpha_grid()
            .into_iter()
            .map(|a| State { alpha: Some(a), ..State::default() })
            .collect(),
    };
    let setting = Setting {
        gamma: req.gamma,
        preset: req.preset,
        market: req.market,
        schedule: req.schedule,
        fidelity: req.fidelity,
    };
    blocking(move || {
        let scn = setting.scenario(&st.config)?;
        let surface = match strategy {
            StrategyKind::Optimal => Some(setting.cached_surface(&scn, &st)?),
            _ => None,
        };
        Ok(Json(allocation::glide_path(&scn, strategy, setting.gamma, &states, surface.as_ref())?))
    })
    .await
}

fn default_compare_strategies() -> Vec<String> {
    StrategyKind::HEURISTICS.iter().map(|k| k.name().to_string()).collect()
}

fn default_method() -> String {
    "pde".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareRequest {
    gamma: f64,
    #[serde(default = "default_compare_strategies")]
    strategies: Vec<String>,
    #[serde(default = "default_method")]
    method: String,
    #[serde(default)]
    n_paths: Option<usize>,
    #[serde(default)]
    dt_sim: Option<f64>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    preset: Option<String>,
    #[serde(default)]
    market: Option<MarketSpec>,
    #[serde(default)]
    schedule: Option<ScheduleSpec>,
    #[serde(default)]
    fidelity: Option<String>,
}

/// Welfare row without timing, so identical requests give identical bodies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub strategy: String,
    pub method: String,
    pub ce: f64,
    pub irr: f64,
    pub stderr: Option<f64>,
}

impl From<&WelfareRow> for CompareRow {
    fn from(r: &WelfareRow) -> Self {
        Self {
            strategy: r.strategy.name().into(),
            method: r.method.name().into(),
            ce: round12(r.ce),
            irr: round12(r.irr),
            stderr: r.stderr.map(round12),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareResponse {
    pub gamma: f64,
    pub rows: Vec<CompareRow>,
}

pub fn parse_methods(name: &str) -> Result<Vec<Method>, AppError> {
    match name {
        "pde" => Ok(vec![Method::Pde]),
        "mc" => Ok(vec![Method::Mc]),
        "both" => Ok(vec![Method::Pde, Method::Mc]),
        other => Err(AppError::Usage(format!("unknown method '{other}' (expected pde, mc or both)"))),
    }
}

async fn compare(AxumState(st): AxumState<Arc<AppState>>, body: Bytes) -> ApiResult<CompareResponse> {
    let req: CompareRequest = parse(&body)?;
    if req.strategies.is_empty() {
        return Err(AppError::Usage("strategies must not be empty".into()).into());
    }
    let strategies = req.strategies.iter().map(|s| parse_strategy(s)).collect::<Result<Vec<_>, _>>()?;
    let methods = parse_methods(&req.method)?;
    let mut mc = st.config.monte_carlo.clone();
    mc.n_paths = req.n_paths.unwrap_or(mc.n_paths);
    mc.dt_sim = req.dt_sim.unwrap_or(mc.dt_sim);
    mc.seed = req.seed.unwrap_or(mc.seed);
    if mc.n_paths > MAX_REQUEST_PATHS {
        return Err(AppError::Usage(format!("n_paths is limited to {MAX_REQUEST_PATHS}")).into());
    }
    let mc = mc.options()?;
    let setting = Setting {
        gamma: req.gamma,
        preset: req.preset,
        market: req.market,
        schedule: req.schedule,
        fidelity: req.fidelity,
    };
    blocking(move || {
        let scn = setting.scenario(&st.config)?;
        let inputs = setting.surface_inputs(&scn, &st.config)?;
        let surface = match strategies.contains(&StrategyKind::Optimal) {
            true => Some(setting.cached_surface(&scn, &st)?),
            false => None,
        };
        let job = WelfareJob {
            gammas: vec![setting.gamma],
            strategies,
            methods,
            grid: inputs.grid,
            options: inputs.options,
            mc,
        };
        let rows = run_welfare(&scn, &job, &|_| {
            surface.clone().ok_or_else(|| AppError::Usage("surface unavailable".into()))
        })?;
        Ok(Json(CompareResponse { gamma: setting.gamma, rows: rows.iter().map(CompareRow::from).collect() }))
    })
    .await
}
