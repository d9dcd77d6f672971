//! Parallel drivers. Work is split with rayon and collected in input order,
//! and Monte Carlo paths are seeded by index, so results do not depend on the
//! number of threads.

use std::time::Instant;

use lifestyle_core::hjb::SolverOptions;
use lifestyle_core::sweep::{evaluate_cell, SweepGrid, SweepResult};
use lifestyle_core::welfare::{
    certainty_equivalent_pde, irr, summarize, McEstimate, McOptions, Method, PathSimulator, WelfareRow,
};
use lifestyle_core::{ContributionSchedule, GridSpec, MarketParams, RiskAversionSurface, Strategy, StrategyKind};
use rayon::prelude::*;

use crate::allocation::Scenario;
use crate::AppError;

/// Terminal wealth of paths `0..n_paths`, in path order.
pub fn terminal_wealth_par(
    strategy: &Strategy<'_>,
    params: &MarketParams,
    schedule: &ContributionSchedule,
    gamma: f64,
    x0: f64,
    opts: &McOptions,
) -> lifestyle_core::Result<Vec<f64>> {
    if opts.n_paths < 2 {
        return Err(lifestyle_core::Error::InsufficientPoints(opts.n_paths));
    }
    let sim = PathSimulator::new(strategy, params, schedule, gamma, opts.dt_sim)?;
    (0..opts.n_paths as u64)
        .into_par_iter()
        .map_init(|| sim.clone(), |s, i| s.terminal_wealth(x0, opts.seed, i))
        .collect()
}

/// Same estimate as the serial `monte_carlo_ce`, computed on the rayon pool.
pub fn monte_carlo_par(
    strategy: &Strategy<'_>,
    params: &MarketParams,
    schedule: &ContributionSchedule,
    gamma: f64,
    x0: f64,
    opts: &McOptions,
) -> lifestyle_core::Result<McEstimate> {
    let terminal = terminal_wealth_par(strategy, params, schedule, gamma, x0, opts)?;
    summarize(&terminal, gamma)
}

/// Inputs of a welfare table.
#[derive(Debug, Clone)]
pub struct WelfareJob {
    pub gammas: Vec<f64>,
    pub strategies: Vec<StrategyKind>,
    pub methods: Vec<Method>,
    pub grid: GridSpec,
    pub options: SolverOptions,
    pub mc: McOptions,
}

/// One row per `(gamma, strategy, method)` in that nesting order. `surface`
/// supplies the risk aversion surface for each gamma that needs one.
/// Every strategy shares the Monte Carlo seed, so CE differences use common
/// random numbers.
pub fn run_welfare(
    scn: &Scenario,
    job: &WelfareJob,
    surface: &(dyn Fn(f64) -> Result<RiskAversionSurface, AppError> + Sync),
) -> Result<Vec<WelfareRow>, AppError> {
    let needs_surface = job.strategies.contains(&StrategyKind::Optimal);
    let surfaces: Vec<Option<RiskAversionSurface>> = job
        .gammas
        .par_iter()
        .map(|&g| if needs_surface { surface(g).map(Some) } else { Ok(None) })
        .collect::<Result<_, _>>()?;

    let mut tasks = Vec::new();
    for (gi, &gamma) in job.gammas.iter().enumerate() {
        for &kind in &job.strategies {
            for &method in &job.methods {
                tasks.push((gi, gamma, kind, method));
            }
        }
    }
    tasks
        .into_par_iter()
        .map(|(gi, gamma, kind, method)| -> Result<WelfareRow, AppError> {
            let strategy = match kind {
                StrategyKind::Optimal => Strategy::Optimal(surfaces[gi].as_ref().expect("surface solved above")),
                other => Strategy::heuristic(other)
                    .ok_or_else(|| AppError::Usage(format!("strategy {} is not supported here", other.name())))?,
            };
            let start = Instant::now();
            let (ce, stderr) = match method {
                Method::Pde => (certainty_equivalent_pde(&strategy, &scn.params, &scn.schedule, gamma, &job.grid)?, None),
                Method::Mc => {
                    let est = monte_carlo_par(&strategy, &scn.params, &scn.schedule, gamma, 0.0, &job.mc)?;
                    (est.ce, Some(est.stderr))
                }
            };
            Ok(WelfareRow {
                gamma,
                strategy: kind,
                ce,
                irr: irr(ce, &scn.schedule)?,
                method,
                stderr,
                runtime_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// All cells of `sweep`, concurrently, in lexicographic cell order.
pub fn run_sweep_par(sweep: &SweepGrid, grid: &GridSpec, options: &SolverOptions) -> Result<SweepResult, AppError> {
    sweep.validate()?;
    grid.validate()?;
    if (grid.t_max - sweep.schedule.horizon()).abs() > 1e-9 {
        return Err(AppError::Usage("grid and sweep horizons differ".into()));
    }
    let cells = (0..sweep.len())
        .into_par_iter()
        .map(|i| {
            let c = evaluate_cell(sweep, i, grid, options);
            if let Err(e) = &c.outcome {
                log::warn!("sweep cell {i} failed: {e}");
            }
            c
        })
        .collect();
    Ok(SweepResult { cells })
}
