//! Command line front end.

use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lifestyle_core::hjb::optimal_policy;
use lifestyle_core::sweep::aggregate;
use lifestyle_core::StrategyKind;
use sha2::{Digest, Sha256};

use crate::allocation::{self, parse_strategy, AllocationResponse, Scenario, State};
use crate::cache::{solve_or_load, SurfaceCache, SurfaceInputs};
use crate::config::Config;
use crate::report::{self, Manifest};
use crate::runner::{run_sweep_par, run_welfare, WelfareJob};
use crate::service::{self, parse_methods, AppState};
use crate::AppError;

#[derive(Debug, Parser)]
#[command(name = "lifestyle", version, about = "Optimal and near-optimal stochastic lifestyling for pension savings")]
pub struct Cli {
    /// TOML configuration file; the baseline market is used when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Allocation of one strategy at a capital ratio or a (time, wealth) state.
    Allocate(AllocateArgs),
    /// Solves the risk aversion surface, caches it and prints policy probes.
    SolveHjb(SolveArgs),
    /// Certainty equivalents and internal rates of return as CSV.
    Welfare(WelfareArgs),
    /// Robustness sweep over market parameters.
    Sweep(SweepArgs),
    /// HTTP/JSON service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

/// Grid overrides shared by the solving commands.
#[derive(Debug, Clone, Default, Args)]
pub struct GridArgs {
    /// Grid preset: desk or paper.
    #[arg(long)]
    pub fidelity: Option<String>,
    /// Time step away from the horizon.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Log-wealth step.
    #[arg(long)]
    pub dz: Option<f64>,
    /// Coefficient of the Robin condition at the lower wealth boundary.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Neither read nor write the surface cache.
    #[arg(long)]
    pub no_cache: bool,
}

impl GridArgs {
    fn apply(&self, cfg: &mut Config) -> Result<(), AppError> {
        if let Some(f) = &self.fidelity {
            cfg.solver.fidelity = f.clone();
        }
        cfg.solver.dt = self.dt.or(cfg.solver.dt);
        cfg.solver.dz = self.dz.or(cfg.solver.dz);
        cfg.solver.robin_kappa = self.kappa.unwrap_or(cfg.solver.robin_kappa);
        cfg.validate()?;
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    #[arg(long, default_value = "pi3")]
    pub strategy: String,
    #[arg(long)]
    pub gamma: f64,
    /// Capital ratio W / (W + PV).
    #[arg(long, conflicts_with_all = ["time", "wealth"])]
    pub alpha: Option<f64>,
    #[arg(long, requires = "wealth")]
    pub time: Option<f64>,
    #[arg(long, requires = "time")]
    pub wealth: Option<f64>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub gamma: f64,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct WelfareArgs {
    /// Comma-separated risk aversions.
    #[arg(long, value_delimiter = ',', default_value = "2,5,8")]
    pub gamma: Vec<f64>,
    /// Comma-separated strategies.
    #[arg(long, value_delimiter = ',', default_value = "pi0,pi1,pi2,pi3,optimal")]
    pub strategies: Vec<String>,
    /// pde, mc or both.
    #[arg(long, default_value = "pde")]
    pub method: String,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub dt_sim: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// full or bond-slice.
    #[arg(long = "grid")]
    pub sweep_grid: Option<String>,
    /// Comma-separated risk aversions, replacing the configured list.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    /// Directory for cells.csv, aggregate.csv and manifest.json.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main() -> u8 {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli, &mut io::stdout().lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), AppError> {
    let mut cfg = Config::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Allocate(a) => cmd_allocate(&mut cfg, &a, out),
        Command::SolveHjb(a) => cmd_solve(&mut cfg, &a, out),
        Command::Welfare(a) => cmd_welfare(&mut cfg, &a, out),
        Command::Sweep(a) => cmd_sweep(&mut cfg, &a, cli.config.as_deref(), out),
        Command::Serve(a) => cmd_serve(cfg, &a),
    }
}

fn surface_inputs(cfg: &Config, scn: &Scenario, gamma: f64) -> Result<SurfaceInputs, AppError> {
    Ok(SurfaceInputs {
        params: scn.params.clone(),
        schedule: scn.schedule.clone(),
        gamma,
        grid: cfg.solver.grid(scn.schedule.horizon())?,
        options: cfg.solver.options()?,
    })
}

fn surface_for(
    cfg: &Config,
    scn: &Scenario,
    gamma: f64,
    no_cache: bool,
) -> Result<lifestyle_core::RiskAversionSurface, AppError> {
    let inputs = surface_inputs(cfg, scn, gamma)?;
    if no_cache {
        return Ok(inputs.solve()?);
    }
    let cache = SurfaceCache::from_env();
    let (s, hit) = solve_or_load(&cache, &inputs)?;
    log::info!("surface for gamma {gamma}: {}", if hit { "cache hit" } else { "solved and cached" });
    Ok(s)
}

fn print_allocation(r: &AllocationResponse, out: &mut dyn Write) -> io::Result<()> {
    writeln!(out, "{:<22}{}", "strategy", r.strategy)?;
    writeln!(out, "{:<22}{}", "gamma", r.gamma)?;
    if let Some(a) = r.alpha {
        writeln!(out, "{:<22}{a:.4}", "alpha")?;
    }
    for (name, w) in r.assets.iter().zip(&r.weights) {
        writeln!(out, "{name:<22}{w:.3}")?;
    }
    writeln!(out, "{:<22}{:.3}", "cash", r.cash)?;
    if let Some(e) = r.effective_risk_aversion {
        writeln!(out, "{:<22}{e:.4}", "alpha*gamma")?;
    }
    if let Some(e) = r.indirect_risk_aversion {
        writeln!(out, "{:<22}{e:.4}", "R(t,W)")?;
    }
    let binding = if r.binding.is_empty() { "none".to_string() } else { r.binding.join(" ") };
    writeln!(out, "{:<22}{binding}", "binding")
}

fn check_gamma(gamma: f64) -> Result<(), AppError> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(AppError::Usage(format!("gamma {gamma} must be positive")));
    }
    Ok(())
}

fn cmd_allocate(cfg: &mut Config, a: &AllocateArgs, out: &mut dyn Write) -> Result<(), AppError> {
    a.grid.apply(cfg)?;
    check_gamma(a.gamma)?;
    let strategy = parse_strategy(&a.strategy)?;
    let scn = Scenario::new(&cfg.market, &cfg.schedule)?;
    let surface = match strategy {
        StrategyKind::Optimal => Some(surface_for(cfg, &scn, a.gamma, a.grid.no_cache)?),
        _ => None,
    };
    let state = State { alpha: a.alpha, t: a.time, wealth: a.wealth };
    let r = allocation::allocate(&scn, strategy, a.gamma, &state, surface.as_ref())?;
    match a.format {
        Format::Table => print_allocation(&r, out)?,
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&r).expect("serializable"))?,
    }
    Ok(())
}

/// Probe wealth levels of the policy table.
pub const PROBE_WEALTH: [f64; 10] = [1e-5, 0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0, 2.0, 20.0];

/// `0, T/4, T/2, 3T/4` and one step of 0.025 before the horizon.
pub fn probe_times(horizon: f64) -> [f64; 5] {
    [0.0, 0.25 * horizon, 0.5 * horizon, 0.75 * horizon, horizon - 0.025]
}

fn cmd_solve(cfg: &mut Config, a: &SolveArgs, out: &mut dyn Write) -> Result<(), AppError> {
    a.grid.apply(cfg)?;
    check_gamma(a.gamma)?;
    let scn = Scenario::new(&cfg.market, &cfg.schedule)?;
    let inputs = surface_inputs(cfg, &scn, a.gamma)?;
    let start = Instant::now();
    let (surface, location) = if a.grid.no_cache {
        (inputs.solve()?, None)
    } else {
        let cache = SurfaceCache::from_env();
        let (s, _) = solve_or_load(&cache, &inputs)?;
        (s, Some(cache.path(&inputs.key())))
    };
    let elapsed = start.elapsed().as_secs_f64();
    let times = probe_times(scn.schedule.horizon());
    let mut rows = Vec::new();
    for &w in &PROBE_WEALTH {
        let mut row = Vec::new();
        for &t in &times {
            row.push(optimal_policy(&surface, &scn.mv, t, w)?.weights);
        }
        rows.push(row);
    }
    match a.format {
        Format::Json => {
            let body = serde_json::json!({
                "gamma": a.gamma,
                "key": inputs.key(),
                "cache_file": location.as_ref().map(|p| p.display().to_string()),
                "times": times,
                "wealth": PROBE_WEALTH,
                "assets": scn.names,
                "weights": rows.iter().map(|r| r.iter().map(|w| w.iter().map(|&x| crate::round12(x)).collect::<Vec<_>>()).collect::<Vec<_>>()).collect::<Vec<_>>(),
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&body).expect("serializable"))?;
        }
        Format::Table => {
            writeln!(out, "optimal policy, gamma = {} ({})", a.gamma, scn.names.join(" / "))?;
            write!(out, "{:>9}", "W \\ t")?;
            for t in times {
                write!(out, "{t:>16}")?;
            }
            writeln!(out)?;
            for (w, row) in PROBE_WEALTH.iter().zip(&rows) {
                write!(out, "{w:>9}")?;
                for weights in row {
                    let cell: Vec<String> = weights.iter().map(|x| format!("{x:.3}")).collect();
                    write!(out, "{:>16}", format!("({})", cell.join(", ")))?;
                }
                writeln!(out)?;
            }
            let (lo, hi) = surface.range();
            writeln!(out, "rho range [{lo:.6}, {hi:.6}], {} stored times, {elapsed:.1} s", surface.times().len())?;
            match location {
                Some(p) => writeln!(out, "surface cached at {}", p.display())?,
                None => writeln!(out, "surface not cached")?,
            }
        }
    }
    Ok(())
}

fn cmd_welfare(cfg: &mut Config, a: &WelfareArgs, out: &mut dyn Write) -> Result<(), AppError> {
    a.grid.apply(cfg)?;
    for &g in &a.gamma {
        check_gamma(g)?;
    }
    let strategies = a.strategies.iter().map(|s| parse_strategy(s)).collect::<Result<Vec<_>, _>>()?;
    let mut mc = cfg.monte_carlo.clone();
    mc.n_paths = a.paths.unwrap_or(mc.n_paths);
    mc.dt_sim = a.dt_sim.unwrap_or(mc.dt_sim);
    mc.seed = a.seed.unwrap_or(mc.seed);
    let scn = Scenario::new(&cfg.market, &cfg.schedule)?;
    let job = WelfareJob {
        gammas: a.gamma.clone(),
        strategies,
        methods: parse_methods(&a.method)?,
        grid: cfg.solver.grid(scn.schedule.horizon())?,
        options: cfg.solver.options()?,
        mc: mc.options()?,
    };
    let cfg_ref = &*cfg;
    let rows = run_welfare(&scn, &job, &|g| surface_for(cfg_ref, &scn, g, a.grid.no_cache))?;
    match &a.out {
        Some(path) => report::write_welfare_csv(fs::File::create(path)?, &rows)?,
        None => report::write_welfare_csv(out, &rows)?,
    }
    Ok(())
}

fn cmd_sweep(cfg: &mut Config, a: &SweepArgs, config_path: Option<&Path>, out: &mut dyn Write) -> Result<(), AppError> {
    if let Some(name) = &a.sweep_grid {
        cfg.sweep.grid = name.clone();
    }
    if let Some(g) = &a.gammas {
        cfg.sweep.gammas = Some(g.clone());
    }
    a.grid.apply(cfg)?;
    let schedule = cfg.schedule.build()?;
    let sweep = cfg.sweep.build(&cfg.market, &schedule)?;
    let grid = cfg.solver.grid(schedule.horizon())?;
    let options = cfg.solver.options()?;
    let result = match a.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| AppError::Usage(e.to_string()))?
            .install(|| run_sweep_par(&sweep, &grid, &options))?,
        None => run_sweep_par(&sweep, &grid, &options)?,
    };
    let summary = aggregate(&result)?;
    fs::create_dir_all(&a.out_dir)?;
    report::write_cells_csv(fs::File::create(a.out_dir.join("cells.csv"))?, &sweep, &result)?;
    report::write_aggregate_csv(fs::File::create(a.out_dir.join("aggregate.csv"))?, &summary)?;
    let config_text = match config_path {
        Some(p) => fs::read(p)?,
        None => Vec::new(),
    };
    let manifest = Manifest {
        producer: format!("lifestyle {}", env!("CARGO_PKG_VERSION")),
        config_sha256: hex::encode(Sha256::digest([config_text, cfg.to_toml().into_bytes()].concat())),
        fidelity: cfg.solver.fidelity.clone(),
        sweep_grid: cfg.sweep.grid.clone(),
        cells: result.cells.len(),
        failed_cells: result.cells.iter().enumerate().filter(|(_, c)| c.outcome.is_err()).map(|(i, _)| i).collect(),
        dominance_violations: report::dominance_violations(&result, 1e-3),
        hardest_cell: report::hardest_cell(&sweep, &result),
    };
    report::write_manifest(fs::File::create(a.out_dir.join("manifest.json"))?, &manifest)?;
    writeln!(out, "{:>6} {:>8} {:>10} {:>10}", "gamma", "strategy", "avg gap %", "max gap %")?;
    for s in &summary {
        for (k, kind) in StrategyKind::HEURISTICS.iter().enumerate() {
            writeln!(out, "{:>6} {:>8} {:>10.3} {:>10.3}", s.gamma, kind.name(), 100.0 * s.avg[k], 100.0 * s.max[k])?;
        }
    }
    if !manifest.failed_cells.is_empty() {
        writeln!(out, "failed cells (excluded): {:?}", manifest.failed_cells)?;
    }
    writeln!(out, "wrote {}", a.out_dir.display())?;
    Ok(())
}

fn cmd_serve(cfg: Config, a: &ServeArgs) -> Result<(), AppError> {
    let state = Arc::new(AppState { config: cfg, cache: SurfaceCache::from_env() });
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(service::serve(a.bind, state))?;
    Ok(())
}
