//! On-disk cache of solved risk aversion surfaces.
//!
//! File layout: the magic line `LIFESTYLE-SURFACE 1`, one line of JSON
//! header, then `n_times` little-endian f64 times followed by the
//! `n_times * nz` row-major surface values, also little-endian f64. Files are
//! named by the SHA-256 key of every input that affects the solve.

use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use lifestyle_core::hjb::{solve_rho, SolverOptions};
use lifestyle_core::{ContributionSchedule, GridSpec, MarketParams, RiskAversionSurface};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MAGIC: &str = "LIFESTYLE-SURFACE 1";

/// Environment variable naming the cache directory.
pub const CACHE_DIR_ENV: &str = "LIFESTYLE_CACHE_DIR";

/// Used when the environment variable is unset.
pub const DEFAULT_CACHE_DIR: &str = ".lifestyle-cache";

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache io: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt surface file {path}: {reason}")]
    Corrupt { path: String, reason: String },
}

/// Everything that determines a surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceInputs {
    pub params: MarketParams,
    pub schedule: ContributionSchedule,
    pub gamma: f64,
    pub grid: GridSpec,
    pub options: SolverOptions,
}

fn push_floats(out: &mut String, label: &str, xs: &[f64]) {
    out.push_str(label);
    for x in xs {
        out.push_str(&format!("{:016x},", x.to_bits()));
    }
    out.push(';');
}

/// Hex SHA-256 of the market alone.
pub fn params_hash(params: &MarketParams) -> String {
    let mut text = String::new();
    push_floats(&mut text, "r", &[params.rate_riskfree()]);
    push_floats(&mut text, "mu", params.drifts());
    push_floats(&mut text, "cov", params.covariance());
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl SurfaceInputs {
    /// Content key: bit-exact over every input, so any change misses.
    pub fn key(&self) -> String {
        let mut text = String::from("surface-v1;");
        text.push_str(&params_hash(&self.params));
        text.push(';');
        push_floats(&mut text, "T", &[self.schedule.horizon()]);
        push_floats(&mut text, "b", self.schedule.breakpoints());
        push_floats(&mut text, "y", self.schedule.rates());
        push_floats(&mut text, "gamma", &[self.gamma]);
        let g = &self.grid;
        push_floats(
            &mut text,
            "grid",
            &[g.t_max, g.z_min, g.z_max, g.dt, g.dz, g.tail_length, g.tail_dt],
        );
        text.push_str(&format!("h{};st{};sz{};", g.initial_halvings, g.store_every_t, g.store_every_z));
        let o = &self.options;
        push_floats(&mut text, "opt", &[o.robin_kappa, o.newton_tol, o.invariant_slack]);
        text.push_str(&format!("it{};hv{};", o.max_newton_iter, o.max_step_halvings));
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn solve(&self) -> lifestyle_core::Result<RiskAversionSurface> {
        solve_rho(&self.params, &self.schedule, self.gamma, &self.grid, &self.options)
    }
}

/// Grid fields recorded in the header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub t_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub dt: f64,
    pub dz: f64,
    pub tail_length: f64,
    pub tail_dt: f64,
    pub initial_halvings: u32,
    pub store_every_t: usize,
    pub store_every_z: usize,
}

impl From<&GridSpec> for GridHeader {
    fn from(g: &GridSpec) -> Self {
        Self {
            t_max: g.t_max,
            z_min: g.z_min,
            z_max: g.z_max,
            dt: g.dt,
            dz: g.dz,
            tail_length: g.tail_length,
            tail_dt: g.tail_dt,
            initial_halvings: g.initial_halvings,
            store_every_t: g.store_every_t,
            store_every_z: g.store_every_z,
        }
    }
}

/// JSON line after the magic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceHeader {
    pub key: String,
    pub params_hash: String,
    pub gamma: f64,
    pub robin_kappa: f64,
    pub grid: GridHeader,
    /// Spacing of the stored columns.
    pub dz_stored: f64,
    pub nz: usize,
    pub n_times: usize,
    pub producer: String,
}

impl SurfaceHeader {
    pub fn new(inputs: &SurfaceInputs, surface: &RiskAversionSurface) -> Self {
        Self {
            key: inputs.key(),
            params_hash: params_hash(&inputs.params),
            gamma: surface.gamma(),
            robin_kappa: inputs.options.robin_kappa,
            grid: GridHeader::from(&inputs.grid),
            dz_stored: surface.dz(),
            nz: surface.space_nodes(),
            n_times: surface.times().len(),
            producer: format!("lifestyle {}", env!("CARGO_PKG_VERSION")),
        }
    }
}

pub fn write_surface(mut w: impl Write, header: &SurfaceHeader, surface: &RiskAversionSurface) -> io::Result<()> {
    writeln!(w, "{MAGIC}")?;
    serde_json::to_writer(&mut w, header)?;
    writeln!(w)?;
    for x in surface.times().iter().chain(surface.values()) {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_surface(r: impl Read, path: &str) -> Result<(SurfaceHeader, RiskAversionSurface), CacheError> {
    let corrupt = |reason: String| CacheError::Corrupt { path: path.to_string(), reason };
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(corrupt("missing magic line".into()));
    }
    line.clear();
    r.read_line(&mut line)?;
    let header: SurfaceHeader = serde_json::from_str(line.trim_end()).map_err(|e| corrupt(e.to_string()))?;
    let count = header
        .n_times
        .checked_mul(header.nz + 1)
        .ok_or_else(|| corrupt("header sizes overflow".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(corrupt(format!("expected {} data bytes, found {}", count * 8, bytes.len())));
    }
    let mut data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let times: Vec<f64> = data.by_ref().take(header.n_times).collect();
    let values: Vec<f64> = data.collect();
    let surface = RiskAversionSurface::from_parts(header.gamma, times, header.grid.z_min, header.dz_stored, header.nz, values)
        .map_err(|e| corrupt(e.to_string()))?;
    Ok((header, surface))
}

/// Directory of surface files, read-only apart from [`SurfaceCache::store`].
#[derive(Debug, Clone)]
pub struct SurfaceCache {
    dir: PathBuf,
}

impl SurfaceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// `$LIFESTYLE_CACHE_DIR`, or `.lifestyle-cache` in the working directory.
    pub fn from_env() -> Self {
        Self::new(std::env::var_os(CACHE_DIR_ENV).map_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR), PathBuf::from))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.surface"))
    }

    pub fn contains(&self, inputs: &SurfaceInputs) -> bool {
        self.path(&inputs.key()).is_file()
    }

    /// `Ok(None)` when no file exists for these inputs.
    pub fn load(&self, inputs: &SurfaceInputs) -> Result<Option<RiskAversionSurface>, CacheError> {
        let key = inputs.key();
        let path = self.path(&key);
        let file = match fs::File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let shown = path.display().to_string();
        let (header, surface) = read_surface(file, &shown)?;
        if header.key != key {
            return Err(CacheError::Corrupt { path: shown, reason: "key in header does not match file name".into() });
        }
        Ok(Some(surface))
    }

    /// Writes through a temporary file so readers never see half a surface.
    pub fn store(&self, inputs: &SurfaceInputs, surface: &RiskAversionSurface) -> Result<PathBuf, CacheError> {
        fs::create_dir_all(&self.dir)?;
        let header = SurfaceHeader::new(inputs, surface);
        let path = self.path(&header.key);
        let tmp = self.dir.join(format!("{}.tmp{}", header.key, std::process::id()));
        {
            let mut w = io::BufWriter::new(fs::File::create(&tmp)?);
            write_surface(&mut w, &header, surface)?;
            w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(path)
    }
}

/// Cached surface if present, otherwise solves and stores it. The flag tells
/// whether the cache was hit.
pub fn solve_or_load(cache: &SurfaceCache, inputs: &SurfaceInputs) -> Result<(RiskAversionSurface, bool), crate::AppError> {
    if let Some(s) = cache.load(inputs)? {
        return Ok((s, true));
    }
    let surface = inputs.solve()?;
    cache.store(inputs, &surface)?;
    Ok((surface, false))
}
