//! Space-time grids for the finite-difference solvers.
//!
//! Space is log-wealth `z = ln x` on a uniform mesh. Time is marched backward
//! from the horizon with a fine uniform step over a short tail before `T` (the
//! solution has a boundary layer there, where the present value of remaining
//! contributions shrinks to zero) and a coarser step elsewhere.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numeric::{ceil, round};

/// Named grid resolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fidelity {
    /// Coarse grid, a few seconds per solve.
    Desk,
    /// `dt = 0.01`, `dz = 0.001` on `[-12, 6]`; about a minute per solve.
    Paper,
}

impl Fidelity {
    /// Lower-case name used in configs and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            Fidelity::Desk => "desk",
            Fidelity::Paper => "paper",
        }
    }

    /// Parses [`Fidelity::name`].
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Fidelity::Desk),
            "paper" => Some(Fidelity::Paper),
            _ => None,
        }
    }
}

/// Upper bound on the bytes a stored surface may occupy.
pub const DEFAULT_MEMORY_BUDGET: usize = 256 << 20;

/// Finite-difference grid on `[0, t_max] x [z_min, z_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Horizon `T` in years.
    pub t_max: f64,
    /// Lower log-wealth bound.
    pub z_min: f64,
    /// Upper log-wealth bound.
    pub z_max: f64,
    /// Time step away from the horizon.
    pub dt: f64,
    /// Spatial step.
    pub dz: f64,
    /// Length of the refined interval `[T - tail_length, T]`.
    pub tail_length: f64,
    /// Time step inside the refined interval.
    pub tail_dt: f64,
    /// The first refined step is split geometrically into this many extra
    /// levels, each half the next; resolves the layer at small wealth.
    pub initial_halvings: u32,
    /// Keep every n-th time level in stored surfaces.
    pub store_every_t: usize,
    /// Keep every n-th spatial node in stored surfaces.
    pub store_every_z: usize,
}

impl GridSpec {
    /// Preset grid for horizon `t_max`.
    pub fn preset(fidelity: Fidelity, t_max: f64) -> Self {
        match fidelity {
            Fidelity::Desk => Self {
                t_max,
                z_min: -12.0,
                z_max: 6.0,
                dt: 0.05,
                dz: 0.01,
                tail_length: 0.5,
                tail_dt: 0.00025,
                initial_halvings: 16,
                store_every_t: 2,
                store_every_z: 1,
            },
            Fidelity::Paper => Self {
                t_max,
                z_min: -12.0,
                z_max: 6.0,
                dt: 0.01,
                dz: 0.001,
                tail_length: 0.5,
                tail_dt: 0.00025,
                initial_halvings: 16,
                store_every_t: 5,
                store_every_z: 5,
            },
        }
    }

    /// Checks step sizes, bounds and the stored-surface memory budget.
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.t_max) {
            return Err(Error::InvalidInput(alloc::format!("horizon {} must be positive", self.t_max)));
        }
        if !positive(self.dt) || !positive(self.dz) {
            return Err(Error::InvalidInput("time and space steps must be positive".into()));
        }
        if !(self.z_min < self.z_max) || !self.z_min.is_finite() || !self.z_max.is_finite() {
            return Err(Error::InvalidInput("need z_min < z_max".into()));
        }
        if self.tail_length < 0.0 || (self.tail_length > 0.0 && !positive(self.tail_dt)) {
            return Err(Error::InvalidInput("invalid refined tail".into()));
        }
        if self.initial_halvings > 40 {
            return Err(Error::InvalidInput("at most 40 initial halvings".into()));
        }
        if self.store_every_t == 0 || self.store_every_z == 0 {
            return Err(Error::InvalidInput("storage strides must be at least 1".into()));
        }
        if self.space_nodes() < 3 {
            return Err(Error::InvalidInput("need at least three spatial nodes".into()));
        }
        let bytes = self.stored_len() * core::mem::size_of::<f64>();
        if bytes > DEFAULT_MEMORY_BUDGET {
            return Err(Error::InvalidInput(alloc::format!(
                "stored surface needs {bytes} bytes; raise the storage strides"
            )));
        }
        Ok(())
    }

    /// Number of spatial nodes including both ends.
    pub fn space_nodes(&self) -> usize {
        let n = ((self.z_max - self.z_min) / self.dz + 0.5) as usize;
        n + 1
    }

    /// Location of spatial node `j`.
    pub fn z(&self, j: usize) -> f64 {
        self.z_min + j as f64 * self.dz
    }

    /// Time-to-go levels `tau_0 = 0 < tau_1 < ... = t_max`.
    pub fn tau_levels(&self) -> Vec<f64> {
        let mut taus = Vec::new();
        taus.push(0.0);
        let tail = self.tail_length.min(self.t_max);
        if tail > 0.0 {
            let n = round(tail / self.tail_dt).max(1.0) as usize;
            let first = self.tail_dt.min(tail);
            for k in (1..=self.initial_halvings).rev() {
                taus.push(first / (1u64 << k) as f64);
            }
            for k in 1..=n {
                taus.push((k as f64 * self.tail_dt).min(tail));
            }
        }
        let start = *taus.last().unwrap_or(&0.0);
        let remaining = self.t_max - start;
        if remaining > 1e-12 {
            let n = ceil(remaining / self.dt - 1e-9).max(1.0) as usize;
            for k in 1..=n {
                taus.push((start + k as f64 * self.dt).min(self.t_max));
            }
        }
        if let Some(last) = taus.last_mut() {
            *last = self.t_max;
        }
        taus
    }

    /// Indices into [`GridSpec::tau_levels`] kept in stored surfaces: the
    /// graded levels, every n-th level of the refined tail and of the coarse
    /// part, and the horizon.
    pub fn stored_tau_indices(&self) -> Vec<usize> {
        let taus = self.tau_levels();
        let tail = self.tail_length.min(self.t_max);
        let graded = if tail > 0.0 { self.initial_halvings as usize } else { 0 };
        let mut out = Vec::new();
        let (mut fine, mut coarse) = (0usize, 0usize);
        for (k, &tau) in taus.iter().enumerate() {
            let keep = if k <= graded {
                true
            } else if tau <= tail + 1e-12 {
                fine += 1;
                fine % self.store_every_t == 0
            } else {
                coarse += 1;
                coarse % self.store_every_t == 0
            };
            if keep || k + 1 == taus.len() {
                out.push(k);
            }
        }
        out
    }

    /// Number of stored spatial nodes.
    pub fn stored_space_nodes(&self) -> usize {
        (self.space_nodes() - 1) / self.store_every_z + 1
    }

    /// Total values held by a stored surface.
    pub fn stored_len(&self) -> usize {
        self.stored_tau_indices().len() * self.stored_space_nodes()
    }

    /// Same grid with both steps halved.
    pub fn refined(&self) -> Self {
        Self {
            dt: self.dt / 2.0,
            dz: self.dz / 2.0,
            tail_dt: self.tail_dt / 2.0,
            store_every_t: self.store_every_t * 2,
            store_every_z: self.store_every_z * 2,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_levels_hit_probe_time() {
        let g = GridSpec::preset(Fidelity::Desk, 40.0);
        g.validate().unwrap();
        let taus = g.tau_levels();
        assert_eq!(taus[0], 0.0);
        assert_eq!(*taus.last().unwrap(), 40.0);
        assert!(taus.windows(2).all(|w| w[1] > w[0]));
        let probe = taus.iter().position(|&t| (t - 0.025).abs() < 1e-12).unwrap();
        assert!(g.stored_tau_indices().contains(&probe));
        assert_eq!(taus.len(), 1 + 16 + 2000 + 790);
        assert!((taus[1] - 0.00025 / 65536.0).abs() < 1e-20);
        assert_eq!(g.space_nodes(), 1801);
        assert!((g.z(1800) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn paper_preset_fits_budget() {
        let g = GridSpec::preset(Fidelity::Paper, 40.0);
        g.validate().unwrap();
        assert_eq!(g.space_nodes(), 18001);
        assert_eq!(g.stored_space_nodes(), 3601);
        let stored = g.stored_tau_indices();
        let taus = g.tau_levels();
        assert_eq!(*stored.last().unwrap(), taus.len() - 1);
        assert!(stored.iter().any(|&k| (taus[k] - 0.025).abs() < 1e-12));
        assert!(g.stored_len() * 8 < 64 << 20);
    }

    #[test]
    fn rejects_bad_steps() {
        let mut g = GridSpec::preset(Fidelity::Desk, 40.0);
        g.dt = 0.0;
        assert!(g.validate().is_err());
        let mut g = GridSpec::preset(Fidelity::Desk, 40.0);
        g.z_max = g.z_min;
        assert!(g.validate().is_err());
        let mut g = GridSpec::preset(Fidelity::Paper, 40.0);
        g.store_every_t = 1;
        g.store_every_z = 1;
        assert!(g.validate().is_err());
    }

    #[test]
    fn short_horizon_inside_tail() {
        let g = GridSpec::preset(Fidelity::Desk, 0.3);
        let taus = g.tau_levels();
        assert_eq!(*taus.last().unwrap(), 0.3);
        assert_eq!(taus.len(), 1 + 16 + 1200);
    }
}
