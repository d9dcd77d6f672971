//! Pieces shared by the finite-difference solvers: exponentially fitted
//! dissipation and interpolation on uniform meshes.

use crate::numeric::tanh;

/// Fitting factor `theta(Pe) = (Pe/2) coth(Pe/2)` of the Il'in-Allen-Southwell
/// scheme, `theta >= max(1, Pe/2)`.
pub fn fitting_factor(peclet: f64) -> f64 {
    let h = 0.5 * peclet.abs();
    if h < 1e-4 {
        1.0 + h * h / 3.0
    } else if h > 20.0 {
        h
    } else {
        h / tanh(h)
    }
}

/// Effective diffusion `D theta(|c| dz / D)` for advection speed `c`.
///
/// Stays well defined as `D -> 0`, where it tends to the upwind value
/// `|c| dz / 2`.
pub fn fitted_diffusion(speed: f64, diffusion: f64, dz: f64) -> f64 {
    let a = 0.5 * speed.abs() * dz;
    if diffusion <= 1e-300 {
        return a;
    }
    diffusion * fitting_factor(2.0 * a / diffusion)
}

/// Extra diffusion added on top of the physical one, divided by `dz`.
pub fn artificial_viscosity(speed: f64, diffusion: f64, dz: f64) -> f64 {
    let extra = fitted_diffusion(speed, diffusion, dz) - diffusion.max(0.0);
    extra.max(0.0) / dz
}

/// Position of `z` on a uniform mesh: cell index and offset in `[0, 1]`,
/// clamped to the mesh.
pub fn locate(z0: f64, dz: f64, n: usize, z: f64) -> (usize, f64) {
    let s = (z - z0) / dz;
    if !(s > 0.0) {
        return (0, 0.0);
    }
    let last = (n - 1) as f64;
    if s >= last {
        return (n - 2, 1.0);
    }
    let i = s as usize;
    (i, s - i as f64)
}

/// Linear interpolation on a uniform mesh, clamped at the ends.
pub fn interp_linear(z0: f64, dz: f64, values: &[f64], z: f64) -> f64 {
    let (i, w) = locate(z0, dz, values.len(), z);
    values[i] * (1.0 - w) + values[i + 1] * w
}

/// Cubic Lagrange interpolation on a uniform mesh (linear in the end cells),
/// clamped at the ends.
pub fn interp_cubic(z0: f64, dz: f64, values: &[f64], z: f64) -> f64 {
    let n = values.len();
    let (i, w) = locate(z0, dz, n, z);
    if i == 0 || i + 2 >= n {
        return values[i] * (1.0 - w) + values[i + 1] * w;
    }
    let (p0, p1, p2, p3) = (values[i - 1], values[i], values[i + 1], values[i + 2]);
    let c0 = -w * (w - 1.0) * (w - 2.0) / 6.0;
    let c1 = (w + 1.0) * (w - 1.0) * (w - 2.0) / 2.0;
    let c2 = -(w + 1.0) * w * (w - 2.0) / 2.0;
    let c3 = (w + 1.0) * w * (w - 1.0) / 6.0;
    c0 * p0 + c1 * p1 + c2 * p2 + c3 * p3
}
