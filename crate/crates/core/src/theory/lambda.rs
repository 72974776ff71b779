use serde::{Deserialize, Serialize};

use super::{pareto_expectation, QuadSpec};
use crate::error::{contract, diagnostic, Result};
use crate::model::{ModelSpec, ProfileSpec};
use crate::quadrature::{integrate, Estimate};
use crate::torus::{cube_ball_volume, cube_sphere_area};

/// `Λ(w, z)` as a function of `r = ‖z‖`: `E φ(r^d / 𝒦(w, W))`.
///
/// With `𝒦(w, W) = w W^p`, the variable `V = W^p` is Pareto with index
/// `(β-1)/p`, and the Boolean case `p = 0` needs no expectation at all.
pub fn big_lambda_r(m: &ModelSpec, w: f64, r: f64, q: &QuadSpec) -> Result<Estimate> {
    if !(w > 0.0) {
        return Err(contract(format!("Λ(w, z) needs w > 0, got {w}")));
    }
    if r <= 0.0 {
        return Ok(Estimate::exact(m.profile.eval(0.0)));
    }
    Ok(big_lambda_r_inner(m, w, r, q, q.tol()))
}

pub(crate) fn big_lambda_r_inner(m: &ModelSpec, w: f64, r: f64, q: &QuadSpec, tol: crate::quadrature::Tolerance) -> Estimate {
    let t = r.powi(m.d as i32) / w;
    let p = m.limiting_power();
    if p == 0.0 {
        return Estimate::exact(m.profile.eval(t));
    }
    let theta = (m.beta - 1.0) / p;
    if let ProfileSpec::Indicator = m.profile {
        return Estimate::exact(if t <= 1.0 { 1.0 } else { t.powf(-theta) });
    }
    let profile = m.profile;
    pareto_expectation(theta, 0.0, |v| profile.eval(t / v), &[t], q.quad_points_per_axis, tol)
}

/// `Λ(w, z)` for `z ∈ [-1/2, 1/2]^d`.
pub fn big_lambda_wz(m: &ModelSpec, w: f64, z: &[f64], q: &QuadSpec) -> Result<Estimate> {
    if z.len() != m.d {
        return Err(contract(format!("point has {} coordinates, model has d = {}", z.len(), m.d)));
    }
    if z.iter().any(|c| !(c.abs() <= 0.5 + 1e-12)) {
        return Err(contract("Λ(w, z) needs z in [-1/2, 1/2]^d"));
    }
    let r = z.iter().map(|c| c * c).sum::<f64>().sqrt();
    big_lambda_r(m, w, r, q)?.require("Λ(w, z)")
}

/// `Λ(w) = ∫_{[-1/2,1/2]^d} Λ(w, z) dz`.
///
/// The integrand is radial, so the cube integral reduces to
/// `∫_0^{√d/2} Λ(w, r) s_d(r) dr` with `s_d` the area of the sphere of radius
/// `r` inside the cube.
pub fn big_lambda(m: &ModelSpec, w: f64, q: &QuadSpec) -> Result<Estimate> {
    if !(w > 0.0) {
        return Err(contract(format!("Λ(w) needs w > 0, got {w}")));
    }
    let d = m.d;
    let r_max = 0.5 * (d as f64).sqrt();
    if m.limiting_power() == 0.0 && matches!(m.profile, ProfileSpec::Indicator) {
        return Ok(Estimate::exact(cube_ball_volume(w.powf(1.0 / d as f64).min(r_max), d)));
    }
    if m.profile.unit_plateau() && w >= r_max.powi(d as i32) {
        return Ok(Estimate::exact(1.0));
    }
    let kink = w.powf(1.0 / d as f64);
    let pieces = q.quad_points_per_axis;
    let interior = (1..d)
        .map(|j| 0.5 * (j as f64).sqrt())
        .chain(std::iter::once(kink))
        .chain((1..pieces).map(|i| r_max * i as f64 / pieces as f64));
    let points = crate::quadrature::breakpoints(0.0, r_max, interior);
    let inner = q.inner_tol();
    let mut inner_err: f64 = 0.0;
    let mut inner_ok = true;
    let mut est = integrate(
        |r| {
            let e = big_lambda_r_inner(m, w, r, q, inner);
            inner_err = inner_err.max(e.error);
            inner_ok &= e.converged;
            e.value * cube_sphere_area(r, d)
        },
        &points,
        q.tol(),
    );
    est.error += inner_err;
    est.converged &= inner_ok;
    est.value = est.value.clamp(0.0, 1.0);
    est.require("Λ(w)")
}

/// Monotone tabulation of `Λ` on a logarithmic grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaTable {
    pub model: ModelSpec,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Largest quadrature error over the grid.
    pub max_error: f64,
    /// Weight from which `Λ ≡ 1` exactly, when the profile has a unit plateau.
    pub saturation: Option<f64>,
}

impl LambdaTable {
    pub fn w_min(&self) -> f64 {
        self.grid[0]
    }

    pub fn w_max(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// `1 - Λ(w_max)`: how far the table top is from the limit 1.
    pub fn top_gap(&self) -> f64 {
        1.0 - self.values.last().unwrap()
    }

    /// Piecewise-linear interpolation in `w`. Below the grid the segment to
    /// `Λ(0) = 0` is used; above it the last value (or 1 past saturation).
    pub fn eval(&self, w: f64) -> f64 {
        if let Some(s) = self.saturation {
            if w >= s {
                return 1.0;
            }
        }
        let g = &self.grid;
        let v = &self.values;
        if w <= g[0] {
            return (v[0] * w.max(0.0) / g[0]).max(0.0);
        }
        if w >= g[g.len() - 1] {
            return v[v.len() - 1];
        }
        let i = g.partition_point(|&x| x <= w) - 1;
        let s = (w - g[i]) / (g[i + 1] - g[i]);
        v[i] + s * (v[i + 1] - v[i])
    }

    /// `sup{y : Λ(y) ≤ t}` for the interpolated table.
    pub fn inverse_sup(&self, t: f64) -> Result<f64> {
        let v = &self.values;
        let g = &self.grid;
        if t < v[0] {
            return Err(diagnostic(format!(
                "Λ table starts at Λ({:.3e}) = {:.3e} and does not cover level {t}",
                g[0], v[0]
            )));
        }
        if t >= v[v.len() - 1] {
            return Err(diagnostic(format!(
                "Λ table ends at Λ({:.3e}) = {:.6} and does not cover level {t}; raise w_max",
                g[g.len() - 1],
                v[v.len() - 1]
            )));
        }
        let i = v.partition_point(|&x| x <= t) - 1;
        let s = (t - v[i]) / (v[i + 1] - v[i]);
        Ok(g[i] + s * (g[i + 1] - g[i]))
    }

    /// Right slope of the interpolant at `w`.
    pub(crate) fn right_slope(&self, w: f64) -> f64 {
        let g = &self.grid;
        if w >= g[g.len() - 1] {
            return 0.0;
        }
        let i = g.partition_point(|&x| x <= w).max(1) - 1;
        (self.values[i + 1] - self.values[i]) / (g[i + 1] - g[i])
    }
}

/// Pool-adjacent-violators projection onto nondecreasing sequences.
pub(crate) fn isotonic(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a <= b {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().unwrap();
            *last = ((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb);
        }
    }
    blocks.into_iter().flat_map(|(v, n)| std::iter::repeat_n(v, n)).collect()
}

/// Tabulates `Λ` on a log grid up to `w_max`.
///
/// The lower end is pushed down until `Λ(w_min) < 10^{-4}`. For profiles with
/// a unit plateau the point `(√d/2)^d`, from which `Λ ≡ 1`, is inserted so
/// interpolation is exact at the saturation kink.
pub fn build_lambda_table(m: &ModelSpec, w_max: f64, grid_size: usize, q: &QuadSpec) -> Result<LambdaTable> {
    m.validate()?;
    q.validate()?;
    if grid_size < 32 {
        return Err(contract(format!("Λ table needs at least 32 grid points, got {grid_size}")));
    }
    if !(w_max > 0.0 && w_max.is_finite()) {
        return Err(contract(format!("w_max must be positive, got {w_max}")));
    }
    let mut w_min = (w_max * 0.1).min(1e-2);
    let mut tries = 0;
    while big_lambda(m, w_min, q)?.value >= 1e-4 {
        w_min *= 0.25;
        tries += 1;
        if tries > 100 {
            return Err(diagnostic("could not find w_min with Λ(w_min) < 1e-4"));
        }
    }
    let saturation = m
        .profile
        .unit_plateau()
        .then(|| (0.5 * (m.d as f64).sqrt()).powi(m.d as i32));
    let (a, b) = (w_min.ln(), w_max.ln());
    let mut grid: Vec<f64> = (0..grid_size)
        .map(|i| (a + (b - a) * i as f64 / (grid_size - 1) as f64).exp())
        .collect();
    if let Some(s) = saturation {
        if s > w_min && s < w_max {
            grid.push(s);
            grid.sort_by(|x, y| x.total_cmp(y));
            grid.dedup();
        }
    }
    let mut raw = Vec::with_capacity(grid.len());
    let mut max_error: f64 = 0.0;
    for &w in &grid {
        let e = big_lambda(m, w, q)?;
        max_error = max_error.max(e.error);
        raw.push(e.value);
    }
    let values = isotonic(&raw).into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(LambdaTable { model: *m, grid, values, max_error, saturation })
}
