//! Torus metric, cell grid and cube/ball volume helpers.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::quadrature::{breakpoints, integrate, Tolerance};

/// The cubic torus `[0, L)^d` of volume `n = L^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusSpec {
    pub d: usize,
    pub volume: f64,
    pub side: f64,
}

impl TorusSpec {
    pub fn new(d: usize, volume: f64) -> Result<Self> {
        if d == 0 {
            return Err(contract("torus dimension must be at least 1"));
        }
        if !(volume.is_finite() && volume > 0.0) {
            return Err(contract(format!("torus volume must be positive, got {volume}")));
        }
        let side = volume.powf(1.0 / d as f64);
        Ok(Self { d, volume, side })
    }

    /// Largest possible torus distance, `sqrt(d) L / 2`.
    pub fn diameter(&self) -> f64 {
        (self.d as f64).sqrt() * self.side / 2.0
    }

    /// Brings a point into canonical `[0, L)^d` form.
    pub fn wrap(&self, coords: &[f64]) -> Result<TorusPoint> {
        if coords.len() != self.d {
            return Err(contract(format!(
                "point has {} coordinates, torus has dimension {}",
                coords.len(),
                self.d
            )));
        }
        Ok(TorusPoint {
            coords: coords.iter().map(|&c| wrap_coord(c, self.side)).collect(),
        })
    }
}

#[inline]
pub(crate) fn wrap_coord(c: f64, side: f64) -> f64 {
    let w = c.rem_euclid(side);
    // rem_euclid can round up to `side` for tiny negative inputs.
    if w >= side {
        0.0
    } else {
        w
    }
}

/// A point of the torus in canonical coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub coords: Vec<f64>,
}

impl TorusPoint {
    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Torus distance between two points.
pub fn torus_distance(x: &TorusPoint, y: &TorusPoint, spec: &TorusSpec) -> Result<f64> {
    if x.dim() != spec.d || y.dim() != spec.d {
        return Err(contract(format!(
            "dimension mismatch: points have {} and {} coordinates, torus has {}",
            x.dim(),
            y.dim(),
            spec.d
        )));
    }
    Ok(distance_sq(&x.coords, &y.coords, spec.side).sqrt())
}

/// Squared torus distance on raw coordinate slices of equal length.
#[inline(always)]
pub(crate) fn distance_sq(x: &[f64], y: &[f64], side: f64) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        let mut delta = (a - b).abs();
        if delta > side - delta {
            delta = side - delta;
        }
        acc += delta * delta;
    }
    acc
}

/// Uniform bucket grid over the torus.
///
/// Buckets are stored in compressed form: `entries[start[c]..start[c + 1]]`
/// lists the vertex indices in cell `c`, where cells are numbered with the
/// first axis varying fastest.
#[derive(Debug, Clone)]
pub struct CellGrid {
    pub cell_side: f64,
    pub cells_per_axis: usize,
    d: usize,
    side: f64,
    start: Vec<usize>,
    entries: Vec<u32>,
}

/// Buckets `coords` (flat, `d` values per point) into a uniform grid.
pub fn build_cell_grid(coords: &[f64], spec: &TorusSpec, target_cell_side: f64) -> Result<CellGrid> {
    if !(target_cell_side > 0.0 && target_cell_side <= spec.side * (1.0 + 1e-12)) {
        return Err(contract(format!(
            "target cell side {target_cell_side} outside (0, {}]",
            spec.side
        )));
    }
    if coords.len() % spec.d != 0 {
        return Err(contract("coordinate buffer length is not a multiple of d"));
    }
    let m = ((spec.side / target_cell_side).floor() as usize).max(1);
    let cell_side = spec.side / m as f64;
    let n_cells = m
        .checked_pow(spec.d as u32)
        .ok_or_else(|| contract("cell grid too large"))?;
    let n_points = coords.len() / spec.d;
    let mut cell_of = Vec::with_capacity(n_points);
    let mut start = vec![0usize; n_cells + 1];
    for p in coords.chunks_exact(spec.d) {
        let mut c = 0usize;
        for axis in (0..spec.d).rev() {
            let k = ((p[axis] / cell_side) as usize).min(m - 1);
            c = c * m + k;
        }
        cell_of.push(c);
        start[c + 1] += 1;
    }
    for c in 0..n_cells {
        start[c + 1] += start[c];
    }
    let mut fill = start.clone();
    let mut entries = vec![0u32; n_points];
    for (i, &c) in cell_of.iter().enumerate() {
        entries[fill[c]] = i as u32;
        fill[c] += 1;
    }
    Ok(CellGrid {
        cell_side,
        cells_per_axis: m,
        d: spec.d,
        side: spec.side,
        start,
        entries,
    })
}

impl CellGrid {
    pub fn n_cells(&self) -> usize {
        self.start.len() - 1
    }

    pub fn bucket(&self, cell: usize) -> &[u32] {
        &self.entries[self.start[cell]..self.start[cell + 1]]
    }

    fn cell_coords(&self, p: &[f64]) -> Vec<usize> {
        p.iter()
            .map(|&x| ((x / self.cell_side) as usize).min(self.cells_per_axis - 1))
            .collect()
    }

    /// Calls `visit` once for every bucket that may intersect the ball of
    /// radius `radius` around `center`. Each bucket is visited at most once.
    pub fn for_each_bucket_near<F: FnMut(&[u32])>(&self, center: &[f64], radius: f64, mut visit: F) {
        let m = self.cells_per_axis as isize;
        let reach = (radius / self.cell_side).floor() as isize + 1;
        if self.d == 1 {
            if 2 * reach + 1 >= m {
                for c in 0..self.cells_per_axis {
                    visit(self.bucket(c));
                }
            } else {
                let h = ((center[0] / self.cell_side) as isize).min(m - 1);
                for o in -reach..=reach {
                    visit(self.bucket((h + o).rem_euclid(m) as usize));
                }
            }
            return;
        }
        let home = self.cell_coords(center);
        // Per-axis list of distinct cell indices to scan.
        let axes: Vec<Vec<usize>> = home
            .iter()
            .map(|&h| {
                if 2 * reach + 1 >= m {
                    (0..self.cells_per_axis).collect()
                } else {
                    (-reach..=reach)
                        .map(|o| (h as isize + o).rem_euclid(m) as usize)
                        .collect()
                }
            })
            .collect();
        let mut idx = vec![0usize; self.d];
        loop {
            let mut c = 0usize;
            for axis in (0..self.d).rev() {
                c = c * self.cells_per_axis + axes[axis][idx[axis]];
            }
            visit(self.bucket(c));
            let mut axis = 0;
            loop {
                idx[axis] += 1;
                if idx[axis] < axes[axis].len() {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
                if axis == self.d {
                    return;
                }
            }
        }
    }

    /// Indices of all points within torus distance `radius` of `center`.
    pub fn query_ball(&self, coords: &[f64], center: &[f64], radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let mut out = Vec::new();
        self.for_each_bucket_near(center, radius, |bucket| {
            for &j in bucket {
                let j = j as usize;
                let p = &coords[j * self.d..(j + 1) * self.d];
                if distance_sq(p, center, self.side) <= r2 {
                    out.push(j);
                }
            }
        });
        out.sort_unstable();
        out
    }
}

const VOLUME_TOL: Tolerance = Tolerance { abs: 1e-13, rel: 1e-12, max_intervals: 4000 };

/// `Vol([-1/2, 1/2]^d ∩ B(0, r))`.
///
/// Closed forms for `d ≤ 2`; higher dimensions use the slicing recursion
/// `V_d(r) = 2 r ∫_0^{θ_max} V_{d-1}(r cos θ) cos θ dθ` with breakpoints at
/// the radii `sqrt(j)/2` where the sphere meets lower-dimensional faces.
pub fn cube_ball_volume(r: f64, d: usize) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    if r * r >= d as f64 / 4.0 {
        return 1.0;
    }
    match d {
        0 => 1.0,
        1 => (2.0 * r).min(1.0),
        2 => {
            if r <= 0.5 {
                PI * r * r
            } else {
                let c = (0.5 / r).acos();
                PI * r * r - 4.0 * (r * r * c - 0.5 * (r * r - 0.25).sqrt())
            }
        }
        _ => {
            let theta_max = (0.5 / r).min(1.0).asin();
            let pts = slice_breakpoints(r, d, theta_max);
            2.0 * r
                * integrate(|t| cube_ball_volume(r * t.cos(), d - 1) * t.cos(), &pts, VOLUME_TOL).value
        }
    }
}

/// Surface measure of `∂B(0, r) ∩ [-1/2, 1/2]^d`, the radial density of
/// [`cube_ball_volume`].
pub fn cube_sphere_area(r: f64, d: usize) -> f64 {
    if r < 0.0 || r * r >= d as f64 / 4.0 {
        return 0.0;
    }
    match d {
        0 => 0.0,
        1 => {
            if r < 0.5 {
                2.0
            } else {
                0.0
            }
        }
        2 => {
            if r <= 0.5 {
                2.0 * PI * r
            } else {
                8.0 * r * (PI / 4.0 - (0.5 / r).acos())
            }
        }
        _ => {
            if r == 0.0 {
                return 0.0;
            }
            let theta_max = (0.5 / r).min(1.0).asin();
            let pts = slice_breakpoints(r, d, theta_max);
            2.0 * r * integrate(|t| cube_sphere_area(r * t.cos(), d - 1), &pts, VOLUME_TOL).value
        }
    }
}

fn slice_breakpoints(r: f64, d: usize, theta_max: f64) -> Vec<f64> {
    breakpoints(
        0.0,
        theta_max,
        (1..d).filter_map(|j| {
            let c = (j as f64).sqrt() / (2.0 * r);
            (c < 1.0).then(|| c.acos())
        }),
    )
}

/// `Vol([-1/2, 1/2]^d ∩ (B(0, b2) \ B(0, b1)))` for `0 <= b1 < b2 <= sqrt(d)/2`.
pub fn cube_annulus_volume(inner: f64, outer: f64, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(contract("dimension must be at least 1"));
    }
    let max = (d as f64).sqrt() / 2.0;
    if !(inner >= 0.0 && inner < outer && outer <= max * (1.0 + 1e-12)) {
        return Err(contract(format!(
            "annulus radii must satisfy 0 <= b1 < b2 <= sqrt(d)/2, got b1={inner}, b2={outer}, d={d}"
        )));
    }
    Ok((cube_ball_volume(outer, d) - cube_ball_volume(inner, d)).clamp(0.0, 1.0))
}

/// Volume of the Euclidean unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    // V_d = V_{d-2} 2π/d, V_0 = 1, V_1 = 2.
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if d % 2 == 0 { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * PI / k as f64;
        k += 2;
    }
    v
}

/// Surface area of the unit sphere in `R^d`, `d V_d`.
pub fn unit_sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}
