use serde::{Deserialize, Serialize};

use super::{accumulate, pareto_expectation, radial_integral, QuadSpec, RadialTestFn};
use crate::error::{contract, diagnostic, Result};
use crate::model::{KernelSpec, ModelSpec, ProfileSpec, VertexCase};
use crate::quadrature::{Estimate, Tolerance};
use crate::torus::{unit_ball_volume, unit_sphere_area};

/// Lattice points enumerated exactly before the far field is bounded.
const LATTICE_POINTS: usize = 1 << 16;

/// Smallest `W ≥ 1` with `κ(w, W) ≥ target`.
pub fn kernel_inverse(kernel: &KernelSpec, w: f64, target: f64) -> f64 {
    let raw = match *kernel {
        KernelSpec::Product => target / w,
        KernelSpec::BooleanSum { d } => {
            let p = 1.0 / d as f64;
            let gap = target.powf(p) - w.powf(p);
            if gap <= 0.0 {
                1.0
            } else {
                gap.powi(d as i32)
            }
        }
        KernelSpec::AgeMinMax { gamma } => {
            let e = 1.0 / gamma - 1.0;
            if target <= w.powf(1.0 / gamma) {
                (target / w).powf(1.0 / e)
            } else {
                target / w.powf(e)
            }
        }
    };
    raw.max(1.0)
}

/// `λ(w, z)` as a function of `r = ‖z‖`: `E φ(r^d / κ(w, W))`.
pub fn small_lambda_r(m: &ModelSpec, w: f64, r: f64, q: &QuadSpec) -> Result<Estimate> {
    if !(w >= 1.0) {
        return Err(contract(format!("λ(w, z) needs w >= 1, got {w}")));
    }
    Ok(small_lambda_inner(m, w, r, q, q.tol()))
}

pub(crate) fn small_lambda_inner(m: &ModelSpec, w: f64, r: f64, q: &QuadSpec, tol: Tolerance) -> Estimate {
    if r <= 0.0 {
        return Estimate::exact(m.profile.eval(0.0));
    }
    let rd = r.powi(m.d as i32);
    let w_star = kernel_inverse(&m.kernel, w, rd);
    if let ProfileSpec::Indicator = m.profile {
        return Estimate::exact(w_star.powf(1.0 - m.beta));
    }
    let kernel = m.kernel;
    let profile = m.profile;
    // φ(r^d/κ(w,v)) grows like v^α until it saturates; the cap keeps the
    // substitution finite when α ≥ β - 1.
    let growth = profile.bound_alpha().min(0.8 * (m.beta - 1.0));
    pareto_expectation(
        m.beta - 1.0,
        growth,
        |v| profile.eval(rd / kernel.eval_unchecked(w, v)),
        &[w_star, w],
        q.quad_points_per_axis,
        tol,
    )
}

/// `λ(w, z)` for `z ∈ R^d`.
pub fn small_lambda_wz(m: &ModelSpec, w: f64, z: &[f64], q: &QuadSpec) -> Result<Estimate> {
    if z.len() != m.d {
        return Err(contract(format!("point has {} coordinates, model has d = {}", z.len(), m.d)));
    }
    let r = z.iter().map(|c| c * c).sum::<f64>().sqrt();
    small_lambda_r(m, w, r, q)?.require("λ(w, z)")
}

/// Value of `λ_f(w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaF {
    pub value: f64,
    /// Quadrature error estimate.
    pub error: f64,
    /// Bound on the neglected remainder beyond the truncation radius (or the
    /// half-width of the far-field bracket in the lattice case).
    pub tail_bound: f64,
}

/// `E_W ∫_{‖x‖ > R} 1 ∧ (κ(w, W) / ‖x‖^d)^α dx`, which dominates the
/// remainder of `∫ λ(w, x) dx` beyond `R` because `φ(t) ≤ 1 ∧ t^{-α}`.
fn poisson_tail_bound(m: &ModelSpec, w: f64, radius: f64, q: &QuadSpec) -> Estimate {
    let alpha = m.profile.bound_alpha();
    let vd = unit_ball_volume(m.d);
    let rd = radius.powi(m.d as i32);
    let kernel = m.kernel;
    let h = move |kappa: f64| {
        if rd >= kappa {
            vd * kappa * (kappa / rd).powf(alpha - 1.0) / (alpha - 1.0)
        } else {
            vd * (kappa - rd) + vd * kappa / (alpha - 1.0)
        }
    };
    let w_cross = kernel_inverse(&kernel, w, rd);
    pareto_expectation(
        m.beta - 1.0,
        1.0,
        |v| h(kernel.eval_unchecked(w, v)),
        &[w_cross, w],
        q.quad_points_per_axis,
        q.inner_tol(),
    )
}

/// Inner tolerances for `λ(w, r)` under a radial integral over `[0, top]`.
///
/// The absolute part shrinks like `r^{-d}` beyond `split`, so the inner errors
/// integrated against `σ r^{d-1} dr` stay below `budget` however far `top` is.
struct RadialInner {
    base: Tolerance,
    scale: f64,
    split: f64,
    d: i32,
}

impl RadialInner {
    fn new(q: &QuadSpec, d: usize, split: f64, top: f64) -> Self {
        let base = q.inner_tol();
        let logs = if top > split { (top / split).ln() } else { 0.0 };
        let scale = base.abs / (unit_sphere_area(d) * (1.0 / d as f64 + logs));
        Self { base, scale, split, d: d as i32 }
    }

    fn at(&self, r: f64) -> Tolerance {
        Tolerance { abs: self.scale / r.max(self.split).powi(self.d), ..self.base }
    }

    /// Bound on the integrated absolute inner error.
    fn budget(&self) -> f64 {
        self.base.abs
    }
}

fn check_w(w: f64) -> Result<()> {
    if w >= 1.0 {
        Ok(())
    } else {
        Err(contract(format!("λ_f(w) needs w >= 1, got {w}")))
    }
}

/// `λ_f(w)`: `∫ f(‖z‖) λ(w, z) dz` in the Poisson case, `Σ_{z ∈ Z^d \ {0}}
/// f(‖z‖) λ(w, z)` in the lattice case.
///
/// A diagnostic error is raised if the reported remainder exceeds the
/// tolerance `max(abs_tol, rel_tol · value)`.
pub fn lambda_f(m: &ModelSpec, w: f64, f: &RadialTestFn, q: &QuadSpec) -> Result<LambdaF> {
    check_w(w)?;
    let out = match m.vertex_case {
        VertexCase::Poisson => lambda_f_poisson(m, w, f, q),
        VertexCase::Lattice => lambda_f_lattice(m, w, f, q)?,
    };
    if !out.value.is_finite() {
        return Err(diagnostic(format!("λ_f({w}) is not finite")));
    }
    let allowed = q.abs_tol.max(q.rel_tol * out.value.abs());
    if out.tail_bound > allowed {
        return Err(diagnostic(format!(
            "λ_f({w}): remainder bound {:.3e} exceeds tolerance {allowed:.3e}; increase the truncation radius",
            out.tail_bound
        )));
    }
    if out.error > 10.0 * allowed {
        return Err(diagnostic(format!("λ_f({w}): quadrature residual {:.3e} too large", out.error)));
    }
    Ok(out)
}

fn lambda_f_poisson(m: &ModelSpec, w: f64, f: &RadialTestFn, q: &QuadSpec) -> LambdaF {
    let d = m.d;
    let sigma = unit_sphere_area(d);
    let top = f.support().unwrap_or(q.truncation_radius).min(q.truncation_radius);
    let reach = m.kernel.eval_unchecked(w, 1.0).powf(1.0 / d as f64);
    let mut breaks = f.breakpoints();
    breaks.push(reach);
    let split = (2.0 * reach).min(top);
    let inner = RadialInner::new(q, d, split, top);
    let mut inner_ok = true;
    let mut est = radial_integral(
        |r| {
            let fr = f.eval(r);
            if fr == 0.0 {
                return 0.0;
            }
            let e = small_lambda_inner(m, w, r, q, inner.at(r));
            inner_ok &= e.converged;
            fr * e.value * sigma * r.powi(d as i32 - 1)
        },
        0.0,
        top,
        split,
        &breaks,
        q.quad_points_per_axis,
        q.tol(),
    );
    est.error += inner.base.rel * est.value.abs() + inner.budget();
    est.converged &= inner_ok;
    let tail_bound = if f.support().is_none() {
        let t = poisson_tail_bound(m, w, top, q);
        t.value + t.error
    } else {
        0.0
    };
    LambdaF { value: est.value, error: est.error, tail_bound }
}

/// Lattice points with `0 < ‖z‖ ≤ radius`, grouped as `(‖z‖², multiplicity)`.
fn lattice_shells(d: usize, radius: f64) -> Vec<(u64, u64)> {
    let rmax = radius.floor() as i64;
    let r2max = (radius * radius).floor() as u64;
    let mut counts = std::collections::BTreeMap::new();
    let mut z = vec![-rmax; d];
    loop {
        let n2: u64 = z.iter().map(|&c| (c * c) as u64).sum();
        if n2 > 0 && n2 <= r2max {
            *counts.entry(n2).or_insert(0u64) += 1;
        }
        let mut axis = 0;
        loop {
            z[axis] += 1;
            if z[axis] <= rmax {
                break;
            }
            z[axis] = -rmax;
            axis += 1;
            if axis == d {
                return counts.into_iter().collect();
            }
        }
    }
}

/// Enumeration radius so that about `LATTICE_POINTS` points are visited.
fn lattice_radius(d: usize, q: &QuadSpec) -> f64 {
    let r = (LATTICE_POINTS as f64 / unit_ball_volume(d)).powf(1.0 / d as f64);
    r.min(q.truncation_radius).max(2.0 * (d as f64).sqrt() + 1.0)
}

/// Bracket for `Σ_{z ∈ Z^d, ‖z‖ > R} λ(w, z)` by comparing each unit cell
/// with `λ` at the nearest and farthest point of the cell.
/// Returns `(midpoint, half-width)`.
fn lattice_far_field(m: &ModelSpec, w: f64, radius: f64, q: &QuadSpec) -> (f64, f64, bool) {
    let d = m.d;
    let c = 0.5 * (d as f64).sqrt();
    let sigma = unit_sphere_area(d);
    let top = q.truncation_radius;
    let reach = m.kernel.eval_unchecked(w, 1.0).powf(1.0 / d as f64);
    let inner = RadialInner::new(q, d, (radius - 2.0 * c).max(1.0), top);
    let mut ok = true;
    let mut lam = |s: f64| {
        let e = small_lambda_inner(m, w, s, q, inner.at(s));
        ok &= e.converged;
        e.value
    };
    let lo_start = radius + 2.0 * c;
    let lower = radial_integral(
        |s| lam(s) * sigma * (s - c).powi(d as i32 - 1),
        lo_start,
        top,
        lo_start,
        &[reach],
        q.quad_points_per_axis,
        q.inner_tol(),
    );
    let up_start = radius - 2.0 * c;
    let upper = radial_integral(
        |s| lam(s) * sigma * (s + c).powi(d as i32 - 1),
        up_start,
        top,
        up_start,
        &[reach],
        q.quad_points_per_axis,
        q.inner_tol(),
    );
    let beyond = poisson_tail_bound(m, w, top, q);
    let upper_total = upper.value + upper.error + 2f64.powi(d as i32 - 1) * (beyond.value + beyond.error);
    let lower_total = (lower.value - lower.error).max(0.0);
    let converged = ok && lower.converged && upper.converged && beyond.converged;
    (0.5 * (upper_total + lower_total), 0.5 * (upper_total - lower_total), converged)
}

fn lambda_f_lattice(m: &ModelSpec, w: f64, f: &RadialTestFn, q: &QuadSpec) -> Result<LambdaF> {
    let d = m.d;
    let enum_radius = match f.support() {
        Some(s) => {
            if unit_ball_volume(d) * s.powi(d as i32) > 16.0 * LATTICE_POINTS as f64 {
                return Err(diagnostic(format!("lattice λ_f: support radius {s} is too large to enumerate")));
            }
            s
        }
        None => lattice_radius(d, q),
    };
    let shells = lattice_shells(d, enum_radius);
    let inner = q.inner_tol();
    let mut acc = Estimate::exact(0.0);
    for &(n2, mult) in &shells {
        let r = (n2 as f64).sqrt();
        let fr = f.eval(r);
        if fr == 0.0 {
            continue;
        }
        let e = small_lambda_inner(m, w, r, q, inner);
        accumulate(&mut acc, Estimate { value: fr * e.value * mult as f64, error: fr * e.error * mult as f64, converged: e.converged });
    }
    let mut tail_bound = 0.0;
    match f {
        RadialTestFn::One => {
            let (mid, half, ok) = lattice_far_field(m, w, enum_radius, q);
            acc.value += mid;
            acc.converged &= ok;
            tail_bound = half;
        }
        _ => {}
    }
    if !acc.converged {
        return Err(diagnostic(format!("lattice λ_f({w}): inner quadrature did not converge")));
    }
    Ok(LambdaF { value: acc.value, error: acc.error, tail_bound })
}

/// `μ = ½ E[λ_1(W)]`, the limiting edge density.
pub fn mu(m: &ModelSpec, q: &QuadSpec) -> Result<Estimate> {
    let out = bulk_mass(m, &RadialTestFn::One, q)?;
    if !(out.value > 0.0) {
        return Err(diagnostic("μ is not positive"));
    }
    Ok(out)
}

/// `½ E[λ_f(W)]`, the fixed-scale limit of `∫ f dμ_n`.
pub fn bulk_mass(m: &ModelSpec, f: &RadialTestFn, q: &QuadSpec) -> Result<Estimate> {
    m.validate()?;
    q.validate()?;
    let mut first_err: Option<crate::error::Error> = None;
    let mut worst: f64 = 0.0;
    let est = pareto_expectation(
        m.beta - 1.0,
        1.0,
        |v| match lambda_f(m, v, f, q) {
            Ok(l) => {
                worst = worst.max((l.error + l.tail_bound) / v);
                l.value
            }
            Err(e) => {
                first_err.get_or_insert(e);
                0.0
            }
        },
        &[],
        q.quad_points_per_axis,
        Tolerance { abs: q.abs_tol, rel: q.rel_tol, max_intervals: 400 },
    );
    if let Some(e) = first_err {
        return Err(e);
    }
    // Inner errors grow at most linearly in w; E W bounds their average.
    let out = Estimate { value: 0.5 * est.value, error: 0.5 * (est.error + worst * m.mean_weight()), converged: est.converged };
    out.require("½ E λ_f(W)")
}

fn poisson_pmf(lambda: f64, a: usize) -> f64 {
    if lambda == 0.0 {
        return if a == 0 { 1.0 } else { 0.0 };
    }
    let ln_fact: f64 = (1..=a).map(|k| (k as f64).ln()).sum();
    (a as f64 * lambda.ln() - lambda - ln_fact).exp()
}

/// Law of the root degree `D_∞(w)` in the local limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeLaw {
    pub w: f64,
    /// `pmf[a]` for `a ≤ a_max`.
    pub pmf: Vec<f64>,
    /// `P(D_∞ > a_max)`.
    pub overflow: f64,
    pub mean: f64,
    /// Total-variation bound for the truncation of the far field.
    pub truncation_error: f64,
}

impl DegreeLaw {
    /// Poisson case: `Poisson(λ_1(w))`. Lattice case: exact convolution of
    /// the Bernoulli variables for `‖z‖ ≤ R`; the far field is replaced by a
    /// Poisson variable with the same mean, costing at most the Le Cam bound
    /// `max_z p_z · Σ_z p_z` plus the uncertainty of that mean.
    pub fn new(m: &ModelSpec, w: f64, a_max: usize, q: &QuadSpec) -> Result<Self> {
        check_w(w)?;
        match m.vertex_case {
            VertexCase::Poisson => {
                let l = lambda_f(m, w, &RadialTestFn::One, q)?;
                let pmf: Vec<f64> = (0..=a_max).map(|a| poisson_pmf(l.value, a)).collect();
                let overflow = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
                Ok(Self { w, pmf, overflow, mean: l.value, truncation_error: l.tail_bound })
            }
            VertexCase::Lattice => Self::lattice(m, w, a_max, q),
        }
    }

    fn lattice(m: &ModelSpec, w: f64, a_max: usize, q: &QuadSpec) -> Result<Self> {
        let radius = lattice_radius(m.d, q);
        let shells = lattice_shells(m.d, radius);
        let inner = q.inner_tol();
        // dp[a] for a ≤ a_max, last slot collects overflow.
        let mut dp = vec![0.0; a_max + 2];
        dp[0] = 1.0;
        let mut near_mean = 0.0;
        let mut touched = 0usize;
        for &(n2, mult) in &shells {
            let p = small_lambda_inner(m, w, (n2 as f64).sqrt(), q, inner).value.clamp(0.0, 1.0);
            near_mean += p * mult as f64;
            if p == 0.0 {
                continue;
            }
            for _ in 0..mult {
                let top = (touched + 1).min(a_max + 1);
                dp[a_max + 1] = dp[a_max + 1] + dp[a_max] * p;
                for a in (1..=top.min(a_max)).rev() {
                    dp[a] = dp[a] * (1.0 - p) + dp[a - 1] * p;
                }
                dp[0] *= 1.0 - p;
                touched += 1;
            }
        }
        let (far_mean, far_half, ok) = lattice_far_field(m, w, radius, q);
        if !ok {
            return Err(diagnostic(format!("lattice degree law at w = {w}: far-field quadrature did not converge")));
        }
        let p_edge = small_lambda_inner(m, w, radius, q, inner).value;
        let truncation_error = p_edge * (far_mean + far_half) + far_half;
        if truncation_error > q.abs_tol {
            return Err(diagnostic(format!(
                "lattice degree law at w = {w}: truncation error {truncation_error:.3e} exceeds abs_tol {:.3e}; \
                 raise quad.abs_tol to at least {truncation_error:.1e}",
                q.abs_tol
            )));
        }
        let far: Vec<f64> = (0..=a_max).map(|a| poisson_pmf(far_mean, a)).collect();
        let mut pmf = vec![0.0; a_max + 1];
        for (i, &x) in dp.iter().take(a_max + 1).enumerate() {
            for (j, &y) in far.iter().enumerate() {
                if i + j <= a_max {
                    pmf[i + j] += x * y;
                }
            }
        }
        let overflow = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
        Ok(Self { w, pmf, overflow, mean: near_mean + far_mean, truncation_error })
    }
}

/// `P(D_∞(w) = a)`.
pub fn d_infty_pmf(m: &ModelSpec, w: f64, a: usize, q: &QuadSpec) -> Result<f64> {
    Ok(DegreeLaw::new(m, w, a, q)?.pmf[a])
}
