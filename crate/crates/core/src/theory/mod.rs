//! Numerical evaluation of the limit objects: `Λ`, `λ`, `μ`, `F(ρ)`, the law
//! of the excess `S`, the wave measure, the local degree law and `π_{a,b}`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::quadrature::{integrate, Estimate, Tolerance};

mod lambda;
mod local;
mod pi_ab;
mod rate;

pub use lambda::{big_lambda, big_lambda_r, big_lambda_wz, build_lambda_table, LambdaTable};
pub use local::{bulk_mass, d_infty_pmf, kernel_inverse, lambda_f, mu, small_lambda_r, small_lambda_wz, DegreeLaw, LambdaF};
pub use pi_ab::{pi_ab_oracle, PiAbOracle};
pub(crate) use rate::rho_order;
pub use rate::{f_rho, s_law, s_tail, wave_integral, FRhoEstimate, SLawEstimate, WaveSpec};

/// Number of independent shards a Monte-Carlo estimate is split into. Shards
/// use distinct substreams and are merged in shard order, so the result does
/// not depend on the worker count.
pub(crate) const MC_SHARDS: u64 = 64;

/// Numerical settings shared by the theory routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadSpec {
    /// Monte-Carlo sample count for `F(ρ)`, the S-law and `π_{a,b}`.
    pub mc_samples: usize,
    /// Number of equal pieces each radial integral starts from before
    /// adaptive refinement.
    pub quad_points_per_axis: usize,
    /// Outer radius for integrals over `R^d`; the remainder is bounded.
    pub truncation_radius: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            mc_samples: 1_000_000,
            quad_points_per_axis: 8,
            truncation_radius: 1e30,
            rel_tol: 1e-7,
            abs_tol: 1e-10,
        }
    }
}

impl QuadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.mc_samples < 1000 {
            return Err(contract(format!("mc_samples must be at least 1000, got {}", self.mc_samples)));
        }
        if self.quad_points_per_axis == 0 {
            return Err(contract("quad_points_per_axis must be positive"));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(contract("quadrature tolerances must be positive"));
        }
        if !(self.truncation_radius > 1.0) {
            return Err(contract("truncation_radius must exceed 1"));
        }
        Ok(())
    }

    pub(crate) fn tol(&self) -> Tolerance {
        Tolerance { abs: self.abs_tol, rel: self.rel_tol, max_intervals: 4000 }
    }

    /// Tolerance for integrals nested inside another one.
    pub(crate) fn inner_tol(&self) -> Tolerance {
        Tolerance { abs: 0.1 * self.abs_tol, rel: 0.1 * self.rel_tol, max_intervals: 4000 }
    }

    /// Same settings with the quadrature effort doubled, for refinement checks.
    pub fn refined(&self) -> Self {
        Self {
            mc_samples: self.mc_samples * 2,
            quad_points_per_axis: self.quad_points_per_axis * 2,
            rel_tol: self.rel_tol * 0.5,
            abs_tol: self.abs_tol * 0.5,
            ..*self
        }
    }
}

/// Radial test function `f(‖z‖)`.
#[derive(Clone)]
pub enum RadialTestFn {
    /// `f ≡ 1` on all of `R^d`.
    One,
    /// `1{lo < r ≤ hi}`.
    Indicator { lo: f64, hi: f64 },
    /// A bounded nonnegative function supported in `(0, support]`.
    Custom {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        support: f64,
        breakpoints: Vec<f64>,
    },
}

impl std::fmt::Debug for RadialTestFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RadialTestFn::One => write!(f, "One"),
            RadialTestFn::Indicator { lo, hi } => write!(f, "Indicator({lo}, {hi}]"),
            RadialTestFn::Custom { support, .. } => write!(f, "Custom(support {support})"),
        }
    }
}

impl RadialTestFn {
    pub fn indicator(lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return Err(contract(format!("indicator test function needs 0 <= lo < hi, got ({lo}, {hi}]")));
        }
        Ok(RadialTestFn::Indicator { lo, hi })
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static, support: f64) -> Result<Self> {
        if !(support > 0.0 && support.is_finite()) {
            return Err(contract("custom test function needs a finite positive support radius"));
        }
        Ok(RadialTestFn::Custom { f: Arc::new(f), support, breakpoints: Vec::new() })
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            RadialTestFn::One => 1.0,
            RadialTestFn::Indicator { lo, hi } => {
                if r > *lo && r <= *hi {
                    1.0
                } else {
                    0.0
                }
            }
            RadialTestFn::Custom { f, support, .. } => {
                if r > 0.0 && r <= *support {
                    f(r)
                } else {
                    0.0
                }
            }
        }
    }

    /// Support radius, `None` for `f ≡ 1`.
    pub fn support(&self) -> Option<f64> {
        match self {
            RadialTestFn::One => None,
            RadialTestFn::Indicator { hi, .. } => Some(*hi),
            RadialTestFn::Custom { support, .. } => Some(*support),
        }
    }

    pub(crate) fn breakpoints(&self) -> Vec<f64> {
        match self {
            RadialTestFn::One => Vec::new(),
            RadialTestFn::Indicator { lo, hi } => vec![*lo, *hi],
            RadialTestFn::Custom { support, breakpoints, .. } => {
                let mut b = breakpoints.clone();
                b.push(*support);
                b
            }
        }
    }
}

/// `E g(V)` for `V` Pareto on `[1, ∞)` with `P(V > t) = t^{-θ}`.
///
/// `growth` bounds the polynomial growth of `g`; the substitution
/// `1 - u = (1 - v)^q` with `q = 2 / (1 - growth/θ)` keeps the transformed
/// integrand bounded. `breaks` are kinks of `g` in the `V` variable.
pub(crate) fn pareto_expectation(
    theta: f64,
    growth: f64,
    mut g: impl FnMut(f64) -> f64,
    breaks: &[f64],
    pieces: usize,
    tol: Tolerance,
) -> Estimate {
    let q = if growth <= 0.0 { 1.0 } else { (2.0 / (1.0 - growth / theta)).max(1.0) };
    let expo = -q / theta;
    let to_v = |w: f64| 1.0 - w.powf(-theta / q);
    let interior = breaks
        .iter()
        .filter(|&&w| w > 1.0 && w.is_finite())
        .map(|&w| to_v(w))
        .chain((1..pieces).map(|i| i as f64 / pieces as f64));
    let points = crate::quadrature::breakpoints(0.0, 1.0, interior);
    integrate(
        |v| {
            let s = 1.0 - v;
            let w = s.powf(expo);
            if !w.is_finite() {
                return 0.0;
            }
            let jac = if q == 1.0 { 1.0 } else { q * s.powf(q - 1.0) };
            let val = g(w) * jac;
            if val.is_finite() {
                val
            } else {
                0.0
            }
        },
        &points,
        tol,
    )
}

/// Integrates `h` over `[a, b]` with `0 ≤ a < b`: linearly on `[a, split]`
/// and in `log r` beyond, which suits integrands with power-law tails.
pub(crate) fn radial_integral(
    mut h: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    split: f64,
    breaks: &[f64],
    pieces: usize,
    tol: Tolerance,
) -> Estimate {
    let split = split.clamp(a, b);
    let mut total = Estimate::exact(0.0);
    let mut add = |e: Estimate| {
        total.value += e.value;
        total.error += e.error;
        total.converged &= e.converged;
    };
    if split > a {
        let interior = breaks
            .iter()
            .copied()
            .chain((1..pieces).map(|i| a + (split - a) * i as f64 / pieces as f64));
        let pts = crate::quadrature::breakpoints(a, split, interior);
        add(integrate(&mut h, &pts, tol));
    }
    if b > split {
        let (la, lb) = (split.ln(), b.ln());
        let decades = ((lb - la) / std::f64::consts::LN_10).ceil().max(1.0) as usize;
        let interior = breaks
            .iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| x.ln())
            .chain((1..decades).map(|i| la + (lb - la) * i as f64 / decades as f64));
        let pts = crate::quadrature::breakpoints(la, lb, interior);
        add(integrate(
            |t| {
                let r = t.exp();
                h(r) * r
            },
            &pts,
            tol,
        ));
    }
    total
}

/// Converts a sum of estimates into a single one.
pub(crate) fn accumulate(acc: &mut Estimate, e: Estimate) {
    acc.value += e.value;
    acc.error += e.error;
    acc.converged &= e.converged;
}
