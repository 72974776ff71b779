//! Adaptive Gauss–Kronrod integration.
//!
//! A globally adaptive (7, 15) Gauss–Kronrod scheme in the style of QUADPACK's
//! QAG: the interval with the largest error estimate is bisected until the
//! total error meets `max(abs_tol, rel_tol * |value|)`. Known kinks or jumps of
//! the integrand should be passed as breakpoints.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{diagnostic, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Value and absolute error estimate of a numerical integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, error: 0.0, converged: true }
    }

    /// Turns a non-converged estimate into a diagnostic error.
    pub fn require(self, what: &str) -> Result<Self> {
        if self.converged && self.value.is_finite() {
            Ok(self)
        } else {
            Err(diagnostic(format!(
                "{what}: quadrature did not converge (value {:.6e}, residual {:.3e})",
                self.value, self.error
            )))
        }
    }
}

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel, max_intervals: 2000 }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-12, 1e-10)
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrates `f` over `[points[0], points[last]]`, treating interior points
/// as breakpoints. Points must be nondecreasing; zero-width pieces are skipped.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, points: &[f64], tol: Tolerance) -> Estimate {
    let mut heap = BinaryHeap::new();
    let mut value = 0.0;
    let mut error = 0.0;
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let (v, e) = gk15(&mut f, a, b);
        value += v;
        error += e;
        heap.push(Piece { a, b, value: v, error: e });
    }
    let mut intervals = heap.len();
    let mut done: Vec<Piece> = Vec::new();
    loop {
        let target = tol.abs.max(tol.rel * value.abs());
        if error <= target || !value.is_finite() {
            break;
        }
        if intervals >= tol.max_intervals {
            return Estimate { value, error, converged: false };
        }
        let Some(piece) = heap.pop() else { break };
        let mid = 0.5 * (piece.a + piece.b);
        if !(mid > piece.a && mid < piece.b)
            || (piece.b - piece.a) < 1e-14 * piece.a.abs().max(piece.b.abs())
        {
            // Too narrow to split; its error is irreducible.
            done.push(piece);
            continue;
        }
        let (v1, e1) = gk15(&mut f, piece.a, mid);
        let (v2, e2) = gk15(&mut f, mid, piece.b);
        value += v1 + v2 - piece.value;
        error += e1 + e2 - piece.error;
        heap.push(Piece { a: piece.a, b: mid, value: v1, error: e1 });
        heap.push(Piece { a: mid, b: piece.b, value: v2, error: e2 });
        intervals += 1;
    }
    // Re-sum to avoid drift from the incremental updates.
    let value: f64 = heap.iter().chain(done.iter()).map(|p| p.value).sum();
    let error: f64 = heap.iter().chain(done.iter()).map(|p| p.error).sum();
    let target = tol.abs.max(tol.rel * value.abs());
    let converged = value.is_finite() && error <= target.max(1e3 * f64::EPSILON * value.abs());
    Estimate { value, error, converged }
}

/// Sorts, deduplicates and clips breakpoints into `[a, b]`, returning the full
/// point list including the endpoints.
pub fn breakpoints(a: f64, b: f64, interior: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut pts: Vec<f64> = interior
        .into_iter()
        .filter(|x| x.is_finite() && *x > a && *x < b)
        .collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(|x, y| x.total_cmp(y));
    pts.dedup();
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let est = integrate(|x| x * x * x - 2.0 * x, &[0.0, 2.0], Tolerance::default());
        assert!((est.value - 0.0).abs() < 1e-13);
        assert!(est.converged);
    }

    #[test]
    fn smooth_transcendental() {
        let est = integrate(f64::exp, &[0.0, 1.0], Tolerance::default());
        assert!((est.value - (1f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn jump_with_and_without_breakpoint() {
        let step = |x: f64| if x <= 0.3 { 1.0 } else { 0.0 };
        let with = integrate(step, &[0.0, 0.3, 1.0], Tolerance::default());
        assert!((with.value - 0.3).abs() < 1e-14);
        let without = integrate(step, &[0.0, 1.0], Tolerance::new(1e-9, 1e-9));
        assert!((without.value - 0.3).abs() < 1e-8, "{without:?}");
    }

    #[test]
    fn endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let est = integrate(|x: f64| x.powf(-0.5), &[0.0, 1.0], Tolerance::new(1e-9, 1e-9));
        assert!((est.value - 2.0).abs() < 1e-7, "{est:?}");
    }

    #[test]
    fn breakpoint_helper_clips() {
        let pts = breakpoints(0.0, 1.0, [0.5, -1.0, 2.0, 0.5, f64::NAN]);
        assert_eq!(pts, vec![0.0, 0.5, 1.0]);
    }
}
