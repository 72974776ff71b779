//! Profiles, kernels, the Pareto weight law and the Assumption A auditor.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Connection profile `φ: [0, ∞) → [0, 1]`, nonincreasing with `sup φ = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    /// `1 ∧ x^{-α}`
    PolynomialTail { alpha: f64 },
    /// `1 - exp(-x^{-α})`
    StretchedExp { alpha: f64 },
    /// `1{x ≤ 1}`
    Indicator,
}

impl ProfileSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ProfileSpec::PolynomialTail { alpha } | ProfileSpec::StretchedExp { alpha } => {
                if !(alpha > 1.0 && alpha.is_finite()) {
                    return Err(contract(format!("profile exponent alpha must exceed 1, got {alpha}")));
                }
                Ok(())
            }
            ProfileSpec::Indicator => Ok(()),
        }
    }

    /// Evaluates `φ(x)` for `x ≥ 0`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ProfileSpec::PolynomialTail { alpha } => {
                if x <= 1.0 {
                    1.0
                } else {
                    x.powf(-alpha)
                }
            }
            ProfileSpec::StretchedExp { alpha } => {
                if x <= 0.0 {
                    1.0
                } else {
                    -(-x.powf(-alpha)).exp_m1()
                }
            }
            ProfileSpec::Indicator => {
                if x <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Tail exponent `α` of the bound `φ(x) ≤ 1 ∧ x^{-α}`; `None` when the
    /// profile is compactly supported (every exponent works).
    pub fn tail_alpha(&self) -> Option<f64> {
        match *self {
            ProfileSpec::PolynomialTail { alpha } | ProfileSpec::StretchedExp { alpha } => Some(alpha),
            ProfileSpec::Indicator => None,
        }
    }

    /// Exponent used for rigorous tail bounds `φ(x) ≤ 1 ∧ x^{-α}`.
    pub(crate) fn bound_alpha(&self) -> f64 {
        self.tail_alpha().unwrap_or(4.0)
    }

    /// Radius of the support in the scaled variable, if compact.
    pub fn support(&self) -> Option<f64> {
        match self {
            ProfileSpec::Indicator => Some(1.0),
            _ => None,
        }
    }

    /// Whether `φ = 1` on all of `[0, 1]`.
    pub fn unit_plateau(&self) -> bool {
        matches!(self, ProfileSpec::PolynomialTail { .. } | ProfileSpec::Indicator)
    }

    /// `∫_0^∞ φ(x) dx`.
    pub fn integral(&self) -> f64 {
        match *self {
            ProfileSpec::PolynomialTail { alpha } => alpha / (alpha - 1.0),
            ProfileSpec::StretchedExp { alpha } => gamma(1.0 - 1.0 / alpha),
            ProfileSpec::Indicator => 1.0,
        }
    }
}

// Lanczos approximation, adequate for arguments in (0, 1].
fn gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = C[0];
        let t = x + G + 0.5;
        for (i, c) in C.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

/// Connection kernel `κ(v, w)`, symmetric and nondecreasing in each argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `v w`
    Product,
    /// `(v^{1/d} + w^{1/d})^d`
    BooleanSum { d: usize },
    /// `(v ∧ w)^{1/γ - 1} (v ∨ w)`
    AgeMinMax { gamma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Product => Ok(()),
            KernelSpec::BooleanSum { d } if d >= 1 => Ok(()),
            KernelSpec::BooleanSum { .. } => Err(contract("boolean_sum kernel needs d >= 1")),
            KernelSpec::AgeMinMax { gamma } if gamma > 0.0 && gamma < 1.0 => Ok(()),
            KernelSpec::AgeMinMax { gamma } => Err(contract(format!("age kernel gamma must lie in (0,1), got {gamma}"))),
        }
    }

    /// Evaluates `κ(v, w)`; both weights must be at least 1.
    pub fn eval(&self, v: f64, w: f64) -> Result<f64> {
        if !(v >= 1.0 && w >= 1.0) {
            return Err(contract(format!("kernel arguments must be >= 1, got ({v}, {w})")));
        }
        Ok(self.eval_unchecked(v, w))
    }

    #[inline(always)]
    pub(crate) fn eval_unchecked(&self, v: f64, w: f64) -> f64 {
        match *self {
            KernelSpec::Product => v * w,
            KernelSpec::BooleanSum { d } => match d {
                1 => v + w,
                2 => {
                    let s = v.sqrt() + w.sqrt();
                    s * s
                }
                _ => {
                    let p = 1.0 / d as f64;
                    (v.powf(p) + w.powf(p)).powi(d as i32)
                }
            },
            KernelSpec::AgeMinMax { gamma } => {
                let (lo, hi) = if v < w { (v, w) } else { (w, v) };
                lo.powf(1.0 / gamma - 1.0) * hi
            }
        }
    }

    /// Limiting kernel `𝒦(v, w) = lim_{x→∞} κ(xv, w)/x`, linear in `v`.
    #[inline]
    pub fn limiting(&self, v: f64, w: f64) -> f64 {
        match *self {
            KernelSpec::Product => v * w,
            KernelSpec::BooleanSum { .. } => v,
            KernelSpec::AgeMinMax { gamma } => v * w.powf(1.0 / gamma - 1.0),
        }
    }
}

/// How vertices are placed on the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexCase {
    Lattice,
    Poisson,
}

impl std::fmt::Display for VertexCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VertexCase::Lattice => "lattice",
            VertexCase::Poisson => "poisson",
        })
    }
}

/// Full parameterisation of one weight-dependent random connection model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub d: usize,
    pub beta: f64,
    pub profile: ProfileSpec,
    pub kernel: KernelSpec,
    pub vertex_case: VertexCase,
}

impl ModelSpec {
    pub fn new(d: usize, beta: f64, profile: ProfileSpec, kernel: KernelSpec, vertex_case: VertexCase) -> Result<Self> {
        let m = Self { d, beta, profile, kernel, vertex_case };
        m.validate()?;
        Ok(m)
    }

    /// Poisson Boolean model with heavy-tailed radii.
    pub fn boolean(d: usize, beta: f64) -> Result<Self> {
        Self::new(d, beta, ProfileSpec::Indicator, KernelSpec::BooleanSum { d }, VertexCase::Poisson)
    }

    /// Scale-free percolation: product kernel with the stretched-exponential profile.
    pub fn scale_free_percolation(d: usize, beta: f64, alpha: f64, vertex_case: VertexCase) -> Result<Self> {
        Self::new(d, beta, ProfileSpec::StretchedExp { alpha }, KernelSpec::Product, vertex_case)
    }

    /// Rescaled age-based preferential attachment, `β = 1 + 1/γ`.
    pub fn age_based(d: usize, gamma: f64, alpha: f64) -> Result<Self> {
        Self::new(
            d,
            1.0 + 1.0 / gamma,
            ProfileSpec::PolynomialTail { alpha },
            KernelSpec::AgeMinMax { gamma },
            VertexCase::Poisson,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(contract("dimension d must be at least 1"));
        }
        if !(self.beta > 2.0 && self.beta.is_finite()) {
            return Err(contract(format!("beta must exceed 2, got {}", self.beta)));
        }
        self.profile.validate()?;
        self.kernel.validate()?;
        match self.kernel {
            KernelSpec::BooleanSum { d } if d != self.d => Err(contract(format!(
                "boolean_sum kernel dimension {d} differs from model dimension {}",
                self.d
            ))),
            KernelSpec::AgeMinMax { gamma } if (self.beta - (1.0 + 1.0 / gamma)).abs() > 1e-9 => Err(contract(format!(
                "age kernel requires beta = 1 + 1/gamma = {}, got {}",
                1.0 + 1.0 / gamma,
                self.beta
            ))),
            _ => Ok(()),
        }
    }

    /// Exponent `p` with `𝒦(v, w) = v w^p`.
    pub fn limiting_power(&self) -> f64 {
        match self.kernel {
            KernelSpec::Product => 1.0,
            KernelSpec::BooleanSum { .. } => 0.0,
            KernelSpec::AgeMinMax { gamma } => 1.0 / gamma - 1.0,
        }
    }

    /// `E W = (β-1)/(β-2)`.
    pub fn mean_weight(&self) -> f64 {
        (self.beta - 1.0) / (self.beta - 2.0)
    }
}

/// Inverse CDF of the Pareto law with density `(β-1) t^{-β}` on `[1, ∞)`.
///
/// `u = 0` returns the support minimum 1.
pub fn weight_quantile(beta: f64, u: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(contract(format!("quantile level must lie in [0, 1), got {u}")));
    }
    if !(beta > 1.0) {
        return Err(contract(format!("Pareto exponent must exceed 1, got {beta}")));
    }
    Ok(pareto_quantile_unchecked(beta, u))
}

#[inline(always)]
pub(crate) fn pareto_quantile_unchecked(beta: f64, u: f64) -> f64 {
    (1.0 - u).powf(-1.0 / (beta - 1.0))
}

/// Outcome of the grid audit of Assumption A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionAReport {
    pub kernel_bounds_ok: bool,
    pub kernel_lower_c: f64,
    pub kernel_upper_c: f64,
    pub profile_bounds_ok: bool,
    pub profile_lower_c: f64,
    pub profile_upper_c: f64,
    pub profile_alpha: f64,
    pub limiting_kernel_converged: bool,
    pub limiting_kernel_residual: f64,
    pub flat_pieces_suspect: bool,
    /// Log-spaced grid used for weights (kernel checks).
    pub weight_grid: Vec<f64>,
    /// Log-spaced grid used for the profile checks.
    pub profile_grid: Vec<f64>,
}

impl AssumptionAReport {
    pub fn all_ok(&self) -> bool {
        self.kernel_bounds_ok && self.profile_bounds_ok && self.limiting_kernel_converged && !self.flat_pieces_suspect
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Audits Assumption A for a shipped model.
pub fn audit_assumption_a(m: &ModelSpec, grid_size: usize) -> Result<AssumptionAReport> {
    m.validate()?;
    let kernel = m.kernel;
    let profile = m.profile;
    audit_functions(
        &|v, w| kernel.eval_unchecked(v, w),
        &|x| profile.eval(x),
        m.beta,
        profile.bound_alpha(),
        grid_size,
    )
}

/// Audits Assumption A for arbitrary kernel/profile functions.
///
/// The checks are finite-grid evidence, not proofs:
/// * kernel bounds `c v ≤ κ(v, w) ≤ C v w^{(β-2)∨1}` for `v ≥ w ≥ 1`: witness
///   constants must stay stable (within a factor 2) when the grid range is
///   extended from `[1, 10^3]` to `[1, 10^6]`;
/// * profile bounds `c 1{x≤c} ≤ φ(x) ≤ 1 ∧ C x^{-α}`, with the same
///   stability test for `C` between `[1, 10^3]` and `[1, 10^6]`;
/// * Cauchy convergence of `κ(xv, w)/x` over `x ∈ {10^2, …, 10^8}`;
/// * flat pieces: `φ` constant at a level strictly inside `(inf φ, sup φ)`
///   over two adjacent grid cells.
pub fn audit_functions(
    kernel: &dyn Fn(f64, f64) -> f64,
    profile: &dyn Fn(f64) -> f64,
    beta: f64,
    alpha: f64,
    grid_size: usize,
) -> Result<AssumptionAReport> {
    if grid_size < 16 {
        return Err(contract(format!("audit grid needs at least 16 points, got {grid_size}")));
    }
    let exponent = (beta - 2.0).max(1.0);

    // Kernel bounds.
    let weight_grid = log_grid(1.0, 1e6, grid_size);
    let ratios = |limit: f64| {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for &v in weight_grid.iter().filter(|&&v| v <= limit) {
            for &w in weight_grid.iter().filter(|&&w| w <= v) {
                let k = kernel(v, w);
                lo = lo.min(k / v);
                hi = hi.max(k / (v * w.powf(exponent)));
            }
        }
        (lo, hi)
    };
    let (lo_small, hi_small) = ratios(1e3 * (1.0 + 1e-9));
    let (lo_big, hi_big) = ratios(f64::INFINITY);
    let kernel_bounds_ok = lo_big > 0.0
        && hi_big.is_finite()
        && lo_big >= 0.5 * lo_small
        && hi_big <= 2.0 * hi_small;

    // Profile bounds.
    let profile_grid = log_grid(1e-6, 1e6, grid_size);
    let mut lower_c = 0.0;
    let mut c = 1.0;
    while c > 1e-6 {
        if profile(c) >= c {
            lower_c = c;
            break;
        }
        c *= 0.5;
    }
    let le_one = profile_grid.iter().all(|&x| profile(x) <= 1.0 + 1e-15 && profile(x) >= 0.0);
    let upper = |limit: f64| {
        profile_grid
            .iter()
            .filter(|&&x| x >= 1.0 && x <= limit)
            .map(|&x| profile(x) * x.powf(alpha))
            .fold(0.0f64, f64::max)
            .max(1.0)
    };
    let (up_small, up_big) = (upper(1e3 * (1.0 + 1e-9)), upper(f64::INFINITY));
    let profile_bounds_ok = lower_c > 0.0 && le_one && up_big.is_finite() && up_big <= 2.0 * up_small;

    // Limiting kernel: relative change between consecutive scales.
    let scales: Vec<f64> = (2..=8).map(|e| 10f64.powi(e)).collect();
    let mut first_residual: f64 = 0.0;
    let mut last_residual: f64 = 0.0;
    for &v in &[0.5, 1.0, 2.0] {
        for &w in &[1.0, 3.0, 10.0] {
            let seq: Vec<f64> = scales.iter().map(|&x| kernel(x * v, w) / x).collect();
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
            first_residual = first_residual.max(rel(seq[0], seq[1]));
            last_residual = last_residual.max(rel(seq[seq.len() - 2], seq[seq.len() - 1]));
        }
    }
    let limiting_kernel_converged =
        last_residual.is_finite() && last_residual < 0.05 && (last_residual <= 0.5 * first_residual || last_residual < 1e-9);

    // Flat pieces at interior levels.
    let values: Vec<f64> = profile_grid.iter().map(|&x| profile(x)).collect();
    let sup = values.iter().cloned().fold(f64::MIN, f64::max);
    let inf = values.iter().cloned().fold(f64::MAX, f64::min);
    let flat_pieces_suspect = values.windows(3).any(|w| {
        w[0] == w[1] && w[1] == w[2] && w[0] > inf + 1e-12 && w[0] < sup - 1e-12
    });

    Ok(AssumptionAReport {
        kernel_bounds_ok,
        kernel_lower_c: lo_big,
        kernel_upper_c: hi_big,
        profile_bounds_ok,
        profile_lower_c: lower_c,
        profile_upper_c: up_big,
        profile_alpha: alpha,
        limiting_kernel_converged,
        limiting_kernel_residual: last_residual,
        flat_pieces_suspect,
        weight_grid,
        profile_grid,
    })
}
