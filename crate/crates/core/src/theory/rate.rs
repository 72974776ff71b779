use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lambda::big_lambda_r_inner;
use super::{LambdaTable, QuadSpec, RadialTestFn, MC_SHARDS};
use crate::error::{contract, diagnostic, Result};
use crate::model::{pareto_quantile_unchecked, ModelSpec, ProfileSpec};
use crate::quadrature::{integrate, Estimate};
use crate::rng::RngStream;
use crate::torus::cube_sphere_area;

/// Monte-Carlo estimate of `F(ρ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FRhoEstimate {
    pub rho: f64,
    pub k: usize,
    /// `sup{y : Λ(y) ≤ ρ - (k-1)}`.
    pub b_star: f64,
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    pub hits: usize,
    /// Bound on the bias from samples beyond the top of the Λ table.
    pub table_bias: f64,
    /// `(Λ^{-1}(ρ))^{1-β}` for `k = 1` when `Λ` is strictly increasing there.
    pub deterministic: Option<f64>,
}

pub(crate) fn rho_order(rho: f64) -> Result<usize> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(contract(format!("ρ must be positive, got {rho}")));
    }
    if rho.fract() == 0.0 {
        return Err(contract(format!("ρ = {rho} is an integer; only non-integer ρ is supported")));
    }
    Ok(rho.ceil() as usize)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Per-sample sums `Σ Λ(Z_i)` with `Z_i` i.i.d. Pareto on `[b*, ∞)` with
/// density `∝ y^{-β}`. Also returns the sums with beyond-table values raised
/// to 1, which bracket the truth.
struct SumSampler<'a> {
    table: &'a LambdaTable,
    beta: f64,
    b_star: f64,
    k: usize,
}

impl SumSampler<'_> {
    fn draw<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        let gap = self.table.top_gap();
        let top = self.table.w_max();
        for _ in 0..self.k {
            let z = self.b_star * pareto_quantile_unchecked(self.beta, rng.random::<f64>());
            let v = self.table.eval(z);
            lo += v;
            hi += if z > top && self.table.saturation.is_none() { v + gap } else { v };
        }
        (lo, hi)
    }

    /// Runs `samples` draws in fixed shards and folds each sample's sums.
    fn run<T: Send + Default, F>(&self, samples: usize, rng: RngStream, fold: F) -> Vec<T>
    where
        F: Fn(&mut T, f64, f64) + Sync,
    {
        (0..MC_SHARDS)
            .into_par_iter()
            .map(|s| {
                let count = samples / MC_SHARDS as usize + usize::from((s as usize) < samples % MC_SHARDS as usize);
                let mut r = rng.substream(s).rng();
                let mut acc = T::default();
                for _ in 0..count {
                    let (lo, hi) = self.draw(&mut r);
                    fold(&mut acc, lo, hi);
                }
                acc
            })
            .collect()
    }
}

fn check_table(m: &ModelSpec, table: &LambdaTable) -> Result<()> {
    if table.model != *m {
        return Err(contract("Λ table was built for a different model"));
    }
    Ok(())
}

/// `F(ρ) = (β-1)^k/k! ∫ 1{Σ Λ(y_i) > ρ} Π y_i^{-β} dy`.
///
/// Every point of the integration region has all `y_i > b*`, so
/// `F(ρ) = (b*^{1-β})^k / k! · P(Σ Λ(Z_i) > ρ)` for `Z_i` Pareto truncated
/// at `b*`.
pub fn f_rho(rho: f64, m: &ModelSpec, table: &LambdaTable, q: &QuadSpec, rng: RngStream) -> Result<FRhoEstimate> {
    let k = rho_order(rho)?;
    q.validate()?;
    check_table(m, table)?;
    let b_star = table.inverse_sup(rho - (k as f64 - 1.0))?;
    let sampler = SumSampler { table, beta: m.beta, b_star, k };
    let n = q.mc_samples;
    let shards: Vec<(usize, usize)> = sampler.run(n, rng, |acc: &mut (usize, usize), lo, hi| {
        if lo > rho {
            acc.0 += 1;
        } else if hi > rho {
            acc.1 += 1;
        }
    });
    let hits: usize = shards.iter().map(|s| s.0).sum();
    let ambiguous: usize = shards.iter().map(|s| s.1).sum();
    let pref = b_star.powf(1.0 - m.beta).powi(k as i32) / factorial(k);
    let p = hits as f64 / n as f64;
    let stderr = pref * (p * (1.0 - p) / n as f64).sqrt();
    let deterministic = (k == 1 && table.right_slope(b_star) > 0.0).then(|| b_star.powf(1.0 - m.beta));
    Ok(FRhoEstimate {
        rho,
        k,
        b_star,
        value: pref * p,
        stderr,
        samples: n,
        hits,
        table_bias: pref * ambiguous as f64 / n as f64,
        deterministic,
    })
}

/// Tail of the limiting excess `S`: `P(S > s) = F(s)/F(ρ)` on `[ρ, k)` and
/// the atom `P(S = k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SLawEstimate {
    pub rho: f64,
    pub k: usize,
    pub b_star: f64,
    /// `(s, P(S > s), standard error)`.
    pub tail: Vec<(f64, f64, f64)>,
    pub atom: f64,
    pub atom_stderr: f64,
}

/// Evaluates the S-law on a grid of `s ∈ [ρ, k)`.
///
/// All ratios share one sample truncated at `b*(ρ)`: for `s ≥ ρ` the region
/// `{Σ Λ > s}` lies inside the region for `ρ`, so
/// `F(s)/F(ρ) = P(Σ Λ(Z) > s) / P(Σ Λ(Z) > ρ)` with the same `Z`.
pub fn s_law(rho: f64, s_grid: &[f64], m: &ModelSpec, table: &LambdaTable, q: &QuadSpec, rng: RngStream) -> Result<SLawEstimate> {
    let k = rho_order(rho)?;
    q.validate()?;
    check_table(m, table)?;
    for &s in s_grid {
        if s < rho {
            return Err(contract(format!("S-law needs s >= ρ, got s = {s} < {rho}")));
        }
        if s >= k as f64 {
            return Err(contract(format!("S-law needs s < k = {k}, got {s}")));
        }
    }
    let b_star = table.inverse_sup(rho - (k as f64 - 1.0))?;
    let sampler = SumSampler { table, beta: m.beta, b_star, k };
    let atom_level = k as f64 - 1e-12;
    let grid = s_grid.to_vec();
    let shards: Vec<Counts> = sampler.run(q.mc_samples, rng, |acc: &mut Counts, lo, _| {
        if acc.over.is_empty() {
            acc.over = vec![0; grid.len()];
        }
        if lo > rho {
            acc.base += 1;
            for (c, &s) in acc.over.iter_mut().zip(&grid) {
                if lo > s {
                    *c += 1;
                }
            }
            if lo >= atom_level {
                acc.atom += 1;
            }
        }
    });
    let base: usize = shards.iter().map(|s| s.base).sum();
    if base == 0 {
        return Err(diagnostic(format!("S-law: no sample exceeded ρ = {rho}; increase mc_samples")));
    }
    let ratio = |c: usize| {
        let p = c as f64 / base as f64;
        (p, (p * (1.0 - p) / base as f64).sqrt())
    };
    let tail = grid
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let c: usize = shards.iter().map(|sh| sh.over.get(i).copied().unwrap_or(0)).sum();
            let (p, se) = ratio(c);
            (s, p, se)
        })
        .collect();
    let (atom, atom_stderr) = ratio(shards.iter().map(|s| s.atom).sum());
    Ok(SLawEstimate { rho, k, b_star, tail, atom, atom_stderr })
}

#[derive(Default)]
struct Counts {
    base: usize,
    atom: usize,
    over: Vec<usize>,
}

/// `P(S > s) = F(s)/F(ρ)` for a single `s`.
pub fn s_tail(s: f64, rho: f64, m: &ModelSpec, table: &LambdaTable, q: &QuadSpec, rng: RngStream) -> Result<(f64, f64)> {
    let law = s_law(rho, &[s], m, table, q, rng)?;
    Ok((law.tail[0].1, law.tail[0].2))
}

/// Hub weight-scales `y_1 ≥ … ≥ y_k > 0` defining the wave measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveSpec {
    pub ys: Vec<f64>,
}

impl WaveSpec {
    pub fn new(mut ys: Vec<f64>) -> Result<Self> {
        if ys.is_empty() || ys.iter().any(|y| !(*y > 0.0 && y.is_finite())) {
            return Err(contract("wave spec needs at least one positive weight-scale"));
        }
        ys.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { ys })
    }
}

/// `∫ f dμ_{y_1..y_k} = ∫_{[-1/2,1/2]^d} f(‖z‖) Σ_i Λ(y_i, z) dz`.
pub fn wave_integral(f: &RadialTestFn, spec: &WaveSpec, m: &ModelSpec, q: &QuadSpec) -> Result<Estimate> {
    let d = m.d;
    let r_max = 0.5 * (d as f64).sqrt();
    let pieces = q.quad_points_per_axis;
    let mut interior: Vec<f64> = (1..d).map(|j| 0.5 * (j as f64).sqrt()).collect();
    interior.extend(f.breakpoints());
    interior.extend(spec.ys.iter().map(|y| y.powf(1.0 / d as f64)));
    interior.extend((1..pieces).map(|i| r_max * i as f64 / pieces as f64));
    let points = crate::quadrature::breakpoints(0.0, r_max, interior);
    let closed = m.limiting_power() == 0.0 || matches!(m.profile, ProfileSpec::Indicator);
    let inner = q.inner_tol();
    let mut ok = true;
    let mut est = integrate(
        |r| {
            let fr = f.eval(r);
            if fr == 0.0 {
                return 0.0;
            }
            let mut sum = 0.0;
            for &y in &spec.ys {
                let e = big_lambda_r_inner(m, y, r, q, inner);
                ok &= e.converged;
                sum += e.value;
            }
            fr * sum * cube_sphere_area(r, d)
        },
        &points,
        q.tol(),
    );
    if !closed {
        est.error += inner.rel * est.value.abs();
    }
    est.converged &= ok;
    est.require("wave integral")
}
