use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::local::DegreeLaw;
use super::{QuadSpec, MC_SHARDS};
use crate::error::{contract, diagnostic, Result};
use crate::model::{pareto_quantile_unchecked, ModelSpec, VertexCase};
use crate::rng::RngStream;
use crate::sampler::Hub;
use crate::torus::distance_sq;

/// Grid points used to tabulate the degree law over `W`.
const W_GRID: usize = 257;

/// Monte-Carlo values of `π_{a,b}` for `a ≤ a_max`, `b ≤ k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiAbOracle {
    pub k: usize,
    pub a_max: usize,
    /// `values[a][b]`.
    pub values: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    /// `1 - Σ values`: mass with `a > a_max`.
    pub tail_mass: f64,
    pub samples: usize,
    /// Largest weight on the degree-law grid; beyond it `P(D_∞ ≤ a_max)` is
    /// below `1e-15` and is dropped.
    pub w_cap: f64,
}

impl PiAbOracle {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values.get(a).and_then(|r| r.get(b)).copied().unwrap_or(0.0)
    }
}

/// Degree law of the root as a function of `W`, tabulated on a log grid.
enum DegreeTable {
    /// `log λ_1` at the grid points; pmf evaluated exactly from the mean.
    Poisson { log_w: Vec<f64>, log_mean: Vec<f64> },
    /// Full pmf at the grid points, interpolated linearly in `log w`.
    Lattice { log_w: Vec<f64>, pmf: Vec<Vec<f64>> },
}

impl DegreeTable {
    fn build(m: &ModelSpec, a_max: usize, q: &QuadSpec) -> Result<(Self, f64)> {
        let negligible = |law: &DegreeLaw| law.pmf.iter().all(|&p| p < 1e-15);
        let mut w_cap = 2.0;
        loop {
            let law = DegreeLaw::new(m, w_cap, a_max, q)?;
            if negligible(&law) && law.mean > a_max as f64 {
                break;
            }
            w_cap *= 2.0;
            if w_cap > 1e15 {
                return Err(diagnostic("degree law does not leave [0, a_max] for any tabulated weight"));
            }
        }
        let top = w_cap.ln();
        let log_w: Vec<f64> = (0..W_GRID).map(|i| top * i as f64 / (W_GRID - 1) as f64).collect();
        let laws: Vec<DegreeLaw> = log_w
            .par_iter()
            .map(|&lw| DegreeLaw::new(m, lw.exp(), a_max, q))
            .collect::<Result<_>>()?;
        let table = match m.vertex_case {
            VertexCase::Poisson => DegreeTable::Poisson { log_mean: laws.iter().map(|l| l.mean.ln()).collect(), log_w },
            VertexCase::Lattice => DegreeTable::Lattice { pmf: laws.into_iter().map(|l| l.pmf).collect(), log_w },
        };
        Ok((table, w_cap))
    }

    fn locate(log_w: &[f64], w: f64) -> (usize, f64) {
        let x = w.ln();
        let step = log_w[1] - log_w[0];
        let i = ((x / step) as usize).min(log_w.len() - 2);
        (i, (x - log_w[i]) / step)
    }

    fn pmf_into(&self, w: f64, out: &mut [f64]) {
        match self {
            DegreeTable::Poisson { log_w, log_mean } => {
                let (i, s) = Self::locate(log_w, w);
                let lm = log_mean[i] + s * (log_mean[i + 1] - log_mean[i]);
                let lambda = lm.exp();
                let mut p = (-lambda).exp();
                for (a, slot) in out.iter_mut().enumerate() {
                    if a > 0 {
                        p *= lambda / a as f64;
                    }
                    *slot = p;
                }
            }
            DegreeTable::Lattice { log_w, pmf } => {
                let (i, s) = Self::locate(log_w, w);
                for (a, slot) in out.iter_mut().enumerate() {
                    *slot = pmf[i][a] + s * (pmf[i + 1][a] - pmf[i][a]);
                }
            }
        }
    }
}

#[derive(Default)]
struct Acc {
    sum: Vec<f64>,
    sq: Vec<f64>,
}

/// `π_{a,b} = E[P(D_∞(W) = a) · P(Σ_i B_i = b)]` with `B_i` independent
/// Bernoulli(`φ(d_1(U, u_i)^d / 𝒦(y_i, W))`), `U` uniform on the unit torus.
///
/// The degree law of the root is tabulated on a log grid in `W` (Poisson:
/// `log λ_1` interpolated linearly; lattice: pmf interpolated linearly).
pub fn pi_ab_oracle(hubs: &[Hub], a_max: usize, m: &ModelSpec, q: &QuadSpec, rng: RngStream) -> Result<PiAbOracle> {
    m.validate()?;
    q.validate()?;
    let k = hubs.len();
    if k == 0 {
        return Err(contract("π_{a,b} needs at least one hub"));
    }
    for h in hubs {
        h.validate(m.d)?;
    }
    let (table, w_cap) = DegreeTable::build(m, a_max, q)?;
    let cells = (a_max + 1) * (k + 1);
    let d = m.d;
    let n = q.mc_samples;
    let shards: Vec<Acc> = (0..MC_SHARDS)
        .into_par_iter()
        .map(|s| {
            let count = n / MC_SHARDS as usize + usize::from((s as usize) < n % MC_SHARDS as usize);
            let mut r = rng.substream(s).rng();
            let mut acc = Acc { sum: vec![0.0; cells], sq: vec![0.0; cells] };
            let mut pmf = vec![0.0; a_max + 1];
            let mut pb = vec![0.0; k + 1];
            let mut u = vec![0.0; d];
            for _ in 0..count {
                for c in u.iter_mut() {
                    *c = r.random::<f64>();
                }
                let w = pareto_quantile_unchecked(m.beta, r.random::<f64>());
                if w > w_cap {
                    continue;
                }
                table.pmf_into(w, &mut pmf);
                pb.iter_mut().for_each(|x| *x = 0.0);
                pb[0] = 1.0;
                for (i, h) in hubs.iter().enumerate() {
                    let dist = distance_sq(&u, &h.u, 1.0).sqrt();
                    let p = m.profile.eval(dist.powi(d as i32) / m.kernel.limiting(h.y, w));
                    for b in (1..=i + 1).rev() {
                        pb[b] = pb[b] * (1.0 - p) + pb[b - 1] * p;
                    }
                    pb[0] *= 1.0 - p;
                }
                for a in 0..=a_max {
                    for b in 0..=k {
                        let v = pmf[a] * pb[b];
                        acc.sum[a * (k + 1) + b] += v;
                        acc.sq[a * (k + 1) + b] += v * v;
                    }
                }
            }
            acc
        })
        .collect();
    let mut values = vec![vec![0.0; k + 1]; a_max + 1];
    let mut stderr = vec![vec![0.0; k + 1]; a_max + 1];
    let nf = n as f64;
    for a in 0..=a_max {
        for b in 0..=k {
            let c = a * (k + 1) + b;
            let s: f64 = shards.iter().map(|x| x.sum[c]).sum();
            let s2: f64 = shards.iter().map(|x| x.sq[c]).sum();
            let mean = s / nf;
            values[a][b] = mean;
            stderr[a][b] = ((s2 / nf - mean * mean).max(0.0) / nf).sqrt();
        }
    }
    let total: f64 = values.iter().flatten().sum();
    Ok(PiAbOracle { k, a_max, values, stderr, tail_mass: (1.0 - total).max(0.0), samples: n, w_cap })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_connection_gives_marginal_degree_law() {
        // Boolean d=1, y = 0.6: 𝒦(y, W) = 0.6 ≥ d_1(U, u) for every U.
        let m = ModelSpec::boolean(1, 3.0).unwrap();
        let q = QuadSpec { mc_samples: 200_000, ..QuadSpec::default() };
        let hubs = vec![Hub { u: vec![0.5], y: 0.6 }];
        let o = pi_ab_oracle(&hubs, 30, &m, &q, RngStream::new(3, 0)).unwrap();
        for a in 0..=30 {
            assert_eq!(o.get(a, 0), 0.0);
        }
        // Marginal P(D_∞(W) = 0) = E e^{-2(W+2)} by quadrature.
        let p0 = crate::quadrature::integrate(
            |u: f64| (-2.0 * (crate::model::weight_quantile(3.0, u).unwrap() + 2.0)).exp(),
            &[0.0, 1.0],
            crate::quadrature::Tolerance::default(),
        )
        .value;
        assert!((o.get(0, 1) - p0).abs() < 4.0 * o.stderr[0][1] + 1e-4, "{} vs {p0}", o.get(0, 1));
    }

    #[test]
    fn degree_table_interpolation_between_nodes() {
        let mut lattice = ModelSpec::boolean(1, 3.0).unwrap();
        lattice.vertex_case = VertexCase::Lattice;
        // The lattice far-field bracket is wider than the default abs_tol.
        for (m, q) in [
            (ModelSpec::boolean(1, 3.0).unwrap(), QuadSpec::default()),
            (lattice, QuadSpec { abs_tol: 1e-5, ..QuadSpec::default() }),
        ] {
            let (table, _) = DegreeTable::build(&m, 10, &q).unwrap();
            let log_w = match &table {
                DegreeTable::Poisson { log_w, .. } | DegreeTable::Lattice { log_w, .. } => log_w.clone(),
            };
            let mut worst: f64 = 0.0;
            let mut got = vec![0.0; 11];
            for pair in log_w.windows(2).step_by(7) {
                let w = (0.5 * (pair[0] + pair[1])).exp();
                if w < 1.0 {
                    continue;
                }
                table.pmf_into(w, &mut got);
                let exact = DegreeLaw::new(&m, w, 10, &q).unwrap();
                for a in 0..=10 {
                    worst = worst.max((got[a] - exact.pmf[a]).abs());
                }
            }
            assert!(worst < 2e-3, "{:?}: {worst}", m.vertex_case);
        }
    }

    #[test]
    fn total_mass_approaches_one() {
        let m = ModelSpec::boolean(1, 3.0).unwrap();
        let q = QuadSpec { mc_samples: 50_000, ..QuadSpec::default() };
        let hubs = vec![Hub { u: vec![0.2], y: 0.3 }, Hub { u: vec![0.7], y: 0.6 }];
        let small = pi_ab_oracle(&hubs, 10, &m, &q, RngStream::new(1, 0)).unwrap();
        let large = pi_ab_oracle(&hubs, 60, &m, &q, RngStream::new(1, 0)).unwrap();
        assert!(large.tail_mass < small.tail_mass);
        // Summing over b leaves P(D_∞ > 60) = E P(Poisson(2(W + 2)) > 60).
        let tail = crate::quadrature::integrate(
            |u: f64| {
                let lam = 2.0 * (crate::model::weight_quantile(3.0, u.min(1.0 - 1e-17)).unwrap() + 2.0);
                let mut p = (-lam).exp();
                let mut cdf = p;
                for a in 1..=60 {
                    p *= lam / a as f64;
                    cdf += p;
                }
                (1.0 - cdf).max(0.0)
            },
            &[0.0, 0.9, 0.99, 0.999, 1.0],
            crate::quadrature::Tolerance::default(),
        )
        .value;
        let se = (tail / 50_000.0).sqrt();
        assert!((large.tail_mass - tail).abs() < 4.0 * se, "{} vs {tail}", large.tail_mass);
    }

    #[test]
    fn rejects_bad_hubs() {
        let m = ModelSpec::boolean(1, 3.0).unwrap();
        let q = QuadSpec { mc_samples: 1000, ..QuadSpec::default() };
        assert!(pi_ab_oracle(&[], 5, &m, &q, RngStream::new(1, 0)).is_err());
        let bad = vec![Hub { u: vec![1.2], y: 0.3 }];
        assert!(pi_ab_oracle(&bad, 5, &m, &q, RngStream::new(1, 0)).is_err());
    }
}
