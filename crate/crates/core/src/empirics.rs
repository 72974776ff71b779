//! Statistics of sampled graphs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::model::ModelSpec;
use crate::rng::RngStream;
use crate::sampler::{count_edges, sample_vertices, SampledGraph};

/// Exponents of the short/long/high-weight edge split: `ε_n = n^{-γ/d}` and
/// weight cut `n^a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgePartitionParams {
    pub gamma_exp: f64,
    pub a_exp: f64,
}

/// `1/α`, with the indicator treated as `α = ∞`.
fn inv_alpha(m: &ModelSpec) -> f64 {
    m.profile.tail_alpha().map_or(0.0, |a| 1.0 / a)
}

impl EdgePartitionParams {
    /// Midpoints of the admissible ranges.
    pub fn defaults(m: &ModelSpec) -> Self {
        let ia = inv_alpha(m);
        let gamma_exp = 0.5 * (1.0 - ia).min(1.0 / m.d as f64);
        let a_exp = 0.5 * (1.0 - gamma_exp - ia).min(0.5) / (m.beta - 1.0).max(2.0);
        Self { gamma_exp, a_exp }
    }

    pub fn validate(&self, m: &ModelSpec) -> Result<()> {
        let ia = inv_alpha(m);
        let g_hi = (1.0 - ia).min(1.0 / m.d as f64);
        if !(self.gamma_exp > 0.0 && self.gamma_exp < g_hi) {
            return Err(contract(format!("gamma_exp must lie in (0, {g_hi}), got {}", self.gamma_exp)));
        }
        let a_hi = (1.0 - self.gamma_exp - ia).min(0.5) / (m.beta - 1.0).max(2.0);
        if !(self.a_exp > 0.0 && self.a_exp < a_hi) {
            return Err(contract(format!("a_exp must lie in (0, {a_hi}) for gamma_exp = {}, got {}", self.gamma_exp, self.a_exp)));
        }
        Ok(())
    }

    /// Length threshold `ε_n n^{1/d} = n^{(1-γ)/d}`.
    pub fn length_cut(&self, n: f64, d: usize) -> f64 {
        n.powf((1.0 - self.gamma_exp) / d as f64)
    }

    pub fn weight_cut(&self, n: f64) -> f64 {
        n.powf(self.a_exp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PartitionCounts {
    pub main: u64,
    pub long: u64,
    pub high: u64,
}

impl PartitionCounts {
    pub fn total(&self) -> u64 {
        self.main + self.long + self.high
    }
}

/// Splits `E_n` into short edges between low-weight vertices (`main`), long
/// edges between low-weight vertices (`long`) and edges touching a vertex of
/// weight above `n^a` (`high`).
pub fn partition_edges(g: &SampledGraph, p: &EdgePartitionParams, m: &ModelSpec) -> Result<PartitionCounts> {
    p.validate(m)?;
    let n = g.n();
    let len_cut = p.length_cut(n, m.d);
    let w_cut = p.weight_cut(n);
    let w = &g.vertices.weights;
    let mut c = PartitionCounts::default();
    for e in &g.edges {
        if w[e.i] > w_cut || w[e.j] > w_cut {
            c.high += 1;
        } else if e.length <= len_cut {
            c.main += 1;
        } else {
            c.long += 1;
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Absolute lengths.
    Fixed,
    /// Lengths divided by `n^{1/d}`.
    Macroscopic,
}

/// Edge counts per length bin, divided by `n`. Bin `i` is
/// `(edges[i], edges[i+1]]`, except that the first bin also contains its left
/// end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthHistogram {
    pub scale: Scale,
    pub bin_edges: Vec<f64>,
    pub masses: Vec<f64>,
}

impl LengthHistogram {
    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

pub fn length_histogram(g: &SampledGraph, scale: Scale, bin_edges: &[f64]) -> Result<LengthHistogram> {
    if bin_edges.len() < 2 || bin_edges.windows(2).any(|w| !(w[1] > w[0])) || !(bin_edges[0] >= 0.0) {
        return Err(contract("histogram bin edges must be nonnegative and strictly increasing"));
    }
    let n = g.n();
    let unit = match scale {
        Scale::Fixed => 1.0,
        Scale::Macroscopic => n.powf(1.0 / g.vertices.spec.d as f64),
    };
    let mut counts = vec![0u64; bin_edges.len() - 1];
    for e in &g.edges {
        let x = e.length / unit;
        if x < bin_edges[0] || x > bin_edges[bin_edges.len() - 1] {
            continue;
        }
        // First edge ≥ x closes the bin; x equal to the left end joins bin 0.
        let idx = bin_edges.partition_point(|&b| b < x).max(1) - 1;
        counts[idx] += 1;
    }
    Ok(LengthHistogram {
        scale,
        bin_edges: bin_edges.to_vec(),
        masses: counts.into_iter().map(|c| c as f64 / n).collect(),
    })
}

/// Vertex indices of the `k` largest weights, by decreasing weight and then
/// increasing index.
pub fn top_k(weights: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    let cmp = |a: &usize, b: &usize| weights[*b].total_cmp(&weights[*a]).then(a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_by(cmp);
    idx
}

/// Joint counts of (non-hub degree `a`, hub degree `b`) over all vertices,
/// hubs being the `k` largest weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeJoint {
    pub k: usize,
    pub a_max: usize,
    /// `counts[a][b]` for `a ≤ a_max`.
    pub counts: Vec<Vec<u64>>,
    /// `overflow[b]`: vertices with `a > a_max`.
    pub overflow: Vec<u64>,
    pub normalizer: usize,
}

impl DegreeJoint {
    /// `π^{(n)}_{a,b}`.
    pub fn pi(&self, a: usize, b: usize) -> f64 {
        if self.normalizer == 0 {
            return 0.0;
        }
        self.counts.get(a).and_then(|r| r.get(b)).map_or(0.0, |&c| c as f64 / self.normalizer as f64)
    }
}

pub fn degree_joint(g: &SampledGraph, k: usize, a_max: usize) -> Result<DegreeJoint> {
    let nv = g.vertices.len();
    if k >= nv.max(1) {
        return Err(contract(format!("k = {k} needs more than k vertices, graph has {nv}")));
    }
    let mut is_hub = vec![false; nv];
    for h in top_k(&g.vertices.weights, k) {
        is_hub[h] = true;
    }
    let mut a = vec![0usize; nv];
    let mut b = vec![0usize; nv];
    for e in &g.edges {
        if is_hub[e.j] { b[e.i] += 1 } else { a[e.i] += 1 }
        if is_hub[e.i] { b[e.j] += 1 } else { a[e.j] += 1 }
    }
    let mut counts = vec![vec![0u64; k + 1]; a_max + 1];
    let mut overflow = vec![0u64; k + 1];
    for x in 0..nv {
        if a[x] <= a_max {
            counts[a[x]][b[x]] += 1;
        } else {
            overflow[b[x]] += 1;
        }
    }
    Ok(DegreeJoint { k, a_max, counts, overflow, normalizer: nv })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubReport {
    pub indices: Vec<usize>,
    pub top_weights: Vec<f64>,
    pub hub_degrees: Vec<usize>,
    pub hub_degrees_scaled: Vec<f64>,
    /// All hubs pairwise adjacent.
    pub clique: bool,
    /// Present for planted graphs, in plan order.
    pub snap_displacements: Vec<f64>,
}

pub fn hub_report(g: &SampledGraph, k: usize) -> Result<HubReport> {
    if k > g.vertices.len() {
        return Err(contract(format!("k = {k} exceeds the vertex count {}", g.vertices.len())));
    }
    let indices = top_k(&g.vertices.weights, k);
    let deg = g.degrees();
    let n = g.n();
    let hub_degrees: Vec<usize> = indices.iter().map(|&i| deg[i]).collect();
    let clique = indices
        .iter()
        .enumerate()
        .all(|(s, &i)| indices[s + 1..].iter().all(|&j| g.has_edge(i, j)));
    Ok(HubReport {
        top_weights: indices.iter().map(|&i| g.vertices.weights[i]).collect(),
        hub_degrees_scaled: hub_degrees.iter().map(|&d| d as f64 / n).collect(),
        hub_degrees,
        clique,
        snap_displacements: g.planted.iter().map(|p| p.displacement).collect(),
        indices,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeBin {
    pub lo: f64,
    pub hi: f64,
    /// Mean weight of the vertices in the bin (NaN when empty).
    pub mean_weight: f64,
    pub mean_degree: f64,
    pub count: u64,
}

/// Mean degree of vertices with weight in `(lo, hi]`, pooled over replicas.
pub fn conditional_mean_degree(replicas: &[SampledGraph], weight_bins: &[f64]) -> Result<Vec<DegreeBin>> {
    if replicas.is_empty() {
        return Err(contract("conditional mean degree needs at least one replica"));
    }
    if weight_bins.len() < 2 || weight_bins.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(contract("weight bins must be strictly increasing"));
    }
    let nb = weight_bins.len() - 1;
    let mut sum_w = vec![0.0; nb];
    let mut sum_d = vec![0.0; nb];
    let mut count = vec![0u64; nb];
    for g in replicas {
        let deg = g.degrees();
        for (i, &w) in g.vertices.weights.iter().enumerate() {
            if w <= weight_bins[0] || w > weight_bins[nb] {
                continue;
            }
            let b = weight_bins.partition_point(|&e| e < w) - 1;
            sum_w[b] += w;
            sum_d[b] += deg[i] as f64;
            count[b] += 1;
        }
    }
    Ok((0..nb)
        .map(|b| {
            let c = count[b] as f64;
            DegreeBin {
                lo: weight_bins[b],
                hi: weight_bins[b + 1],
                mean_weight: if count[b] > 0 { sum_w[b] / c } else { f64::NAN },
                mean_degree: if count[b] > 0 { sum_d[b] / c } else { f64::NAN },
                count: count[b],
            }
        })
        .collect())
}

/// Smallest and largest `mean_degree / mean_weight` over populated bins with
/// mean weight at most `w_max`: witness constants for `c w ≤ E[D | W = w] ≤ C w`.
pub fn linear_bound_witness(bins: &[DegreeBin], w_max: f64) -> Option<(f64, f64)> {
    let ratios: Vec<f64> = bins
        .iter()
        .filter(|b| b.count > 0 && b.mean_weight <= w_max)
        .map(|b| b.mean_degree / b.mean_weight)
        .collect();
    if ratios.is_empty() {
        return None;
    }
    Some((ratios.iter().copied().fold(f64::INFINITY, f64::min), ratios.iter().copied().fold(0.0, f64::max)))
}

/// Wilson score interval at 95%.
pub fn wilson_interval(hits: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = hits as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub n: f64,
    pub replicas: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    /// Included in the slope fit (at least 10 hits).
    pub used: bool,
    /// `W_(1)/n` for every hit replica: draws of the conditioned top weight.
    pub conditioned_top_weight: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Residual-based standard error, absent with only two points.
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailScan {
    pub rho: f64,
    pub mu: f64,
    pub points: Vec<TailPoint>,
    /// Least-squares slope of `log P̂` on `log n`, needs two used points.
    pub slope: Option<SlopeFit>,
}

impl TailScan {
    /// Estimates decrease along `n`, up to overlap of the Wilson intervals.
    pub fn monotone(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].p_hat <= w[0].p_hat || w[1].wilson_lo <= w[0].wilson_hi)
    }
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<SlopeFit> {
    let m = xs.len();
    if m < 2 || ys.len() != m {
        return None;
    }
    let mf = m as f64;
    let mx = xs.iter().sum::<f64>() / mf;
    let my = ys.iter().sum::<f64>() / mf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = (m > 2).then(|| {
        let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (ssr / (mf - 2.0) / sxx).sqrt()
    });
    Some(SlopeFit { slope, intercept, stderr })
}

/// Naive Monte-Carlo estimates of `P(|E_n| ≥ n(μ + ρ))` across `n_values`.
/// Replica `r` at the `i`-th `n` uses substream `(i, r)` of `rng`.
pub fn tail_probability_naive(
    m: &ModelSpec,
    n_values: &[f64],
    rho: f64,
    mu: f64,
    replicas_per_n: u64,
    rng: RngStream,
) -> Result<TailScan> {
    crate::theory::rho_order(rho)?;
    m.validate()?;
    let mut points = Vec::with_capacity(n_values.len());
    for (ni, &n) in n_values.iter().enumerate() {
        let base = rng.substream(ni as u64);
        let threshold = n * (mu + rho);
        let outcomes: Vec<Option<f64>> = (0..replicas_per_n)
            .into_par_iter()
            .map(|r| -> Result<Option<f64>> {
                let s = base.substream(r);
                let v = sample_vertices(m, n, s.substream(1))?;
                let e = count_edges(&v, m, s.substream(2))?;
                Ok((e as f64 >= threshold).then(|| v.weights.iter().copied().fold(0.0, f64::max) / n))
            })
            .collect::<Result<_>>()?;
        let conditioned_top_weight: Vec<f64> = outcomes.into_iter().flatten().collect();
        let hits = conditioned_top_weight.len() as u64;
        let (wilson_lo, wilson_hi) = wilson_interval(hits, replicas_per_n);
        points.push(TailPoint {
            n,
            replicas: replicas_per_n,
            hits,
            p_hat: if replicas_per_n > 0 { hits as f64 / replicas_per_n as f64 } else { 0.0 },
            wilson_lo,
            wilson_hi,
            used: hits >= 10,
            conditioned_top_weight,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().filter(|p| p.used).map(|p| (p.n.ln(), p.p_hat.ln())).unzip();
    Ok(TailScan { rho, mu, slope: least_squares(&xs, &ys), points })
}
