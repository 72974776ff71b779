//! Sampling the random connection model, planting condensates and drawing
//! hub weight-scales from the Y-law.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, diagnostic, Error, Result};
use crate::model::{pareto_quantile_unchecked, KernelSpec, ModelSpec, ProfileSpec, VertexCase};
use crate::rng::{pair_uniform, RngStream};
use crate::theory::LambdaTable;
use crate::torus::{build_cell_grid, distance_sq, TorusPoint, TorusSpec};

const TAG_COUNT: u64 = 1;
const TAG_POSITIONS: u64 = 2;
const TAG_WEIGHTS: u64 = 3;

/// Vertex positions (flat, `d` coordinates per vertex) and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexSet {
    pub spec: TorusSpec,
    pub coords: Vec<f64>,
    pub weights: Vec<f64>,
    pub case: VertexCase,
}

impl VertexSet {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.coords[i * self.spec.d..(i + 1) * self.spec.d]
    }

    pub fn point(&self, i: usize) -> TorusPoint {
        TorusPoint { coords: self.position(i).to_vec() }
    }

    /// Builds a vertex set from explicit positions, wrapping coordinates.
    pub fn from_parts(spec: TorusSpec, positions: &[Vec<f64>], weights: Vec<f64>, case: VertexCase) -> Result<Self> {
        if positions.len() != weights.len() {
            return Err(contract("positions and weights differ in length"));
        }
        if weights.iter().any(|w| !(*w >= 1.0)) {
            return Err(contract("weights must be at least 1"));
        }
        let mut coords = Vec::with_capacity(positions.len() * spec.d);
        for p in positions {
            coords.extend(spec.wrap(p)?.coords);
        }
        Ok(Self { spec, coords, weights, case })
    }
}

/// An edge `{i, j}` with `i < j` and its torus length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub length: f64,
}

/// Planned hub: location `u` on the unit torus and weight-scale `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hub {
    pub u: Vec<f64>,
    pub y: f64,
}

impl Hub {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.u.len() != d {
            return Err(contract(format!("hub location has {} coordinates, expected {d}", self.u.len())));
        }
        if self.u.iter().any(|c| !(0.0..1.0).contains(c)) {
            return Err(contract("hub locations must lie in [0, 1)^d"));
        }
        if !(self.y > 0.0 && self.y.is_finite()) {
            return Err(contract(format!("hub weight-scale must be positive, got {}", self.y)));
        }
        Ok(())
    }
}

/// `k` hubs sorted by decreasing weight-scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensatePlan {
    pub hubs: Vec<Hub>,
}

impl CondensatePlan {
    pub fn new(mut hubs: Vec<Hub>, d: usize) -> Result<Self> {
        if hubs.is_empty() {
            return Err(contract("a condensate plan needs k >= 1 hubs"));
        }
        for h in &hubs {
            h.validate(d)?;
        }
        hubs.sort_by(|a, b| b.y.total_cmp(&a.y));
        Ok(Self { hubs })
    }

    pub fn k(&self) -> usize {
        self.hubs.len()
    }
}

/// Where a planned hub ended up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedHub {
    pub vertex: usize,
    pub u: Vec<f64>,
    pub y: f64,
    /// Torus distance between `n^{1/d} u` and the chosen vertex.
    pub displacement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledGraph {
    pub vertices: VertexSet,
    /// Sorted by `(i, j)`.
    pub edges: Vec<Edge>,
    pub seed: u64,
    pub planted: Vec<PlantedHub>,
}

impl SampledGraph {
    /// Torus volume `n`.
    pub fn n(&self) -> f64 {
        self.vertices.spec.volume
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.vertices.len()];
        for e in &self.edges {
            deg[e.i] += 1;
            deg[e.j] += 1;
        }
        deg
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        self.edges
            .binary_search_by(|e| (e.i, e.j).cmp(&(i, j)))
            .is_ok()
    }
}

/// Pair iteration strategy for [`sample_edges`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMode {
    /// Every pair is tested.
    Naive,
    /// Cell-grid neighbour search. Pairs are skipped only for the indicator
    /// profile, where skipping is exact; other profiles test every pair.
    #[default]
    GridAssisted,
}

/// Draws vertex positions and Pareto weights.
pub fn sample_vertices(m: &ModelSpec, n: f64, rng: RngStream) -> Result<VertexSet> {
    m.validate()?;
    let d = m.d;
    match m.vertex_case {
        VertexCase::Lattice => {
            let side = n.powf(1.0 / d as f64);
            let s = side.round();
            if !(s >= 1.0) || (side - s).abs() > 1e-9 * s.max(1.0) {
                return Err(contract(format!("lattice case needs n^(1/d) to be an integer, got {side}")));
            }
            let s = s as usize;
            let spec = TorusSpec::new(d, (s as f64).powi(d as i32))?;
            let count = s.pow(d as u32);
            let mut coords = Vec::with_capacity(count * d);
            for i in 0..count {
                let mut rest = i;
                for _ in 0..d {
                    coords.push((rest % s) as f64);
                    rest /= s;
                }
            }
            let weights = draw_weights(m.beta, count, rng);
            Ok(VertexSet { spec, coords, weights, case: VertexCase::Lattice })
        }
        VertexCase::Poisson => {
            let spec = TorusSpec::new(d, n)?;
            let count = Poisson::new(n)
                .map_err(|e| contract(format!("Poisson intensity {n}: {e}")))?
                .sample(&mut rng.substream(TAG_COUNT).rng()) as usize;
            let mut r = rng.substream(TAG_POSITIONS).rng();
            let coords = (0..count * d).map(|_| r.random::<f64>() * spec.side).collect();
            let weights = draw_weights(m.beta, count, rng);
            Ok(VertexSet { spec, coords, weights, case: VertexCase::Poisson })
        }
    }
}

fn draw_weights(beta: f64, count: usize, rng: RngStream) -> Vec<f64> {
    let mut r = rng.substream(TAG_WEIGHTS).rng();
    (0..count).map(|_| pareto_quantile_unchecked(beta, r.random::<f64>())).collect()
}

/// The per-pair connection test: `{i, j}` is present iff
/// `U_{ij} < φ(d(x_i, x_j)^d / κ(W_i, W_j))` with `U_{ij}` the counter-based
/// uniform of the pair.
#[derive(Clone, Copy)]
struct Connector {
    d: usize,
    side: f64,
    profile: ProfileSpec,
    kernel: KernelSpec,
    alpha_int: Option<i32>,
    key: u64,
}

impl Connector {
    fn new(m: &ModelSpec, side: f64, key: u64) -> Self {
        let alpha_int = m.profile.tail_alpha().filter(|a| a.fract() == 0.0 && *a <= 16.0).map(|a| a as i32);
        Self { d: m.d, side, profile: m.profile, kernel: m.kernel, alpha_int, key }
    }

    #[inline(always)]
    fn pow_neg(&self, x: f64, alpha: f64) -> f64 {
        match self.alpha_int {
            Some(a) => 1.0 / x.powi(a),
            None => x.powf(-alpha),
        }
    }

    /// Returns the length if `{i, j}` is an edge.
    #[inline(always)]
    fn test(&self, i: usize, j: usize, xi: &[f64], xj: &[f64], wi: f64, wj: f64) -> Option<f64> {
        let d2 = distance_sq(xi, xj, self.side);
        let rd = match self.d {
            1 => d2.sqrt(),
            2 => d2,
            d => d2.powf(0.5 * d as f64),
        };
        let x = rd / self.kernel.eval_unchecked(wi, wj);
        let hit = match self.profile {
            ProfileSpec::Indicator => x <= 1.0,
            ProfileSpec::PolynomialTail { alpha } => x <= 1.0 || pair_uniform(self.key, i, j) < self.pow_neg(x, alpha),
            ProfileSpec::StretchedExp { alpha } => {
                if x <= 0.0 {
                    true
                } else {
                    // 1 - e^{-t} ≤ t rejects most pairs before the exponential.
                    let t = self.pow_neg(x, alpha);
                    let u = pair_uniform(self.key, i, j);
                    u < t && u < -(-t).exp_m1()
                }
            }
        };
        hit.then(|| d2.sqrt())
    }
}

fn target_cell_side(m: &ModelSpec, spec: &TorusSpec) -> f64 {
    m.kernel
        .eval_unchecked(1.0, 1.0)
        .powf(1.0 / m.d as f64)
        .max(1.0)
        .min(spec.side)
}

/// Calls `visit(i, j, length)` for every edge, grouped by the visiting vertex
/// `i` (each group in parallel); returns the per-vertex outputs in order.
fn for_each_vertex_edges<T: Send>(
    v: &VertexSet,
    c: &Connector,
    mode: EdgeMode,
    make: impl Fn() -> T + Sync,
    visit: impl Fn(&mut T, usize, usize, f64) + Sync,
) -> Result<Vec<T>> {
    let n = v.len();
    let compact = matches!(c.profile, ProfileSpec::Indicator);
    if mode == EdgeMode::Naive || !compact || n < 2 {
        return Ok((0..n)
            .into_par_iter()
            .with_min_len(64)
            .map(|i| {
                let mut out = make();
                let xi = v.position(i);
                let wi = v.weights[i];
                for j in (i + 1)..n {
                    if let Some(len) = c.test(i, j, xi, v.position(j), wi, v.weights[j]) {
                        visit(&mut out, i, j, len);
                    }
                }
                out
            })
            .collect());
    }
    // Each pair is examined from its endpoint with the larger (weight, index);
    // since κ is nondecreasing, κ(W_i, W_j) ≤ κ(W_i, W_i) for that endpoint, so
    // no edge can be longer than κ(W_i, W_i)^{1/d}.
    let m_like = ModelSpec { d: c.d, beta: 3.0, profile: c.profile, kernel: c.kernel, vertex_case: v.case };
    let grid = build_cell_grid(&v.coords, &v.spec, target_cell_side(&m_like, &v.spec))?;
    let inv_d = 1.0 / c.d as f64;
    Ok((0..n)
        .into_par_iter()
        .with_min_len(256)
        .map(|i| {
            let mut out = make();
            let xi = v.position(i);
            let wi = v.weights[i];
            let radius = c.kernel.eval_unchecked(wi, wi).powf(inv_d);
            grid.for_each_bucket_near(xi, radius, |bucket| {
                for &j in bucket {
                    let j = j as usize;
                    let wj = v.weights[j];
                    if wj < wi || (wj == wi && j < i) {
                        if let Some(len) = c.test(i, j, xi, v.position(j), wi, wj) {
                            visit(&mut out, i, j, len);
                        }
                    }
                }
            });
            out
        })
        .collect())
}

/// Samples the edge set. Both modes return the same edges for the same
/// stream: the randomness of each pair depends only on `(key, i, j)`.
pub fn sample_edges(v: &VertexSet, m: &ModelSpec, rng: RngStream, mode: EdgeMode) -> Result<SampledGraph> {
    check_consistent(v, m)?;
    let c = Connector::new(m, v.spec.side, rng.pair_key());
    let groups = for_each_vertex_edges(v, &c, mode, Vec::new, |out: &mut Vec<Edge>, i, j, length| {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        out.push(Edge { i, j, length });
    })?;
    let mut edges: Vec<Edge> = groups.concat();
    edges.sort_by(|a, b| (a.i, a.j).cmp(&(b.i, b.j)));
    Ok(SampledGraph { vertices: v.clone(), edges, seed: rng.seed, planted: Vec::new() })
}

/// `|E_n|` without materialising the edge list.
pub fn count_edges(v: &VertexSet, m: &ModelSpec, rng: RngStream) -> Result<u64> {
    check_consistent(v, m)?;
    let c = Connector::new(m, v.spec.side, rng.pair_key());
    let groups = for_each_vertex_edges(v, &c, EdgeMode::GridAssisted, || 0u64, |out, _, _, _| *out += 1)?;
    Ok(groups.into_iter().sum())
}

fn check_consistent(v: &VertexSet, m: &ModelSpec) -> Result<()> {
    m.validate()?;
    if v.spec.d != m.d || v.case != m.vertex_case {
        return Err(contract("vertex set does not match the model (dimension or vertex case)"));
    }
    Ok(())
}

fn nearest_vertex(v: &VertexSet, target: &[f64]) -> usize {
    match v.case {
        VertexCase::Lattice => {
            let s = v.spec.side.round() as usize;
            let mut idx = 0usize;
            for axis in (0..v.spec.d).rev() {
                let c = (target[axis].round() as usize) % s;
                idx = idx * s + c;
            }
            idx
        }
        VertexCase::Poisson => {
            let mut best = (f64::INFINITY, 0usize);
            for i in 0..v.len() {
                let d2 = distance_sq(v.position(i), target, v.spec.side);
                if d2 < best.0 {
                    best = (d2, i);
                }
            }
            best.1
        }
    }
}

/// Plants the hubs of `plan`: the vertex nearest to `n^{1/d} u_i` receives
/// weight `y_i n` and all edges incident to hubs are resampled with a fresh
/// pair stream. Other edges are untouched.
///
/// Fails with [`Error::Infeasible`] if some non-hub weight exceeds the
/// smallest hub weight (resample the base graph in that case).
pub fn plant_condensate(g: &SampledGraph, plan: &CondensatePlan, m: &ModelSpec, rng: RngStream) -> Result<SampledGraph> {
    let v = &g.vertices;
    check_consistent(v, m)?;
    let d = m.d;
    let n = v.spec.volume;
    if plan.k() > v.len() {
        return Err(contract(format!("plan has {} hubs but the graph has {} vertices", plan.k(), v.len())));
    }
    let mut planted = Vec::with_capacity(plan.k());
    for h in &plan.hubs {
        h.validate(d)?;
        let target: Vec<f64> = h.u.iter().map(|c| c * v.spec.side).collect();
        let vertex = nearest_vertex(v, &target);
        if planted.iter().any(|p: &PlantedHub| p.vertex == vertex) {
            return Err(contract(format!("two hubs map to the same vertex {vertex}")));
        }
        let displacement = distance_sq(v.position(vertex), &target, v.spec.side).sqrt();
        planted.push(PlantedHub { vertex, u: h.u.clone(), y: h.y, displacement });
    }
    let mut is_hub = vec![false; v.len()];
    for p in &planted {
        is_hub[p.vertex] = true;
    }
    let mut weights = v.weights.clone();
    for p in &planted {
        weights[p.vertex] = (p.y * n).max(1.0);
    }
    let min_hub = planted.iter().map(|p| weights[p.vertex]).fold(f64::INFINITY, f64::min);
    if let Some(w) = (0..v.len()).filter(|&i| !is_hub[i]).map(|i| v.weights[i]).find(|&w| w >= min_hub) {
        return Err(Error::Infeasible(format!(
            "a non-hub weight {w:.3} exceeds the smallest hub weight {min_hub:.3}; resample the base graph or raise n"
        )));
    }
    let vertices = VertexSet { weights, ..v.clone() };
    let c = Connector::new(m, v.spec.side, rng.pair_key());
    let mut edges: Vec<Edge> = g.edges.iter().filter(|e| !is_hub[e.i] && !is_hub[e.j]).copied().collect();
    let new_edges: Vec<Vec<Edge>> = planted
        .par_iter()
        .map(|p| {
            let h = p.vertex;
            let (xh, wh) = (vertices.position(h), vertices.weights[h]);
            let mut out = Vec::new();
            for j in 0..vertices.len() {
                // Hub pairs are handled once, from the hub with the smaller index.
                if j == h || (is_hub[j] && j < h) {
                    continue;
                }
                if let Some(length) = c.test(h, j, xh, vertices.position(j), wh, vertices.weights[j]) {
                    let (i, j) = if h < j { (h, j) } else { (j, h) };
                    out.push(Edge { i, j, length });
                }
            }
            out
        })
        .collect();
    edges.extend(new_edges.into_iter().flatten());
    edges.sort_by(|a, b| (a.i, a.j).cmp(&(b.i, b.j)));
    Ok(SampledGraph { vertices, edges, seed: g.seed, planted })
}

/// Samples a base graph and plants `plan`, redrawing the base graph (with a
/// new substream) when a non-hub weight exceeds a hub weight.
pub fn sample_planted(m: &ModelSpec, n: f64, plan: &CondensatePlan, rng: RngStream, mode: EdgeMode) -> Result<SampledGraph> {
    for attempt in 0..32 {
        let base = rng.substream(attempt);
        let v = sample_vertices(m, n, base.substream(1))?;
        let g = sample_edges(&v, m, base.substream(2), mode)?;
        match plant_condensate(&g, plan, m, base.substream(3)) {
            Err(Error::Infeasible(_)) => continue,
            other => return other,
        }
    }
    Err(Error::Infeasible("32 base graphs in a row had a non-hub weight above a hub weight; raise n".into()))
}

/// Rejection sampler for the Y-law: `k` i.i.d. Pareto proposals with density
/// `∝ y^{-β}` on `[b*, ∞)`, sorted decreasingly, accepted iff
/// `Σ Λ(y_i) > ρ`.
pub struct YLawSampler<'a> {
    pub rho: f64,
    pub k: usize,
    pub b_star: f64,
    beta: f64,
    table: &'a LambdaTable,
}

const MAX_PROPOSALS: u64 = 10_000_000;

impl<'a> YLawSampler<'a> {
    pub fn new(rho: f64, m: &ModelSpec, table: &'a LambdaTable) -> Result<Self> {
        let k = crate::theory::rho_order(rho)?;
        if table.model != *m {
            return Err(contract("Λ table was built for a different model"));
        }
        let b_star = table.inverse_sup(rho - (k as f64 - 1.0))?;
        Ok(Self { rho, k, b_star, beta: m.beta, table })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let mut ys = vec![0.0; self.k];
        for _ in 0..MAX_PROPOSALS {
            for y in ys.iter_mut() {
                *y = self.b_star * pareto_quantile_unchecked(self.beta, rng.random::<f64>());
            }
            let s: f64 = ys.iter().map(|&y| self.table.eval(y)).sum();
            if s > self.rho {
                ys.sort_by(|a, b| b.total_cmp(a));
                return Ok(ys);
            }
        }
        Err(diagnostic(format!(
            "Y-law acceptance below 1e-6 after {MAX_PROPOSALS} proposals (ρ = {}, b* = {})",
            self.rho, self.b_star
        )))
    }

    /// `count` draws split over fixed shards of `rng`.
    pub fn sample_many(&self, count: usize, rng: RngStream) -> Result<Vec<Vec<f64>>> {
        let shards = crate::theory::MC_SHARDS;
        let parts: Vec<Result<Vec<Vec<f64>>>> = (0..shards)
            .into_par_iter()
            .map(|s| {
                let c = count / shards as usize + usize::from((s as usize) < count % shards as usize);
                let mut r = rng.substream(s).rng();
                (0..c).map(|_| self.sample(&mut r)).collect()
            })
            .collect();
        let mut out = Vec::with_capacity(count);
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}

/// One draw `(Y_1 ≥ … ≥ Y_k)` from the Y-law.
pub fn sample_y_law(rho: f64, m: &ModelSpec, table: &LambdaTable, rng: RngStream) -> Result<Vec<f64>> {
    YLawSampler::new(rho, m, table)?.sample(&mut rng.rng())
}

/// Parsed edge-list dump.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    pub d: usize,
    pub beta: f64,
    pub n: f64,
    pub case: VertexCase,
    pub seed: u64,
    pub edges: Vec<Edge>,
    pub weights: Vec<f64>,
}

/// Writes `d beta n case seed`, then `i j length` per edge, then `i weight`
/// per vertex.
pub fn write_edge_list(g: &SampledGraph, beta: f64, out: &mut impl Write) -> Result<()> {
    writeln!(out, "{} {:.16e} {:.16e} {} {}", g.vertices.spec.d, beta, g.n(), g.vertices.case, g.seed)?;
    for e in &g.edges {
        writeln!(out, "{} {} {:.16e}", e.i, e.j, e.length)?;
    }
    for (i, w) in g.vertices.weights.iter().enumerate() {
        writeln!(out, "{i} {w:.16e}")?;
    }
    Ok(())
}

pub fn read_edge_list(input: impl BufRead) -> Result<EdgeList> {
    let bad = |line: usize, what: &str| contract(format!("edge list line {line}: {what}"));
    let mut lines = input.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header"))?;
    let header = header?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 5 {
        return Err(bad(1, "header must be `d beta n case seed`"));
    }
    let parse_f = |s: &str, line| s.parse::<f64>().map_err(|_| bad(line, "bad number"));
    let parse_u = |s: &str, line| s.parse::<usize>().map_err(|_| bad(line, "bad index"));
    let case = match h[3] {
        "lattice" => VertexCase::Lattice,
        "poisson" => VertexCase::Poisson,
        _ => return Err(bad(1, "case must be lattice or poisson")),
    };
    let mut out = EdgeList {
        d: parse_u(h[0], 1)?,
        beta: parse_f(h[1], 1)?,
        n: parse_f(h[2], 1)?,
        case,
        seed: h[4].parse().map_err(|_| bad(1, "bad seed"))?,
        edges: Vec::new(),
        weights: Vec::new(),
    };
    for (idx, line) in lines {
        let line = line?;
        let no = idx + 1;
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.len() {
            0 => continue,
            3 if out.weights.is_empty() => out.edges.push(Edge {
                i: parse_u(f[0], no)?,
                j: parse_u(f[1], no)?,
                length: parse_f(f[2], no)?,
            }),
            2 => {
                if parse_u(f[0], no)? != out.weights.len() {
                    return Err(bad(no, "weights must be listed in index order"));
                }
                out.weights.push(parse_f(f[1], no)?);
            }
            _ => return Err(bad(no, "unexpected field count")),
        }
    }
    Ok(out)
}
