//! Config-driven experiment runs with CSV/JSON outputs.
//!
//! Each command reads an [`ExperimentConfig`], runs replicas on a local
//! worker pool and writes its outputs plus a [`RunManifest`] into the output
//! directory. Replica `r` draws from substream `r` of `(seed, 0)`, and rows
//! are merged in replica order, so outputs do not depend on the thread count.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

pub use config::{ConditionSection, ExperimentConfig, HistogramSection, LdpSection, SimulateSection, TheorySection};
pub use output::{fmt_f64, json_f64, sha256_hex, Key, OutputFile, Row, RunManifest, CSV_HEADER};

use crate::empirics::{
    conditional_mean_degree, degree_joint, hub_report, length_histogram, partition_edges, tail_probability_naive, DegreeBin,
    Scale,
};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sampler::{sample_edges, sample_planted, sample_vertices, write_edge_list, CondensatePlan, Hub, YLawSampler};
use crate::theory::{
    build_lambda_table, bulk_mass, f_rho, mu, pi_ab_oracle, s_law, wave_integral, LambdaTable, RadialTestFn, WaveSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Theory,
    Simulate,
    Condition,
    LdpScan,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Theory => "theory",
            Command::Simulate => "simulate",
            Command::Condition => "condition",
            Command::LdpScan => "ldp-scan",
        }
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed_override: Option<u64>,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Contract(_) => 2,
        Error::Infeasible(_) => 3,
        Error::Diagnostic(_) => 4,
        Error::Io(_) => 1,
    }
}

/// Loads `config_path` and runs `cmd`.
pub fn run_file(cmd: Command, config_path: &Path, opts: &RunOptions) -> Result<RunManifest> {
    let text = std::fs::read_to_string(config_path).map_err(|e| Error::Config(format!("{}: {e}", config_path.display())))?;
    let config = ExperimentConfig::from_toml_str(&text)?;
    run(cmd, config, opts)
}

pub fn run(cmd: Command, mut config: ExperimentConfig, opts: &RunOptions) -> Result<RunManifest> {
    let start = Instant::now();
    if let Some(s) = opts.seed_override {
        config.seed = Some(s);
    }
    if let Some(t) = opts.threads {
        config.threads = t;
    }
    config.validate()?;
    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))?;
    std::fs::create_dir_all(&out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outputs = pool.install(|| match cmd {
        Command::Theory => cmd_theory(&config, &out_dir),
        Command::Simulate => cmd_simulate(&config, &out_dir),
        Command::Condition => cmd_condition(&config, &out_dir),
        Command::LdpScan => cmd_ldp_scan(&config, &out_dir),
    })?;
    let manifest = RunManifest {
        experiment_id: config.experiment_id.clone(),
        command: cmd.name().into(),
        config_sha256: sha256_hex(config.to_toml_string()?.as_bytes()),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed(),
        threads: config.threads,
        outputs,
        runtime_seconds: start.elapsed().as_secs_f64(),
    };
    let value = serde_json::to_value(&manifest).map_err(|e| Error::Io(e.into()))?;
    output::write_json(&out_dir.join(format!("{}_manifest.json", cmd.name())), &value)?;
    Ok(manifest)
}

fn replica_stream(c: &ExperimentConfig, r: u64) -> RngStream {
    RngStream::new(c.seed(), 0).substream(r)
}

fn record(quantity: &str, key: Value, value: f64, stderr: f64, method: &str, samples: Option<usize>) -> Value {
    json!({
        "quantity": quantity,
        "key": key,
        "value": json_f64(value),
        "stderr": json_f64(stderr),
        "method": method,
        "samples": samples,
    })
}

fn lambda_table(c: &ExperimentConfig) -> Result<LambdaTable> {
    build_lambda_table(&c.model, c.theory.lambda_w_max, c.theory.lambda_grid, &c.quad)
}

fn cmd_theory(c: &ExperimentConfig, out: &Path) -> Result<Vec<OutputFile>> {
    let m = &c.model;
    let q = &c.quad;
    let base = RngStream::new(c.seed(), 1);
    let mut records = Vec::new();
    let mu_est = mu(m, q)?;
    records.push(record("mu", Value::Null, mu_est.value, mu_est.error, "adaptive quadrature", None));
    let fixed = c.histogram.fixed();
    for w in fixed.windows(2) {
        let f = RadialTestFn::indicator(w[0], w[1])?;
        let e = bulk_mass(m, &f, q)?;
        records.push(record("bulk_mass", json!([json_f64(w[0]), json_f64(w[1])]), e.value, e.error, "adaptive quadrature", None));
    }
    let table = lambda_table(c)?;
    for (w, v) in table.grid.iter().zip(&table.values) {
        records.push(record("Lambda", json_f64(*w), *v, table.max_error, "radial quadrature, isotonic", None));
    }
    if let Some(rho) = c.rho {
        let k = c.k().unwrap_or(1);
        let f = f_rho(rho, m, &table, q, base.substream(1))?;
        records.push(record("k", Value::Null, k as f64, 0.0, "ceil(rho)", None));
        records.push(record("b_star", Value::Null, f.b_star, 0.0, "table inversion", None));
        records.push(record("F", Value::Null, f.value, f.stderr, "Monte Carlo", Some(f.samples)));
        records.push(record("F_table_bias", Value::Null, f.table_bias, 0.0, "Monte Carlo", Some(f.samples)));
        if let Some(d) = f.deterministic {
            records.push(record("F_deterministic", Value::Null, d, 0.0, "table inversion", None));
        }
        let grid = c.theory.s_grid.clone().unwrap_or_else(|| (0..10).map(|i| rho + (k as f64 - rho) * i as f64 / 10.0).collect());
        let s = s_law(rho, &grid, m, &table, q, base.substream(2))?;
        for (sv, p, se) in &s.tail {
            records.push(record("S_tail", json_f64(*sv), *p, *se, "Monte Carlo", Some(q.mc_samples)));
        }
        records.push(record("S_atom", json!(k), s.atom, s.atom_stderr, "Monte Carlo", Some(q.mc_samples)));
    }
    if !c.theory.hubs.is_empty() {
        let o = pi_ab_oracle(&c.theory.hubs, c.theory.a_max, m, q, base.substream(3))?;
        for a in 0..=o.a_max {
            for b in 0..=o.k {
                records.push(record("pi_ab", json!([a, b]), o.values[a][b], o.stderr[a][b], "Monte Carlo", Some(o.samples)));
            }
        }
        records.push(record("pi_ab_tail_mass", Value::Null, o.tail_mass, 0.0, "Monte Carlo", Some(o.samples)));
    }
    let n_records = records.len();
    let doc = json!({
        "experiment_id": c.experiment_id,
        "seed": c.seed(),
        "model": serde_json::to_value(m).map_err(|e| Error::Io(e.into()))?,
        "records": records,
    });
    output::write_json(&out.join("theory.json"), &doc)?;
    Ok(vec![OutputFile { file: "theory.json".into(), rows: n_records }])
}

fn histogram_rows(rows: &mut Vec<Row>, n: f64, r: u64, statistic: &'static str, h: &crate::empirics::LengthHistogram) {
    for (i, mass) in h.masses.iter().enumerate() {
        rows.push(Row::new(n, Some(r), statistic, *mass).keys(Key::Real(h.bin_edges[i]), Key::Real(h.bin_edges[i + 1])));
    }
}

fn dump(c: &ExperimentConfig, out: &Path, r: u64, g: &crate::sampler::SampledGraph) -> Result<()> {
    if c.dump_edges {
        let mut f = std::io::BufWriter::new(std::fs::File::create(out.join(format!("edges_r{r}.txt")))?);
        write_edge_list(g, c.model.beta, &mut f)?;
    }
    Ok(())
}

fn cmd_simulate(c: &ExperimentConfig, out: &Path) -> Result<Vec<OutputFile>> {
    let m = &c.model;
    let n = c.require_n()?;
    let params = c.partition_params();
    let fixed = c.histogram.fixed();
    let wbins = c.simulate.bins(n);
    let per_replica: Vec<(Vec<Row>, Vec<DegreeBin>)> = (0..c.replicas)
        .into_par_iter()
        .map(|r| -> Result<_> {
            let s = replica_stream(c, r);
            let v = sample_vertices(m, n, s.substream(1))?;
            let g = sample_edges(&v, m, s.substream(2), c.edge_mode)?;
            dump(c, out, r, &g)?;
            let mut rows = vec![Row::new(n, Some(r), "edge_density", g.edges.len() as f64 / n)];
            rows.push(Row::new(n, Some(r), "vertex_count", g.vertices.len() as f64));
            let p = partition_edges(&g, &params, m)?;
            rows.push(Row::new(n, Some(r), "partition_main", p.main as f64 / n));
            rows.push(Row::new(n, Some(r), "partition_long", p.long as f64 / n));
            rows.push(Row::new(n, Some(r), "partition_high", p.high as f64 / n));
            histogram_rows(&mut rows, n, r, "length_fixed", &length_histogram(&g, Scale::Fixed, &fixed)?);
            let bins = conditional_mean_degree(std::slice::from_ref(&g), &wbins)?;
            Ok((rows, bins))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let nb = wbins.len() - 1;
    let (mut sw, mut sd, mut cnt) = (vec![0.0; nb], vec![0.0; nb], vec![0u64; nb]);
    for (rr, bins) in per_replica {
        rows.extend(rr);
        for (i, b) in bins.iter().enumerate() {
            if b.count > 0 {
                sw[i] += b.mean_weight * b.count as f64;
                sd[i] += b.mean_degree * b.count as f64;
                cnt[i] += b.count;
            }
        }
    }
    for i in 0..nb {
        let keys = (Key::Real(wbins[i]), Key::Real(wbins[i + 1]));
        let mean = |s: f64| if cnt[i] > 0 { s / cnt[i] as f64 } else { f64::NAN };
        rows.push(Row::new(n, None, "bin_count", cnt[i] as f64).keys(keys.0.clone(), keys.1.clone()));
        rows.push(Row::new(n, None, "bin_mean_weight", mean(sw[i])).keys(keys.0.clone(), keys.1.clone()));
        rows.push(Row::new(n, None, "bin_mean_degree", mean(sd[i])).keys(keys.0, keys.1));
    }
    let count = output::write_csv(&out.join("simulate.csv"), &c.experiment_id, c.seed(), &rows)?;
    Ok(vec![OutputFile { file: "simulate.csv".into(), rows: count }])
}

/// Draws `(Y_1 ≥ … ≥ Y_k)` from the Y-law and uniform locations.
fn y_law_hubs(sampler: &YLawSampler, d: usize, s: RngStream) -> Result<Vec<Hub>> {
    let mut rng = s.rng();
    let ys = sampler.sample(&mut rng)?;
    Ok(ys.into_iter().map(|y| Hub { u: (0..d).map(|_| rng.random::<f64>()).collect(), y }).collect())
}

fn cmd_condition(c: &ExperimentConfig, out: &Path) -> Result<Vec<OutputFile>> {
    let m = &c.model;
    let n = c.require_n()?;
    let rho = c.require_rho()?;
    let k = c.k().unwrap_or(1);
    let params = c.partition_params();
    let weight_cut = params.weight_cut(n);
    let table = lambda_table(c)?;
    let fixed_hubs = !c.condition.hubs.is_empty();
    let sampler = if fixed_hubs {
        if c.condition.hubs.len() != k {
            return Err(Error::Config(format!("condition.hubs has {} entries but k = {k}", c.condition.hubs.len())));
        }
        None
    } else {
        Some(YLawSampler::new(rho, m, &table)?)
    };
    let y_min = match &sampler {
        Some(s) => s.b_star,
        None => c.condition.hubs.iter().map(|h| h.y).fold(f64::INFINITY, f64::min),
    };
    if y_min * n <= weight_cut {
        return Err(Error::Infeasible(format!(
            "smallest hub weight {:.4} is below the high-weight cut n^a = {weight_cut:.4}; increase n or the hub weight-scales",
            y_min * n
        )));
    }
    let fixed = c.histogram.fixed();
    let macro_edges = c.histogram.macroscopic(m.d);
    let rows: Vec<Vec<Row>> = (0..c.replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<Row>> {
            let s = replica_stream(c, r);
            let hubs = match &sampler {
                Some(sm) => y_law_hubs(sm, m.d, s.substream(4))?,
                None => c.condition.hubs.clone(),
            };
            let plan = CondensatePlan::new(hubs, m.d)?;
            let g = sample_planted(m, n, &plan, s, c.edge_mode)?;
            dump(c, out, r, &g)?;
            let mut rows = Vec::new();
            let rep = hub_report(&g, (k + 1).min(g.vertices.len()))?;
            let deg = g.degrees();
            let mut degree_sum = 0.0;
            let mut lambda_sum = 0.0;
            for (rank, p) in g.planted.iter().enumerate() {
                let key = Key::Int(rank as u64 + 1);
                let scaled = deg[p.vertex] as f64 / n;
                degree_sum += scaled;
                lambda_sum += table.eval(p.y);
                rows.push(Row::new(n, Some(r), "hub_y", p.y).keys(key.clone(), Key::None));
                rows.push(Row::new(n, Some(r), "hub_degree_scaled", scaled).keys(key.clone(), Key::None));
                rows.push(Row::new(n, Some(r), "hub_lambda", table.eval(p.y)).keys(key.clone(), Key::None));
                rows.push(Row::new(n, Some(r), "snap_displacement", p.displacement).keys(key, Key::None));
            }
            rows.push(Row::new(n, Some(r), "hub_degree_sum_scaled", degree_sum));
            rows.push(Row::new(n, Some(r), "hub_lambda_sum", lambda_sum));
            if rep.hub_degrees_scaled.len() > k {
                rows.push(Row::new(n, Some(r), "next_degree_scaled", rep.hub_degrees_scaled[k]));
            }
            let hub_vertices: Vec<usize> = g.planted.iter().map(|p| p.vertex).collect();
            let clique = hub_vertices
                .iter()
                .enumerate()
                .all(|(i, &a)| hub_vertices[i + 1..].iter().all(|&b| g.has_edge(a, b)));
            rows.push(Row::new(n, Some(r), "clique", if clique { 1.0 } else { 0.0 }));
            rows.push(Row::new(n, Some(r), "edge_density", g.edges.len() as f64 / n));
            histogram_rows(&mut rows, n, r, "length_fixed", &length_histogram(&g, Scale::Fixed, &fixed)?);
            let mh = length_histogram(&g, Scale::Macroscopic, &macro_edges)?;
            histogram_rows(&mut rows, n, r, "length_macroscopic", &mh);
            if c.condition.wave {
                let spec = WaveSpec::new(g.planted.iter().map(|p| p.y).collect())?;
                for w in macro_edges.windows(2) {
                    let e = wave_integral(&RadialTestFn::indicator(w[0], w[1])?, &spec, m, &c.quad)?;
                    rows.push(
                        Row::new(n, Some(r), "wave_theory", e.value)
                            .keys(Key::Real(w[0]), Key::Real(w[1]))
                            .stderr(e.error),
                    );
                }
            }
            let joint = degree_joint(&g, k, c.condition.a_max)?;
            for a in 0..=joint.a_max {
                for b in 0..=k {
                    rows.push(Row::new(n, Some(r), "pi_ab", joint.pi(a, b)).keys(Key::Int(a as u64), Key::Int(b as u64)));
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Row> = rows.into_iter().flatten().collect();
    let count = output::write_csv(&out.join("condition.csv"), &c.experiment_id, c.seed(), &rows)?;
    Ok(vec![OutputFile { file: "condition.csv".into(), rows: count }])
}

fn cmd_ldp_scan(c: &ExperimentConfig, out: &Path) -> Result<Vec<OutputFile>> {
    let m = &c.model;
    let rho = c.require_rho()?;
    let k = c.k().unwrap_or(1);
    let n_list = c.n_list.clone().or_else(|| c.n.map(|n| vec![n])).ok_or_else(|| Error::Config("ldp-scan needs n_list".into()))?;
    if !c.ldp.force && (k != 1 || m.beta > c.ldp.max_beta) {
        return Err(Error::Infeasible(format!(
            "k = {k}, β = {}: naive tail estimation is not desk-reproducible (needs k = 1 and β ≤ {}); use condition for planted-only verification",
            m.beta, c.ldp.max_beta
        )));
    }
    let mu_val = mu(m, &c.quad)?.value;
    let scan = tail_probability_naive(m, &n_list, rho, mu_val, c.replicas, RngStream::new(c.seed(), 0))?;
    let mut rows = Vec::new();
    for p in &scan.points {
        let se = if p.replicas > 0 { (p.p_hat * (1.0 - p.p_hat) / p.replicas as f64).sqrt() } else { f64::NAN };
        rows.push(Row::new(p.n, None, "p_hat", p.p_hat).stderr(se));
        rows.push(Row::new(p.n, None, "wilson_lo", p.wilson_lo));
        rows.push(Row::new(p.n, None, "wilson_hi", p.wilson_hi));
        rows.push(Row::new(p.n, None, "hits", p.hits as f64));
        rows.push(Row::new(p.n, None, "replicas", p.replicas as f64));
        rows.push(Row::new(p.n, None, "used_in_fit", if p.used { 1.0 } else { 0.0 }));
        let y = &p.conditioned_top_weight;
        if !y.is_empty() {
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() as f64 - 1.0).max(1.0);
            rows.push(Row::new(p.n, None, "conditioned_top_weight_mean", mean).stderr((var / y.len() as f64).sqrt()));
        }
    }
    let count = output::write_csv(&out.join("ldp_scan.csv"), &c.experiment_id, c.seed(), &rows)?;
    let slope = scan.slope.map(|f| {
        let half = f.stderr.map(|s| 1.96 * s);
        json!({
            "slope": json_f64(f.slope),
            "intercept": json_f64(f.intercept),
            "stderr": f.stderr.map(json_f64),
            "ci95": half.map(|h| json!([json_f64(f.slope - h), json_f64(f.slope + h)])),
            "target": json_f64(-(k as f64) * (m.beta - 2.0)),
        })
    });
    let doc = json!({
        "experiment_id": c.experiment_id,
        "seed": c.seed(),
        "rho": json_f64(rho),
        "mu": json_f64(mu_val),
        "slope": slope,
        "monotone": scan.monotone(),
        "excluded_n": scan.points.iter().filter(|p| !p.used).map(|p| json_f64(p.n)).collect::<Vec<_>>(),
    });
    output::write_json(&out.join("ldp_slope.json"), &doc)?;
    let files = vec![
        OutputFile { file: "ldp_scan.csv".into(), rows: count },
        OutputFile { file: "ldp_slope.json".into(), rows: 1 },
    ];
    if scan.points.iter().all(|p| p.hits == 0) {
        return Err(Error::Infeasible("no replica reached the excess threshold at any n".into()));
    }
    Ok(files)
}
