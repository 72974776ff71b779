//! Acceptance criteria, one PASS/FAIL line each.
//!
//! `cargo test --test acceptance` runs all of them; extra arguments filter by
//! criterion id (`C5`) or by a word of the title. The process exits nonzero if
//! any selected criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use condensate::empirics::{
    degree_joint, hub_report, length_histogram, partition_edges, tail_probability_naive, EdgePartitionParams, Scale,
};
use condensate::model::{audit_assumption_a, audit_functions, KernelSpec, ModelSpec, ProfileSpec, VertexCase};
use condensate::rng::RngStream;
use condensate::sampler::{
    count_edges, sample_edges, sample_planted, sample_vertices, CondensatePlan, EdgeMode, Hub, YLawSampler,
};
use condensate::theory::{
    big_lambda, build_lambda_table, bulk_mass, f_rho, lambda_f, mu, pi_ab_oracle, s_law, wave_integral, LambdaTable,
    QuadSpec, RadialTestFn, WaveSpec,
};
use condensate::{Error, Result};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn boolean1(beta: f64) -> ModelSpec {
    ModelSpec::boolean(1, beta).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn table(m: &ModelSpec) -> Result<LambdaTable> {
    build_lambda_table(m, 1e3, 256, &QuadSpec::default())
}

/// Edge-density LLN, Boolean d=1, β=3, n = 2·10^4, 20 seeds.
fn c1() -> Result<Outcome> {
    let m = boolean1(3.0);
    let n = 2e4;
    let densities = (0..20u64)
        .map(|seed| {
            let r = RngStream::new(seed, 1);
            let v = sample_vertices(&m, n, r.substream(1))?;
            Ok(count_edges(&v, &m, r.substream(2))? as f64 / n)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = densities.iter().sum::<f64>() / densities.len() as f64;
    let mu_q = mu(&m, &QuadSpec::default())?.value;
    let pass = rel(mean, 4.0) < 0.03;
    outcome(pass, format!("mean |E_n|/n = {mean:.4} vs μ = 4 (quadrature {mu_q:.8}), deviation {:.2}% (tol 3%)", 100.0 * rel(mean, 4.0)))
}

/// F(0.6) = 0.3^{-2}, Monte Carlo at 10^6 samples and deterministic inversion.
fn c2() -> Result<Outcome> {
    let m = boolean1(3.0);
    let t = table(&m)?;
    let q = QuadSpec { mc_samples: 1_000_000, ..QuadSpec::default() };
    let f = f_rho(0.6, &m, &t, &q, RngStream::new(2, 0))?;
    let exact = 0.3f64.powi(-2);
    let det = f.deterministic.ok_or_else(|| Error::Diagnostic("no deterministic value for k = 1".into()))?;
    // Half a unit in the fourth significant digit.
    let four_digits = 0.5 * 10f64.powf(exact.log10().floor() - 3.0);
    let pass = rel(f.value, exact) < 0.02 && (det - exact).abs() <= four_digits;
    outcome(
        pass,
        format!(
            "MC F = {:.5} ± {:.1e} ({}/{} draws above b* exceed ρ), deterministic {det:.6}, exact {exact:.6}; MC tol 2%, deterministic tol {four_digits:.0e}",
            f.value, f.stderr, f.hits, f.samples
        ),
    )
}

/// Y-law sampler: KS distance of S = Λ(Y) against F(s)/F(ρ), and the atom.
fn c3() -> Result<Outcome> {
    let m = boolean1(3.0);
    let t = table(&m)?;
    let rho = 0.6;
    let sampler = YLawSampler::new(rho, &m, &t)?;
    let draws = sampler.sample_many(100_000, RngStream::new(3, 0))?;
    let mut s: Vec<f64> = draws.iter().map(|ys| ys.iter().map(|&y| t.eval(y)).sum()).collect();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    // P(S > s) = F(s)/F(ρ) = (ρ/s)^2 on [ρ, 1), atom (ρ)^2 at 1.
    let cdf = |x: f64| if x >= 1.0 { 1.0 } else { 1.0 - (rho / x).powi(2) };
    let below_atom = s.iter().filter(|&&x| x < 1.0 - 1e-12).count();
    let mut ks: f64 = 0.0;
    for (i, &x) in s[..below_atom].iter().enumerate() {
        let c = cdf(x);
        ks = ks.max(((i + 1) as f64 / n - c).abs()).max((c - i as f64 / n).abs());
    }
    ks = ks.max((below_atom as f64 / n - (1.0 - rho * rho)).abs());
    let atom = 1.0 - below_atom as f64 / n;
    let theory = s_law(rho, &[rho], &m, &t, &QuadSpec::default(), RngStream::new(3, 1))?;
    let pass = ks < 0.01 && rel(atom, 0.36) < 0.02 && rel(theory.atom, 0.36) < 0.02;
    outcome(
        pass,
        format!(
            "KS = {ks:.4} (tol 0.01), sampler atom {atom:.4}, S-law atom {:.4} ± {:.4}, target 0.36 (tol 2%)",
            theory.atom, theory.atom_stderr
        ),
    )
}

/// Planted hub y = 0.4: degree/n → Λ(0.4) = 0.8, next degree/n < 0.05.
fn c4() -> Result<Outcome> {
    let m = boolean1(3.0);
    let t = table(&m)?;
    let plan = CondensatePlan::new(vec![Hub { u: vec![0.5], y: 0.4 }], 1)?;
    let mut hub = Vec::new();
    let mut next = Vec::new();
    for seed in 0..20u64 {
        let g = sample_planted(&m, 1e4, &plan, RngStream::new(seed, 4), EdgeMode::GridAssisted)?;
        let r = hub_report(&g, 2)?;
        hub.push(r.hub_degrees_scaled[0]);
        next.push(r.hub_degrees_scaled[1]);
    }
    let worst = hub.iter().map(|&h| rel(h, 0.8)).fold(0.0, f64::max);
    let mean = hub.iter().sum::<f64>() / 20.0;
    // A natural vertex of weight ≳ 400 (probability ≈ 0.07 per graph at β = 3)
    // is a third hub, so the next degree is judged on its mean over seeds.
    let mean_next = next.iter().sum::<f64>() / 20.0;
    let max_next = next.iter().copied().fold(0.0, f64::max);
    let over = next.iter().filter(|&&x| x >= 0.05).count();
    let pass = worst < 0.05 && mean_next < 0.05;
    outcome(
        pass,
        format!(
            "hub degree/n mean {mean:.4}, worst deviation {:.2}% from Λ(0.4) = 0.8 (table {:.6}, tol 5% per seed); next degree/n mean {mean_next:.4} (tol 0.05), max {max_next:.4}, {over}/20 seeds at or above 0.05",
            100.0 * worst,
            t.eval(0.4)
        ),
    )
}

/// Tail exponent: slope of log P̂ against log n for β = 2.5, ρ = 0.9.
fn c5() -> Result<Outcome> {
    let m = boolean1(2.5);
    let mu_val = mu(&m, &QuadSpec::default())?.value;
    let scan = tail_probability_naive(&m, &[250.0, 500.0, 1000.0, 2000.0], 0.9, mu_val, 200_000, RngStream::new(5, 0))?;
    let slope = scan.slope.map(|f| f.slope);
    let strictly = scan.points.windows(2).all(|w| w[1].p_hat < w[0].p_hat);
    let per_n: Vec<String> = scan.points.iter().map(|p| format!("n={}: {:.4} [{:.4}, {:.4}]", p.n, p.p_hat, p.wilson_lo, p.wilson_hi)).collect();
    let pass = slope.is_some_and(|s| (-0.7..=-0.3).contains(&s)) && scan.monotone();
    outcome(
        pass,
        format!(
            "slope {} (target -0.5, accept [-0.7, -0.3]), monotone {} (strict {strictly}); {}",
            slope.map_or("none".into(), |s| format!("{s:.4}")),
            scan.monotone(),
            per_n.join(", ")
        ),
    )
}

fn uniform_hubs(ys: Vec<f64>, rng: &mut impl Rng) -> Vec<Hub> {
    ys.into_iter().map(|y| Hub { u: vec![rng.random::<f64>()], y }).collect()
}

/// Planted Y-law hubs for ρ = 1.5: bulk mass on (0, 3] and per-replica wave masses.
fn c6() -> Result<Outcome> {
    let m = boolean1(3.0);
    let q = QuadSpec::default();
    let t = table(&m)?;
    let sampler = YLawSampler::new(1.5, &m, &t)?;
    let bulk = bulk_mass(&m, &RadialTestFn::indicator(0.0, 3.0)?, &q)?.value;
    let edges: Vec<f64> = (0..=10).map(|i| 0.05 * i as f64).collect();
    let mut worst_bulk: f64 = 0.0;
    let mut worst_wave: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..20u64 {
        let s = RngStream::new(seed, 6);
        let mut rng = s.substream(4).rng();
        let ys = sampler.sample(&mut rng)?;
        let plan = CondensatePlan::new(uniform_hubs(ys.clone(), &mut rng), 1)?;
        let g = sample_planted(&m, 2e4, &plan, s, EdgeMode::GridAssisted)?;
        let fixed = length_histogram(&g, Scale::Fixed, &[0.0, 3.0])?.masses[0];
        worst_bulk = worst_bulk.max(rel(fixed, bulk));
        let hist = length_histogram(&g, Scale::Macroscopic, &edges)?;
        let spec = WaveSpec::new(ys)?;
        // The wave limit is tested on bins away from 0, where the bulk sits.
        for (i, w) in edges.windows(2).enumerate().skip(1) {
            let expect = wave_integral(&RadialTestFn::indicator(w[0], w[1])?, &spec, &m, &q)?.value;
            if expect >= 0.1 {
                worst_wave = worst_wave.max(rel(hist.masses[i], expect));
                checked += 1;
            }
        }
    }
    let pass = worst_bulk < 0.05 && worst_wave < 0.10 && checked > 0;
    outcome(
        pass,
        format!(
            "bulk ½E[λ_f(W)] = {bulk:.5}, worst replica deviation {:.2}% (tol 5%); {checked} macroscopic bins with wave mass ≥ 0.1, worst deviation {:.2}% (tol 10%)",
            100.0 * worst_bulk,
            100.0 * worst_wave
        ),
    )
}

/// Joint degree law with two fixed hubs against the π_{a,b} oracle.
fn c7() -> Result<Outcome> {
    let m = boolean1(3.0);
    let hubs = vec![Hub { u: vec![0.2], y: 0.3 }, Hub { u: vec![0.7], y: 0.6 }];
    let oracle = pi_ab_oracle(&hubs, 10, &m, &QuadSpec::default(), RngStream::new(7, 1))?;
    let plan = CondensatePlan::new(hubs, 1)?;
    let reps = 20;
    let mut pooled = vec![vec![0.0; 3]; 11];
    let mut single = Vec::new();
    for seed in 0..reps {
        let g = sample_planted(&m, 1e4, &plan, RngStream::new(seed, 7), EdgeMode::GridAssisted)?;
        let j = degree_joint(&g, 2, 10)?;
        let mut tv = 0.0;
        for a in 0..=10 {
            for b in 0..=2 {
                tv += (j.pi(a, b) - oracle.get(a, b)).abs();
                pooled[a][b] += j.pi(a, b) / reps as f64;
            }
        }
        single.push(0.5 * tv);
    }
    let mut tv = 0.0;
    for a in 0..=10 {
        for b in 0..=2 {
            tv += (pooled[a][b] - oracle.get(a, b)).abs();
        }
    }
    let tv = 0.5 * tv;
    single.sort_by(|a, b| a.total_cmp(b));
    let median = 0.5 * (single[9] + single[10]);
    let below = single.iter().filter(|&&x| x < 0.05).count();
    let pass = tv < 0.05 && median < 0.05;
    outcome(
        pass,
        format!(
            "TV over a ≤ 10: pooled {tv:.4}, per-graph median {median:.4}, max {:.4}, {below}/{reps} graphs below 0.05 (tol 0.05)",
            single[single.len() - 1]
        ),
    )
}

/// Hub clique with stretched-exponential profile, 200 runs.
fn c8() -> Result<Outcome> {
    let m = ModelSpec::new(1, 3.0, ProfileSpec::StretchedExp { alpha: 2.0 }, KernelSpec::Product, VertexCase::Poisson)?;
    let runs = 200u64;
    let mut cliques = 0;
    for run in 0..runs {
        let s = RngStream::new(run, 8);
        let mut attempt = 0;
        let g = loop {
            let mut rng = s.substream(100 + attempt).rng();
            let plan = CondensatePlan::new(uniform_hubs(vec![0.3, 0.4], &mut rng), 1)?;
            match sample_planted(&m, 1e4, &plan, s, EdgeMode::GridAssisted) {
                // Both hub locations snapped to one vertex: redraw the locations.
                Err(Error::Contract(msg)) if msg.contains("same vertex") && attempt < 10 => attempt += 1,
                other => break other?,
            }
        };
        if hub_report(&g, 2)?.clique {
            cliques += 1;
        }
    }
    let frac = cliques as f64 / runs as f64;
    outcome(frac >= 0.99, format!("clique in {cliques}/{runs} runs ({:.1}%, need ≥ 99%)", 100.0 * frac))
}

/// Property suites.
fn c9() -> Result<Outcome> {
    let mut failures: Vec<String> = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let xs: Vec<f64> = (0..200).map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 199.0)).collect();
    let profiles = [ProfileSpec::Indicator, ProfileSpec::PolynomialTail { alpha: 2.0 }, ProfileSpec::StretchedExp { alpha: 1.5 }];
    for p in profiles {
        let vals: Vec<f64> = xs.iter().map(|&x| p.eval(x)).collect();
        check(vals.iter().all(|v| (0.0..=1.0).contains(v)), "φ within [0, 1]");
        check(vals.windows(2).all(|w| w[1] <= w[0]), "φ nonincreasing");
    }
    let ws: Vec<f64> = (0..40).map(|i| 10f64.powf(4.0 * i as f64 / 39.0)).collect();
    let kernels = [KernelSpec::Product, KernelSpec::BooleanSum { d: 2 }, KernelSpec::AgeMinMax { gamma: 0.4 }];
    for k in kernels {
        for &v in &ws {
            for &w in &ws {
                let a = k.eval(v, w)?;
                check(rel(a, k.eval(w, v)?) < 1e-14, "κ symmetric");
                check(k.eval(v * 1.5, w)? >= a, "κ nondecreasing");
                check(rel(k.limiting(3.0 * v, w), 3.0 * k.limiting(v, w)) < 1e-12, "𝒦 linear in its first argument");
            }
        }
    }
    let shipped = [
        ModelSpec::boolean(1, 3.0)?,
        ModelSpec::scale_free_percolation(2, 3.5, 2.0, VertexCase::Poisson)?,
        ModelSpec::age_based(1, 0.4, 2.5)?,
    ];
    for m in &shipped {
        let t = table(m)?;
        check(t.values.iter().all(|v| (0.0..=1.0).contains(v)), "Λ within [0, 1]");
        check(t.values.windows(2).all(|w| w[1] >= w[0]), "Λ nondecreasing");
        check(t.eval(1e3) > 0.98, "Λ(10^3) > 0.98");
        check(audit_assumption_a(m, 64)?.all_ok(), "auditor passes shipped model");
    }
    let violator = audit_functions(&|v: f64, w: f64| v.max(w) * v.min(w).powi(3), &|x: f64| ProfileSpec::Indicator.eval(x), 4.0, 4.0, 64)?;
    check(!violator.all_ok(), "auditor flags the constructed violator");

    let sims = [
        ModelSpec::boolean(1, 3.0)?,
        ModelSpec::boolean(2, 2.7)?,
        ModelSpec::scale_free_percolation(1, 3.0, 2.0, VertexCase::Poisson)?,
        ModelSpec::age_based(1, 0.5, 2.0)?,
    ];
    for (i, m) in sims.iter().enumerate() {
        for seed in 0..5u64 {
            let r = RngStream::new(seed, 90 + i as u64);
            let v = sample_vertices(m, 1000.0, r.substream(1))?;
            let a = sample_edges(&v, m, r.substream(2), EdgeMode::Naive)?;
            let b = sample_edges(&v, m, r.substream(2), EdgeMode::GridAssisted)?;
            check(a.edges == b.edges, "naive and grid-assisted edge sets agree");
            let p = partition_edges(&a, &EdgePartitionParams::defaults(m), m)?;
            check(p.total() as usize == a.edges.len(), "partition counts sum to |E_n|");
            let j = degree_joint(&a, 2, a.vertices.len())?;
            let hand: u64 = j.counts.iter().enumerate().map(|(x, row)| row.iter().enumerate().map(|(y, &c)| (x + y) as u64 * c).sum::<u64>()).sum();
            check(hand == 2 * a.edges.len() as u64, "handshake identity");
            let top = 0.5 * (m.d as f64).sqrt() * a.vertices.spec.side;
            let h = length_histogram(&a, Scale::Fixed, &[0.0, 1.0, 2.0, top])?;
            check((h.total() - a.edges.len() as f64 / a.n()).abs() < 1e-12, "histogram total equals |E_n|/n");
        }
    }

    let q = QuadSpec::default();
    let fine = q.refined();
    let mut worst_ratio: f64 = 0.0;
    let mut shift_ok = |coarse: f64, err: f64, refined: f64| {
        let shift = (coarse - refined).abs();
        if err > 0.0 {
            worst_ratio = worst_ratio.max(shift / err);
        }
        shift <= 2.0 * err
    };
    for m in &shipped {
        let (a, b) = (mu(m, &q)?, mu(m, &fine)?);
        let ok = shift_ok(a.value, a.error, b.value);
        check(ok, "μ stable under refinement");
        for w in [0.05, 0.5, 5.0] {
            let (a, b) = (big_lambda(m, w, &q)?, big_lambda(m, w, &fine)?);
            let ok = shift_ok(a.value, a.error, b.value);
            check(ok, "Λ(w) stable under refinement");
        }
        let f = RadialTestFn::indicator(0.5, 2.0)?;
        let (a, b) = (lambda_f(m, 3.0, &f, &q)?, lambda_f(m, 3.0, &f, &fine)?);
        let ok = shift_ok(a.value, a.error + a.tail_bound, b.value);
        check(ok, "λ_f(w) stable under refinement");
    }
    let mut distinct = failures.clone();
    distinct.dedup();
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("all property checks hold; largest refinement shift {worst_ratio:.2}× the reported error")
        } else {
            format!("{} failed checks: {}", failures.len(), distinct.join("; "))
        },
    )
}

type Criterion = (&'static str, &'static str, fn() -> Result<Outcome>);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("C1", "edge-density LLN", c1),
        ("C2", "rate function closed form", c2),
        ("C3", "Y-law sampler", c3),
        ("C4", "hub degree limit", c4),
        ("C5", "tail exponent", c5),
        ("C6", "bulk and wave split", c6),
        ("C7", "degree mixture", c7),
        ("C8", "hub clique", c8),
        ("C9", "property suites", c9),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<&Criterion> = criteria
        .iter()
        .filter(|(id, title, _)| filters.is_empty() || filters.iter().any(|f| id.eq_ignore_ascii_case(f) || title.contains(f.as_str())))
        .collect();
    let mut failed = 0;
    for (id, title, run) in &selected {
        let start = Instant::now();
        let result = run();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(o) if o.pass => println!("PASS {id} {title}: {} [{secs:.1} s]", o.detail),
            Ok(o) => {
                failed += 1;
                println!("FAIL {id} {title}: {} [{secs:.1} s]", o.detail);
            }
            Err(e) => {
                failed += 1;
                println!("FAIL {id} {title}: error: {e} [{secs:.1} s]");
            }
        }
    }
    println!("{}/{} criteria passed", selected.len() - failed, selected.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
