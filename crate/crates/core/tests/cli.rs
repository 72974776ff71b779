use std::path::Path;
use std::process::Command;

const MODEL: &str = r#"
[model]
d = 1
beta = 3.0
vertex_case = "poisson"
profile = { variant = "indicator" }
kernel = { variant = "boolean_sum", d = 1 }
"#;

fn write_config(dir: &Path, head: &str, tail: &str) -> std::path::PathBuf {
    let p = dir.join("c.toml");
    std::fs::write(&p, format!("experiment_id = \"cli\"\n{head}\n{MODEL}\n{tail}")).unwrap();
    p
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_condensate")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn body(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn theory_reports_mu_and_f() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\nrho = 0.6", "[quad]\nmc_samples = 20000");
    let out = dir.path().join("o");
    let (code, _, err) = run(&["theory", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let doc: serde_json::Value = serde_json::from_str(&body(&out.join("theory.json"))).unwrap();
    let get = |q: &str| {
        doc["records"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["quantity"] == q)
            .map(|r| r["value"].as_f64().unwrap())
            .unwrap()
    };
    assert!((get("mu") - 4.0).abs() < 1e-6);
    assert!((get("F") - 1.0 / 0.09).abs() < 0.05);
    assert!(out.join("theory_manifest.json").exists());
}

#[test]
fn simulate_is_reproducible_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 5\nn = 3000\nreplicas = 20", "");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]).0, 0);
    assert_eq!(run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--threads", "3"]).0, 0);
    let (ta, tb) = (body(&a.join("simulate.csv")), body(&b.join("simulate.csv")));
    assert_eq!(ta, tb);
    let densities: Vec<f64> = ta
        .lines()
        .filter(|l| l.contains(",edge_density,"))
        .map(|l| l.rsplit(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(densities.len(), 20);
    let mean = densities.iter().sum::<f64>() / 20.0;
    assert!((mean - 4.0).abs() < 0.3, "{mean}");
    let c = dir.path().join("c");
    run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap(), "--seed-override", "6"]);
    assert_ne!(body(&c.join("simulate.csv")), ta);
}

#[test]
fn condition_with_zero_replicas_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 5\nn = 1000\nrho = 0.6\nreplicas = 0", "");
    let out = dir.path().join("o");
    assert_eq!(run(&["condition", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 0);
    assert_eq!(body(&out.join("condition.csv")).trim_end(), condensate::experiment::CSV_HEADER);
}

#[test]
fn condition_fixed_hubs_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 5\nn = 2000\nrho = 0.6\nreplicas = 2",
        "[condition]\nhubs = [{ u = [0.5], y = 0.4 }]\na_max = 5\nwave = false",
    );
    let out = dir.path().join("o");
    assert_eq!(run(&["condition", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 0);
    let text = body(&out.join("condition.csv"));
    assert_eq!(text.lines().filter(|l| l.contains(",hub_degree_scaled,")).count(), 2);
    assert_eq!(text.lines().filter(|l| l.contains(",pi_ab,")).count(), 2 * 6 * 2);
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = write_config(dir.path(), "n = 100", "");
    let (code, _, err) = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("seed required"), "{err}");
    let cfg = write_config(dir.path(), "seed = 1\nrho = 1.0", "");
    let (code, _, err) = run(&["theory", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("non-integer"), "{err}");
    let cfg = write_config(dir.path(), "seed = 1\nn = 10.5\nmisspelled = 3", "");
    assert_eq!(run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 2);
}

#[test]
fn lattice_with_non_integer_root_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    std::fs::write(&p, format!("experiment_id = \"x\"\nseed = 1\nn = 10.5\n{}", MODEL.replace("poisson", "lattice"))).unwrap();
    let (code, _, err) = run(&["simulate", "--config", p.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("integer"), "{err}");
}

#[test]
fn ldp_scan_guard_and_degenerate_cases() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    // β = 3 exceeds the default guard.
    let cfg = write_config(dir.path(), "seed = 1\nrho = 0.6\nn_list = [100.0]\nreplicas = 10", "");
    let (code, _, err) = run(&["ldp-scan", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 3);
    assert!(err.contains("not desk-reproducible"), "{err}");
    // Single n: estimates without a slope.
    let cfg = write_config(dir.path(), "seed = 1\nrho = 0.6\nn_list = [200.0]\nreplicas = 400", "[ldp]\nforce = true");
    assert_eq!(run(&["ldp-scan", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 0);
    let slope: serde_json::Value = serde_json::from_str(&body(&out.join("ldp_slope.json"))).unwrap();
    assert!(slope["slope"].is_null());
    assert_eq!(body(&out.join("ldp_scan.csv")).lines().filter(|l| l.contains(",p_hat,")).count(), 1);
    // Unreachable excess: no hits anywhere.
    let cfg = write_config(dir.path(), "seed = 1\nrho = 50.5\nn_list = [50.0]\nreplicas = 50", "[ldp]\nforce = true");
    let (code, _, _) = run(&["ldp-scan", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_ne!(code, 0);
}

#[test]
fn condition_infeasible_hub_weight() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\nn = 100\nrho = 0.6\nreplicas = 1", "[condition]\nhubs = [{ u = [0.5], y = 0.01 }]");
    let (code, _, err) = run(&["condition", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("increase n"), "{err}");
}

#[test]
fn edge_dump_matches_reader() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 2\nn = 300\nreplicas = 1\ndump_edges = true", "");
    let out = dir.path().join("o");
    assert_eq!(run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 0);
    let f = std::fs::File::open(out.join("edges_r0.txt")).unwrap();
    let list = condensate::sampler::read_edge_list(std::io::BufReader::new(f)).unwrap();
    assert_eq!(list.d, 1);
    assert_eq!(list.seed, 2);
    let density = body(&out.join("simulate.csv"))
        .lines()
        .find(|l| l.contains(",edge_density,"))
        .map(|l| l.rsplit(',').nth(1).unwrap().parse::<f64>().unwrap())
        .unwrap();
    assert!((list.edges.len() as f64 / 300.0 - density).abs() < 1e-12);
}

#[test]
fn condition_y_law_hub_degrees_match_lambda_sum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 3\nn = 10000\nrho = 1.5\nreplicas = 4", "[condition]\na_max = 5\nwave = false");
    let out = dir.path().join("o");
    let (code, _, err) = run(&["condition", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let text = body(&out.join("condition.csv"));
    let column = |stat: &str| -> Vec<f64> {
        text.lines()
            .filter(|l| l.split(',').nth(4) == Some(stat))
            .map(|l| l.rsplit(',').nth(1).unwrap().parse().unwrap())
            .collect()
    };
    let (deg, lam) = (column("hub_degree_sum_scaled"), column("hub_lambda_sum"));
    assert_eq!(deg.len(), 4);
    for (d, l) in deg.iter().zip(&lam) {
        assert!(*l > 1.5 && (d - l).abs() < 0.05 * l, "{d} vs {l}");
    }
}
