use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const CSV_HEADER: &str = "experiment_id,n,seed,replica,statistic,key_a,key_b,value,stderr";

/// Float with 17 significant digits; empty for NaN.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// JSON number with 17 significant digits; `null` when not finite.
pub fn json_f64(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    fmt_f64(x).parse::<Number>().map(Value::Number).unwrap_or(Value::Null)
}

/// A key column: integer labels or bin edges.
#[derive(Debug, Clone, PartialEq)]
pub enum Key {
    None,
    Int(u64),
    Real(f64),
}

impl Key {
    fn render(&self) -> String {
        match self {
            Key::None => String::new(),
            Key::Int(i) => i.to_string(),
            Key::Real(x) => fmt_f64(*x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub n: f64,
    /// `None` for values pooled over replicas.
    pub replica: Option<u64>,
    pub statistic: &'static str,
    pub key_a: Key,
    pub key_b: Key,
    pub value: f64,
    pub stderr: Option<f64>,
}

impl Row {
    pub fn new(n: f64, replica: Option<u64>, statistic: &'static str, value: f64) -> Self {
        Self { n, replica, statistic, key_a: Key::None, key_b: Key::None, value, stderr: None }
    }

    pub fn keys(mut self, a: Key, b: Key) -> Self {
        self.key_a = a;
        self.key_b = b;
        self
    }

    pub fn stderr(mut self, se: f64) -> Self {
        self.stderr = Some(se);
        self
    }
}

/// Writes `rows` as CSV and returns the row count.
pub fn write_csv(path: &Path, experiment_id: &str, seed: u64, rows: &[Row]) -> Result<usize> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            experiment_id,
            fmt_f64(r.n),
            seed,
            r.replica.map(|x| x.to_string()).unwrap_or_default(),
            r.statistic,
            r.key_a.render(),
            r.key_b.render(),
            fmt_f64(r.value),
            r.stderr.map(fmt_f64).unwrap_or_default(),
        )?;
    }
    out.flush()?;
    Ok(rows.len())
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| crate::error::Error::Io(e.into()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub rows: usize,
}

/// Provenance of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment_id: String,
    pub command: String,
    pub config_sha256: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    pub outputs: Vec<OutputFile>,
    pub runtime_seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
