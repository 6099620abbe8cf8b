//! On-disk layout of run results.
//!
//! Every file is written to a temporary sibling first and renamed into
//! place, so an interrupted run never leaves a truncated file behind.
//! Floats use Rust's shortest round-trip formatting; wall-clock durations
//! are never written, which keeps reruns byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use egi_core::RunRecord;
use serde_json::{json, Map, Value};

use crate::error::{HarnessError, Result};
use crate::marginal::MarginalHistogram;
use crate::mc::Histogram2d;

pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| HarnessError::validation("output_dir", format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, contents).map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn float(x: f64) -> String {
    format!("{x:?}")
}

fn row(fields: impl IntoIterator<Item = String>) -> String {
    let mut line = fields.into_iter().collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

pub fn trace_csv(record: &RunRecord) -> String {
    let d = record.final_mean.len();
    let mut out = row(std::iter::once("iteration".to_string())
        .chain((0..d).map(|i| format!("mean_{i}")))
        .chain(["V_mean", "spread", "accept_rate"].map(String::from)));
    for r in &record.trace {
        out += &row(std::iter::once(r.iteration.to_string())
            .chain(r.mean.iter().map(|&x| float(x)))
            .chain([
                float(r.value_at_mean),
                float(r.spread),
                r.accept_rate.map(float).unwrap_or_default(),
            ]));
    }
    out
}

pub fn samples_csv(record: &RunRecord) -> String {
    let d = record.final_mean.len();
    let mut out = row((0..d).map(|i| format!("x_{i}")));
    for s in &record.samples {
        out += &row(s.iter().map(|&x| float(x)));
    }
    out
}

pub fn marginal_csv(h: &MarginalHistogram, reference: Option<&MarginalHistogram>) -> String {
    let mut out = String::from("bin_lower,bin_upper,count,density");
    if reference.is_some() {
        out += ",reference_density";
    }
    out.push('\n');
    let edges = h.bins.edges();
    for k in 0..h.bins.n_bins {
        let _ = write!(out, "{},{},{},{}", float(edges[k]), float(edges[k + 1]), h.counts[k], float(h.densities[k]));
        if let Some(r) = reference {
            let _ = write!(out, ",{}", float(r.densities[k]));
        }
        out.push('\n');
    }
    out
}

pub fn histogram_2d_csv(h: &Histogram2d) -> String {
    let mut out = String::from("x_lower,y_lower,count\n");
    for (&(i, j), &c) in &h.counts {
        let _ = writeln!(out, "{},{},{}", float(i as f64 * h.bin_width), float(j as f64 * h.bin_width), c);
    }
    out
}

fn vector(x: &nalgebra::DVector<f64>) -> Value {
    json!(x.as_slice())
}

/// Summary of one run. Non-finite floats become `null`.
pub fn run_meta(record: &RunRecord, config: &Value) -> Value {
    let mut m = Map::new();
    m.insert("config".into(), config.clone());
    m.insert("method".into(), json!(record.method));
    m.insert("seed".into(), json!(record.seed));
    m.insert("iterations".into(), json!(record.iterations));
    m.insert("final_mean".into(), vector(&record.final_mean));
    m.insert("final_value".into(), json!(record.final_value));
    m.insert("best_value".into(), json!(record.best_value));
    m.insert(
        "acceptance".into(),
        match record.acceptance {
            Some((accepted, proposed)) => json!({
                "accepted": accepted,
                "proposed": proposed,
                "rate": record.accept_rate(),
            }),
            None => Value::Null,
        },
    );
    m.insert(
        "abort".into(),
        match &record.abort {
            Some(a) => json!({ "iteration": a.iteration, "error": a.error.to_string() }),
            None => Value::Null,
        },
    );
    if !record.samples.is_empty() {
        m.insert("n_samples".into(), json!(record.samples.len()));
        m.insert("sample_mean".into(), record.sample_mean().map(|x| vector(&x)).unwrap_or(Value::Null));
        m.insert(
            "sample_variance".into(),
            record.sample_variance().map(|x| vector(&x)).unwrap_or(Value::Null),
        );
    }
    Value::Object(m)
}

pub fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// Writes `trace.csv`, `meta.json` and, for samplers, `samples.csv` into `dir`.
pub fn write_record(record: &RunRecord, meta: &Value, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_atomic(&dir.join("trace.csv"), &trace_csv(record))?;
    if !record.samples.is_empty() {
        write_atomic(&dir.join("samples.csv"), &samples_csv(record))?;
    }
    write_atomic(&dir.join("meta.json"), &json_text(meta))
}
