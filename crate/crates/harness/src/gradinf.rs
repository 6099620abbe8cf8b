//! The `gradinf` subcommand: EGI on a file of points and values.

use egi_core::{infer_at, EgiConfig, EvaluatedEnsemble, Reference};
use nalgebra::DVector;
use serde_json::{json, Value};

use crate::error::{HarnessError, Result};

/// Parses rows of `x_1 ... x_d value`, separated by commas and/or
/// whitespace. Blank lines and `#` comments are skipped.
pub fn parse_points(text: &str) -> Result<EvaluatedEnsemble> {
    let mut points = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|_| HarnessError::Parse {
                    line: i + 1,
                    message: format!("not a number: `{s}`"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if nums.len() < 2 {
            return Err(HarnessError::Parse {
                line: i + 1,
                message: "need at least one coordinate and a value".into(),
            });
        }
        match width {
            None => width = Some(nums.len()),
            Some(w) if w != nums.len() => {
                return Err(HarnessError::Parse {
                    line: i + 1,
                    message: format!("expected {w} columns, found {}", nums.len()),
                })
            }
            _ => {}
        }
        let (x, v) = nums.split_at(nums.len() - 1);
        points.push(DVector::from_column_slice(x));
        values.push(v[0]);
    }
    if points.is_empty() {
        return Err(HarnessError::Parse {
            line: 0,
            message: "no points".into(),
        });
    }
    Ok(EvaluatedEnsemble::new(points, values)?)
}

/// Where `gradinf` evaluates the derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Member(usize),
    External { point: Vec<f64>, value: f64 },
}

/// Gradient and Hessian at `target` as a JSON object.
pub fn gradinf_report(ensemble: &EvaluatedEnsemble, target: &Target, config: &EgiConfig) -> Result<Value> {
    config.validate()?;
    let point;
    let reference = match target {
        Target::Member(i) => Reference::Member(*i),
        Target::External { point: p, value } => {
            if p.len() != ensemble.dim() {
                return Err(HarnessError::DimensionMismatch {
                    expected: ensemble.dim(),
                    found: p.len(),
                });
            }
            point = DVector::from_column_slice(p);
            Reference::External {
                point: &point,
                value: *value,
            }
        }
    };
    let est = infer_at(ensemble, reference, config)?;
    let h = est.hessian();
    let rows: Vec<Vec<f64>> = h.row_iter().map(|r| r.iter().copied().collect()).collect();
    Ok(json!({
        "reference": est.reference.as_slice(),
        "reference_value": est.reference_value,
        "xi": config.xi,
        "gamma": config.gamma,
        "gradient": est.gradient().as_slice(),
        "hessian": rows,
    }))
}
