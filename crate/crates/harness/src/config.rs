//! Experiment configuration files.
//!
//! The format is one `key = value` pair per line. `#` starts a comment,
//! blank lines are ignored and arrays are written as `[a, b, c]`:
//!
//! ```text
//! experiment_name = rastrigin2d_egicbo
//! potential = rastrigin2d
//! ensemble_size = 4
//! init_lower = [-4, -4]
//! init_upper = -1          # a scalar applies to every coordinate
//! algorithm = egi_cbo
//! kappa = 0.5
//! ```
//!
//! Keys that do not apply to the chosen algorithm are rejected rather than
//! ignored.

use std::collections::BTreeMap;
use std::path::PathBuf;

use egi_core::objectives::{Potential, PotentialKind};
use egi_core::{CboConfig, NoiseMode, SamplerConfig, SamplerMethod};
use nalgebra::DVector;
use serde_json::{json, Value};

use crate::error::{HarnessError, Result};

const COMMON_KEYS: &[&str] = &[
    "experiment_name",
    "potential",
    "dim",
    "ensemble_size",
    "init_lower",
    "init_upper",
    "allow_degenerate_box",
    "algorithm",
    "n_iters",
    "n_mc_runs",
    "base_seed",
    "output_dir",
    "trace_every",
];
const CBO_KEYS: &[&str] = &["alpha", "lambda", "sigma", "tau", "noise"];
const EGI_CBO_KEYS: &[&str] = &["kappa", "xi", "gamma", "extrapolate"];
const SAMPLER_KEYS: &[&str] = &["step", "burn_in", "xi", "gamma"];
const ALDI_KEYS: &[&str] = &["aldi_correction"];

/// Axis-aligned box the initial ensemble is drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct InitBox {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    /// Permit `lower == upper` on some axes.
    pub allow_degenerate: bool,
}

impl InitBox {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>, allow_degenerate: bool) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(HarnessError::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for i in 0..lower.len() {
            let (lo, hi) = (lower[i], upper[i]);
            if !lo.is_finite() || !hi.is_finite() {
                return Err(HarnessError::validation("init_lower", format!("axis {i} bounds must be finite")));
            }
            let ok = if allow_degenerate { lo <= hi } else { lo < hi };
            if !ok {
                return Err(HarnessError::validation(
                    "init_upper",
                    format!("axis {i}: lower {lo} must be below upper {hi}"),
                ));
            }
        }
        Ok(Self {
            lower,
            upper,
            allow_degenerate,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    /// `egi` selects EGI-CBO; vanilla CBO otherwise.
    Optimize { cfg: CboConfig, egi: bool },
    Sample { cfg: SamplerConfig, burn_in: usize },
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Optimize { egi: false, .. } => "cbo",
            Algorithm::Optimize { egi: true, .. } => "egi_cbo",
            Algorithm::Sample { cfg, .. } => cfg.method.name(),
        }
    }

    pub fn n_iters(&self) -> usize {
        match self {
            Algorithm::Optimize { cfg, .. } => cfg.n_iters,
            Algorithm::Sample { cfg, .. } => cfg.n_iters,
        }
    }

    pub(crate) fn with_seed(self, seed: u64) -> Self {
        match self {
            Algorithm::Optimize { cfg, egi } => Algorithm::Optimize {
                cfg: CboConfig { seed, ..cfg },
                egi,
            },
            Algorithm::Sample { cfg, burn_in } => Algorithm::Sample {
                cfg: SamplerConfig { seed, ..cfg },
                burn_in,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment_name: String,
    pub potential: Potential,
    pub ensemble_size: usize,
    pub init_box: InitBox,
    pub algorithm: Algorithm,
    pub n_mc_runs: usize,
    /// Seeds the initial ensemble; Monte Carlo run `k` uses `base_seed + k + 1`
    /// for its dynamics.
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub trace_every: usize,
}

impl ExperimentConfig {
    pub fn dim(&self) -> usize {
        self.init_box.dim()
    }

    /// Dynamics seed of Monte Carlo run `k`.
    pub fn run_seed(&self, k: usize) -> u64 {
        self.base_seed.wrapping_add(k as u64 + 1)
    }

    /// All effective settings, for `meta.json`.
    pub fn snapshot(&self) -> Value {
        let mut v = json!({
            "experiment_name": self.experiment_name,
            "potential": self.potential.name(),
            "dim": self.dim(),
            "ensemble_size": self.ensemble_size,
            "init_lower": self.init_box.lower.as_slice(),
            "init_upper": self.init_box.upper.as_slice(),
            "algorithm": self.algorithm.name(),
            "n_mc_runs": self.n_mc_runs,
            "base_seed": self.base_seed,
            "trace_every": self.trace_every,
        });
        let extra = match &self.algorithm {
            Algorithm::Optimize { cfg, egi } => {
                let mut o = json!({
                    "alpha": cfg.alpha,
                    "lambda": cfg.lambda,
                    "sigma": cfg.sigma,
                    "tau": cfg.tau,
                    "n_iters": cfg.n_iters,
                    "noise": cfg.noise.name(),
                });
                if *egi {
                    o["kappa"] = json!(cfg.kappa);
                    o["xi"] = json!(cfg.xi);
                    o["gamma"] = json!(cfg.gamma);
                    o["extrapolate"] = json!(cfg.extrapolate);
                }
                o
            }
            Algorithm::Sample { cfg, burn_in } => {
                let mut o = json!({
                    "step": cfg.step,
                    "n_iters": cfg.n_iters,
                    "burn_in": burn_in,
                    "xi": cfg.xi,
                    "gamma": cfg.gamma,
                });
                if is_aldi(cfg.method) {
                    o["aldi_correction"] = json!(cfg.aldi_correction);
                }
                o
            }
        };
        if let (Value::Object(base), Value::Object(more)) = (&mut v, extra) {
            base.extend(more);
        }
        v
    }
}

fn is_aldi(m: SamplerMethod) -> bool {
    matches!(
        m,
        SamplerMethod::AldiGradFree | SamplerMethod::EgiAldi | SamplerMethod::EgiAldiExtra
    )
}

#[derive(Debug, Clone, PartialEq)]
enum RawValue {
    Scalar(String),
    Array(Vec<String>),
}

#[derive(Debug)]
struct Entry {
    line: usize,
    value: RawValue,
}

fn parse_lines(text: &str) -> Result<BTreeMap<String, Entry>> {
    let mut entries = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(HarnessError::Parse {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
            return Err(HarnessError::Parse {
                line,
                message: format!("malformed key `{key}`"),
            });
        }
        let value = value.trim();
        let value = if let Some(inner) = value.strip_prefix('[') {
            let Some(inner) = inner.strip_suffix(']') else {
                return Err(HarnessError::Parse {
                    line,
                    message: "unterminated array".into(),
                });
            };
            let items: Vec<String> = if inner.trim().is_empty() {
                Vec::new()
            } else {
                inner.split(',').map(|s| s.trim().to_string()).collect()
            };
            if items.iter().any(|s| s.is_empty()) {
                return Err(HarnessError::Parse {
                    line,
                    message: "empty array element".into(),
                });
            }
            RawValue::Array(items)
        } else if value.is_empty() {
            return Err(HarnessError::Parse {
                line,
                message: format!("missing value for `{key}`"),
            });
        } else {
            RawValue::Scalar(value.to_string())
        };
        if let Some(prev) = entries.get(key) {
            let prev: &Entry = prev;
            return Err(HarnessError::Parse {
                line,
                message: format!("duplicate key `{key}` (first set on line {})", prev.line),
            });
        }
        entries.insert(key.to_string(), Entry { line, value });
    }
    Ok(entries)
}

struct Fields {
    entries: BTreeMap<String, Entry>,
}

impl Fields {
    fn scalar(&self, key: &str) -> Result<Option<&str>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(Entry {
                value: RawValue::Scalar(s),
                ..
            }) => Ok(Some(s)),
            Some(_) => Err(HarnessError::validation(key, "expected a single value, not an array")),
        }
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.scalar(key)?
            .ok_or_else(|| HarnessError::validation(key, "required key is missing"))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        self.scalar(key)?
            .map(|s| {
                s.parse::<T>()
                    .map_err(|_| HarnessError::validation(key, format!("expected {what}, got `{s}`")))
            })
            .transpose()
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.parsed::<f64>(key, "a number")?.unwrap_or(default))
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.parsed::<usize>(key, "a nonnegative integer")?.unwrap_or(default))
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        Ok(self.parsed::<bool>(key, "`true` or `false`")?.unwrap_or(default))
    }

    /// A per-coordinate vector given either as an array of length `dim` or
    /// as a scalar applied to every coordinate.
    fn vector(&self, key: &str, dim: usize) -> Result<DVector<f64>> {
        let entry = self
            .entries
            .get(key)
            .ok_or_else(|| HarnessError::validation(key, "required key is missing"))?;
        let num = |s: &String| {
            s.parse::<f64>()
                .map_err(|_| HarnessError::validation(key, format!("expected a number, got `{s}`")))
        };
        match &entry.value {
            RawValue::Scalar(s) => Ok(DVector::from_element(dim, num(s)?)),
            RawValue::Array(items) => {
                if items.len() != dim {
                    return Err(HarnessError::validation(
                        key,
                        format!("expected {dim} entries, got {}", items.len()),
                    ));
                }
                let vals = items.iter().map(num).collect::<Result<Vec<_>>>()?;
                Ok(DVector::from_vec(vals))
            }
        }
    }
}

fn check_range(key: &str, value: f64, positive: bool) -> Result<()> {
    let ok = value.is_finite() && if positive { value > 0.0 } else { value >= 0.0 };
    if ok {
        Ok(())
    } else {
        let need = if positive { "positive" } else { "nonnegative" };
        Err(HarnessError::validation(key, format!("must be {need} and finite, got {value}")))
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let fields = Fields {
        entries: parse_lines(text)?,
    };

    let experiment_name = fields.required("experiment_name")?.to_string();
    let algorithm_name = fields.required("algorithm")?;
    let (allowed, sampler): (Vec<&str>, Option<SamplerMethod>) = match algorithm_name {
        "cbo" => ([COMMON_KEYS, CBO_KEYS].concat(), None),
        "egi_cbo" => ([COMMON_KEYS, CBO_KEYS, EGI_CBO_KEYS].concat(), None),
        other => {
            let method: SamplerMethod = other.parse().map_err(|_| {
                HarnessError::validation(
                    "algorithm",
                    format!(
                        "unknown algorithm `{other}`; expected one of cbo, egi_cbo, egi_ls, egi_mala, \
                         aldi_gradfree, egi_aldi, egi_aldi_extra"
                    ),
                )
            })?;
            let mut keys = [COMMON_KEYS, SAMPLER_KEYS].concat();
            if is_aldi(method) {
                keys.extend_from_slice(ALDI_KEYS);
            }
            (keys, Some(method))
        }
    };
    // report the earliest offending line first
    let mut by_line: Vec<(&String, &Entry)> = fields.entries.iter().collect();
    by_line.sort_by_key(|(_, e)| e.line);
    for (key, _) in &by_line {
        if !allowed.contains(&key.as_str()) {
            let known = [COMMON_KEYS, CBO_KEYS, EGI_CBO_KEYS, SAMPLER_KEYS, ALDI_KEYS].concat();
            let message = if known.contains(&key.as_str()) {
                format!("not applicable to algorithm `{algorithm_name}`")
            } else {
                "unknown key".to_string()
            };
            return Err(HarnessError::validation(key, message));
        }
    }

    let kind: PotentialKind = fields
        .required("potential")?
        .parse()
        .map_err(|e: egi_core::Error| HarnessError::validation("potential", e.to_string()))?;
    let dim = match (kind.fixed_dim(), fields.parsed::<usize>("dim", "a positive integer")?) {
        (Some(fixed), Some(d)) if d != fixed => {
            return Err(HarnessError::validation(
                "dim",
                format!("`{kind}` is {fixed}-dimensional, got {d}"),
            ))
        }
        (Some(fixed), _) => fixed,
        (None, Some(d)) if d >= 1 => d,
        (None, _) => return Err(HarnessError::validation("dim", format!("`{kind}` needs a positive `dim`"))),
    };
    let potential = Potential::new(kind, dim).map_err(|e| HarnessError::validation("dim", e.to_string()))?;

    let ensemble_size: usize = fields
        .parsed("ensemble_size", "a positive integer")?
        .ok_or_else(|| HarnessError::validation("ensemble_size", "required key is missing"))?;
    let min_size = if sampler.is_some() { 2 } else { 1 };
    if ensemble_size < min_size {
        return Err(HarnessError::validation(
            "ensemble_size",
            format!("must be at least {min_size} for `{algorithm_name}`"),
        ));
    }

    let init_box = InitBox::new(
        fields.vector("init_lower", dim)?,
        fields.vector("init_upper", dim)?,
        fields.bool_or("allow_degenerate_box", false)?,
    )?;

    let n_iters = fields.usize_or("n_iters", 1000)?;
    if n_iters == 0 {
        return Err(HarnessError::validation("n_iters", "must be at least 1"));
    }
    let xi = fields.f64_or("xi", 0.0)?;
    check_range("xi", xi, false)?;
    let gamma = fields.f64_or("gamma", 1.0)?;
    check_range("gamma", gamma, true)?;

    let algorithm = match sampler {
        None => {
            let d = CboConfig::default();
            let cfg = CboConfig {
                alpha: fields.f64_or("alpha", d.alpha)?,
                lambda: fields.f64_or("lambda", d.lambda)?,
                sigma: fields.f64_or("sigma", d.sigma)?,
                kappa: fields.f64_or("kappa", d.kappa)?,
                xi,
                gamma,
                tau: fields.f64_or("tau", d.tau)?,
                n_iters,
                noise: match fields.scalar("noise")? {
                    None => d.noise,
                    Some(s) => s.parse::<NoiseMode>().map_err(|_| {
                        HarnessError::validation("noise", format!("expected norm_proportional or component_wise, got `{s}`"))
                    })?,
                },
                extrapolate: fields.bool_or("extrapolate", false)?,
                seed: 0,
            };
            for (key, value) in [("alpha", cfg.alpha), ("lambda", cfg.lambda), ("sigma", cfg.sigma), ("kappa", cfg.kappa)] {
                check_range(key, value, false)?;
            }
            check_range("tau", cfg.tau, true)?;
            Algorithm::Optimize {
                cfg,
                egi: algorithm_name == "egi_cbo",
            }
        }
        Some(method) => {
            let d = SamplerConfig::new(method);
            let cfg = SamplerConfig {
                step: fields.f64_or("step", d.step)?,
                n_iters,
                xi,
                gamma,
                aldi_correction: fields.bool_or("aldi_correction", d.aldi_correction)?,
                ..d
            };
            check_range("step", cfg.step, true)?;
            let burn_in = fields.usize_or("burn_in", cfg.default_burn_in())?;
            if burn_in > n_iters {
                return Err(HarnessError::validation("burn_in", format!("exceeds n_iters = {n_iters}")));
            }
            if method == SamplerMethod::AldiGradFree && kind != PotentialKind::BananaPosterior {
                return Err(HarnessError::validation(
                    "algorithm",
                    "aldi_gradfree needs an inverse-problem target (potential = banana_posterior)",
                ));
            }
            Algorithm::Sample { cfg, burn_in }
        }
    };

    let n_mc_runs = fields.usize_or("n_mc_runs", 1)?;
    if n_mc_runs == 0 {
        return Err(HarnessError::validation("n_mc_runs", "must be at least 1"));
    }
    let trace_every = fields.usize_or("trace_every", 1)?;
    if trace_every == 0 {
        return Err(HarnessError::validation("trace_every", "must be at least 1"));
    }
    let output_dir = fields
        .scalar("output_dir")?
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out").join(&experiment_name));

    Ok(ExperimentConfig {
        experiment_name,
        potential,
        ensemble_size,
        init_box,
        algorithm,
        n_mc_runs,
        base_seed: fields.parsed("base_seed", "a nonnegative integer")?.unwrap_or(0),
        output_dir,
        trace_every,
    })
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub trace_every: Option<usize>,
}

impl ExperimentConfig {
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.base_seed = seed;
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(every) = o.trace_every {
            if every == 0 {
                return Err(HarnessError::validation("trace_every", "must be at least 1"));
            }
            self.trace_every = every;
        }
        Ok(())
    }
}
