//! Running a configured experiment end to end and writing its outputs.

use std::fmt::Write as _;

use egi_core::objectives::PotentialKind;
use egi_core::RunRecord;
use serde_json::{json, Value};

use crate::config::{Algorithm, ExperimentConfig};
use crate::error::Result;
use crate::marginal::{reference_marginal, tv_distance, MarginalHistogram, BANANA_BINS};
use crate::mc::{final_mean_histogram_2d, run_monte_carlo, run_single, sample_init_ensemble};
use crate::output::{create_dir, histogram_2d_csv, json_text, marginal_csv, run_meta, write_atomic, write_record};

/// Quadrature grid for the banana reference marginal.
pub const REFERENCE_GRID: (f64, f64) = (-8.0, 8.0);
pub const REFERENCE_NODES: usize = 800;
/// Square bin width of the final-mean histogram.
pub const FINAL_MEAN_BIN_WIDTH: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// One run, written directly into the output directory.
    Single,
    /// `n_mc_runs` runs in `run_XXX` subdirectories plus batch summaries.
    MonteCarlo,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    /// Total-variation distance of each run's `x_0` marginal to the
    /// quadrature reference, for banana sampling runs with samples.
    pub marginal_tv: Vec<Option<f64>>,
}

impl ExperimentOutcome {
    pub fn aborted(&self) -> usize {
        self.records.iter().filter(|r| r.is_aborted()).count()
    }
}

/// The `x_0` reference marginal when `cfg` samples the banana posterior.
pub fn banana_reference(cfg: &ExperimentConfig) -> Result<Option<MarginalHistogram>> {
    let sampling = matches!(cfg.algorithm, Algorithm::Sample { .. });
    if !sampling || cfg.potential.kind() != PotentialKind::BananaPosterior {
        return Ok(None);
    }
    reference_marginal(&cfg.potential, 0, REFERENCE_GRID, REFERENCE_NODES, BANANA_BINS).map(Some)
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Writes one run into `dir` and returns its marginal TV distance, if any.
fn write_run(
    record: &RunRecord,
    cfg: &ExperimentConfig,
    reference: Option<&MarginalHistogram>,
    dir: &std::path::Path,
) -> Result<Option<f64>> {
    let mut meta = run_meta(record, &cfg.snapshot());
    let mut tv = None;
    if let (Some(reference), false) = (reference, record.samples.is_empty()) {
        let h = MarginalHistogram::from_samples(&record.samples, 0, BANANA_BINS)?;
        let d = tv_distance(&h, reference)?;
        meta["marginal_x0"] = json!({
            "tv_distance": d,
            "outside": h.outside,
            "bins": h.bins.n_bins,
            "lower": h.bins.lower,
            "upper": h.bins.upper,
        });
        create_dir(dir)?;
        write_atomic(&dir.join("marginal_x0.csv"), &marginal_csv(&h, Some(reference)))?;
        tv = Some(d);
    }
    write_record(record, &meta, dir)?;
    Ok(tv)
}

fn runs_csv(records: &[RunRecord], tv: &[Option<f64>]) -> String {
    let d = records.first().map_or(0, |r| r.final_mean.len());
    let mut out = String::from("run,seed,iterations,final_value,best_value");
    for i in 0..d {
        let _ = write!(out, ",final_mean_{i}");
    }
    out += ",marginal_tv,aborted\n";
    for (k, (r, t)) in records.iter().zip(tv).enumerate() {
        let _ = write!(out, "{k},{},{},{:?},{:?}", r.seed, r.iterations, r.final_value, r.best_value);
        for x in r.final_mean.iter() {
            let _ = write!(out, ",{x:?}");
        }
        let _ = writeln!(out, ",{},{}", t.map(|t| format!("{t:?}")).unwrap_or_default(), r.is_aborted());
    }
    out
}

/// Runs `cfg` and writes everything below `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, mode: Mode) -> Result<ExperimentOutcome> {
    let reference = banana_reference(cfg)?;
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    match mode {
        Mode::Single => {
            let init = sample_init_ensemble(&cfg.init_box, cfg.ensemble_size, cfg.base_seed);
            let record = run_single(cfg, init, cfg.run_seed(0))?;
            let tv = write_run(&record, cfg, reference.as_ref(), dir)?;
            Ok(ExperimentOutcome {
                records: vec![record],
                marginal_tv: vec![tv],
            })
        }
        Mode::MonteCarlo => {
            let records = run_monte_carlo(cfg)?;
            let mut marginal_tv = Vec::with_capacity(records.len());
            for (k, r) in records.iter().enumerate() {
                marginal_tv.push(write_run(r, cfg, reference.as_ref(), &dir.join(format!("run_{k:03}")))?);
            }
            write_atomic(&dir.join("runs.csv"), &runs_csv(&records, &marginal_tv))?;
            let is_optimizer = matches!(cfg.algorithm, Algorithm::Optimize { .. });
            if is_optimizer && cfg.dim() == 2 {
                let h = final_mean_histogram_2d(&records, FINAL_MEAN_BIN_WIDTH)?;
                write_atomic(&dir.join("final_mean_histogram.csv"), &histogram_2d_csv(&h))?;
            }
            let finals: Vec<f64> = records.iter().map(|r| r.final_value).collect();
            let tvs: Vec<f64> = marginal_tv.iter().flatten().copied().collect();
            let summary = json!({
                "config": cfg.snapshot(),
                "runs": records.len(),
                "aborted": records.iter().filter(|r| r.is_aborted()).count(),
                "median_final_value": median(&finals),
                "min_final_value": finals.iter().copied().fold(f64::INFINITY, f64::min),
                "median_marginal_tv": if tvs.is_empty() { Value::Null } else { json!(median(&tvs)) },
            });
            write_atomic(&dir.join("summary.json"), &json_text(&summary))?;
            Ok(ExperimentOutcome { records, marginal_tv })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use std::fs;

    fn config(body: &str, out: &std::path::Path) -> ExperimentConfig {
        let mut cfg = parse_config(body).unwrap();
        cfg.output_dir = out.to_path_buf();
        cfg
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn single_run_layout_and_row_count() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(
            "experiment_name = t\npotential = himmelblau\nensemble_size = 5\ninit_lower = -3\ninit_upper = 3\n\
             algorithm = cbo\nn_iters = 103\ntrace_every = 10\n",
            dir.path(),
        );
        run_experiment(&cfg, Mode::Single).unwrap();
        let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
        assert_eq!(trace.lines().count(), 1 + 1 + 103 / 10);
        assert!(trace.starts_with("iteration,mean_0,mean_1,V_mean,spread,accept_rate\n"));
        assert!(!dir.path().join("samples.csv").exists());
        let meta: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("meta.json")).unwrap()).unwrap();
        assert_eq!(meta["seed"], 1);
        assert_eq!(meta["config"]["experiment_name"], "t");
    }

    #[test]
    fn monte_carlo_layout() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(
            "experiment_name = t\npotential = rastrigin2d\nensemble_size = 4\ninit_lower = -4\ninit_upper = -1\n\
             algorithm = egi_cbo\nkappa = 0.5\nn_iters = 30\nn_mc_runs = 3\n",
            dir.path(),
        );
        let out = run_experiment(&cfg, Mode::MonteCarlo).unwrap();
        assert_eq!(out.records.len(), 3);
        for k in 0..3 {
            assert!(dir.path().join(format!("run_{k:03}/trace.csv")).exists());
        }
        let runs = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
        assert_eq!(runs.lines().count(), 4);
        let hist = fs::read_to_string(dir.path().join("final_mean_histogram.csv")).unwrap();
        let total: usize = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
        assert_eq!(total, 3);
    }

    #[test]
    fn banana_sampler_writes_marginal() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(
            "experiment_name = b\npotential = banana_posterior\nensemble_size = 6\ninit_lower = -1\ninit_upper = 1\n\
             algorithm = egi_mala\nstep = 0.05\nn_iters = 40\nburn_in = 10\n",
            dir.path(),
        );
        let out = run_experiment(&cfg, Mode::Single).unwrap();
        let tv = out.marginal_tv[0].unwrap();
        assert!((0.0..=1.0).contains(&tv));
        let csv = fs::read_to_string(dir.path().join("marginal_x0.csv")).unwrap();
        assert_eq!(csv.lines().count(), 41);
        assert!(dir.path().join("samples.csv").exists());
    }

    #[test]
    fn sampler_with_empty_pool_still_writes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(
            "experiment_name = b\npotential = banana_posterior\nensemble_size = 4\ninit_lower = -1\ninit_upper = 1\n\
             algorithm = egi_ls\nstep = 0.01\nn_iters = 10\nburn_in = 10\n",
            dir.path(),
        );
        let out = run_experiment(&cfg, Mode::Single).unwrap();
        assert!(out.records[0].samples.is_empty());
        assert_eq!(out.marginal_tv[0], None);
        assert!(!dir.path().join("samples.csv").exists());
    }
}
