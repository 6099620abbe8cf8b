//! Initial ensembles, single runs and Monte Carlo batches.

use std::collections::BTreeMap;

use egi_core::samplers::{run_sampler, InverseProblemSpec, SamplerTarget};
use egi_core::objectives::PotentialKind;
use egi_core::{run_egi_cbo, run_optimizer, RunRecord};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Algorithm, ExperimentConfig, InitBox};
use crate::error::{HarnessError, Result};

/// `j` i.i.d. uniform points in the box. Degenerate axes yield their bound.
pub fn sample_init_ensemble(b: &InitBox, j: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..j)
        .map(|_| {
            DVector::from_fn(b.dim(), |i, _| {
                let (lo, hi) = (b.lower[i], b.upper[i]);
                if lo < hi {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            })
        })
        .collect()
}

/// One run of the configured algorithm from `init` with dynamics seed `seed`.
pub fn run_single(cfg: &ExperimentConfig, init: Vec<DVector<f64>>, seed: u64) -> Result<RunRecord> {
    let record = match cfg.algorithm.with_seed(seed) {
        Algorithm::Optimize { cfg: c, egi: true } => run_egi_cbo(&cfg.potential, init, &c, cfg.trace_every)?,
        Algorithm::Optimize { cfg: c, egi: false } => {
            run_optimizer(&cfg.potential, init, &c, cfg.trace_every)?
        }
        Algorithm::Sample { cfg: c, burn_in } => {
            if cfg.potential.kind() == PotentialKind::BananaPosterior {
                let problem = InverseProblemSpec::banana();
                run_sampler(SamplerTarget::Problem(&problem), init, &c, burn_in, cfg.trace_every)?
            } else {
                run_sampler(SamplerTarget::Potential(&cfg.potential), init, &c, burn_in, cfg.trace_every)?
            }
        }
    };
    Ok(record)
}

/// Runs `cfg.n_mc_runs` independent copies that share the initial ensemble
/// drawn from `base_seed`; run `k` uses dynamics seed `base_seed + k + 1`.
///
/// A run that breaks down midway keeps its partial record with the abort
/// reason; the rest of the batch is unaffected. Results are in run order.
pub fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let init = sample_init_ensemble(&cfg.init_box, cfg.ensemble_size, cfg.base_seed);
    (0..cfg.n_mc_runs)
        .into_par_iter()
        .map(|k| run_single(cfg, init.clone(), cfg.run_seed(k)))
        .collect()
}

/// Counts of final weighted means per square bin. Bin `(i, j)` covers
/// `[i w, (i+1) w) x [j w, (j+1) w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2d {
    pub bin_width: f64,
    pub counts: BTreeMap<(i64, i64), usize>,
}

impl Histogram2d {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

pub fn final_mean_histogram_2d(records: &[RunRecord], bin_width: f64) -> Result<Histogram2d> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(HarnessError::validation("bin_width", format!("must be positive, got {bin_width}")));
    }
    let mut counts = BTreeMap::new();
    for r in records {
        if r.final_mean.len() != 2 {
            return Err(HarnessError::DimensionMismatch {
                expected: 2,
                found: r.final_mean.len(),
            });
        }
        let bin = (
            (r.final_mean[0] / bin_width).floor() as i64,
            (r.final_mean[1] / bin_width).floor() as i64,
        );
        *counts.entry(bin).or_insert(0) += 1;
    }
    Ok(Histogram2d { bin_width, counts })
}
