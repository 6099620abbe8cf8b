use std::time::Duration;

use nalgebra::DVector;

use crate::error::Error;

/// One traced iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// Weighted mean (optimizers) or ensemble mean (samplers).
    pub mean: DVector<f64>,
    pub value_at_mean: f64,
    /// Largest pairwise distance between members.
    pub spread: f64,
    /// Cumulative Metropolis acceptance rate, for samplers that have one.
    pub accept_rate: Option<f64>,
}

/// Why and where a run stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct RunAbort {
    pub iteration: usize,
    pub error: Error,
}

/// Everything a single optimizer or sampler run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub method: &'static str,
    pub seed: u64,
    pub trace: Vec<TraceRow>,
    /// Number of completed steps.
    pub iterations: usize,
    pub final_ensemble: Vec<DVector<f64>>,
    /// Mean reported in the last completed iteration.
    pub final_mean: DVector<f64>,
    pub final_value: f64,
    /// Smallest value at the mean over all completed iterations.
    pub best_value: f64,
    /// Pooled post-burn-in states (samplers only).
    pub samples: Vec<DVector<f64>>,
    /// Accepted proposals and total proposals (Metropolis samplers only).
    pub acceptance: Option<(usize, usize)>,
    pub abort: Option<RunAbort>,
    /// Wall clock; never written to disk so that outputs stay reproducible.
    pub duration: Duration,
}

impl RunRecord {
    pub fn is_aborted(&self) -> bool {
        self.abort.is_some()
    }

    pub fn sample_pool_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn accept_rate(&self) -> Option<f64> {
        self.acceptance
            .filter(|&(_, total)| total > 0)
            .map(|(acc, total)| acc as f64 / total as f64)
    }

    pub fn sample_mean(&self) -> Option<DVector<f64>> {
        if self.samples.is_empty() {
            return None;
        }
        Some(crate::linalg::mean(&self.samples))
    }

    /// Per-coordinate sample variance (divided by `n`).
    pub fn sample_variance(&self) -> Option<DVector<f64>> {
        let mean = self.sample_mean()?;
        let mut acc = DVector::zeros(mean.len());
        for s in &self.samples {
            let d = s - &mean;
            acc += d.component_mul(&d);
        }
        Some(acc / self.samples.len() as f64)
    }
}
