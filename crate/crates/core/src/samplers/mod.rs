//! Ensemble samplers for `exp(-V)` driven by inferred gradients.
//!
//! RNG consumption per iteration, shared by all methods so that runs with
//! exact gradients can be replayed against the same draws:
//!
//! * EGI-LS: one standard Gaussian `d`-vector per member, in member order.
//! * EGI-MALA: one Gaussian `d`-vector per member, then one uniform per
//!   member.
//! * ALDI family: one standard Gaussian `J`-vector per member.
//!
//! All draws happen after the gradient inference of that iteration.

mod aldi;
mod inverse_problem;
mod langevin;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use aldi::{aldi_gradfree_step, egi_aldi_extra_step, egi_aldi_step};
pub use inverse_problem::InverseProblemSpec;
pub use langevin::{egi_ls_step, egi_mala_step, mala_log_ratio};

use crate::egi::{build_design_system, infer_lsq, EgiConfig, EvaluatedEnsemble, Reference};
use crate::error::{Error, Result};
use crate::linalg::{max_pairwise_distance, mean};
use crate::objectives::Objective;
use crate::record::{RunAbort, RunRecord, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplerMethod {
    EgiLs,
    EgiMala,
    AldiGradFree,
    EgiAldi,
    EgiAldiExtra,
}

impl SamplerMethod {
    pub const ALL: [SamplerMethod; 5] = [
        SamplerMethod::EgiLs,
        SamplerMethod::EgiMala,
        SamplerMethod::AldiGradFree,
        SamplerMethod::EgiAldi,
        SamplerMethod::EgiAldiExtra,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerMethod::EgiLs => "egi_ls",
            SamplerMethod::EgiMala => "egi_mala",
            SamplerMethod::AldiGradFree => "aldi_gradfree",
            SamplerMethod::EgiAldi => "egi_aldi",
            SamplerMethod::EgiAldiExtra => "egi_aldi_extra",
        }
    }
}

impl fmt::Display for SamplerMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SamplerMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown sampler `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub method: SamplerMethod,
    /// Step size `h` (Langevin) or `tau` (MALA, ALDI).
    pub step: f64,
    pub n_iters: usize,
    pub xi: f64,
    pub gamma: f64,
    /// Include the `(d+1)/J (x - mean)` drift; off gives the EKS variant.
    pub aldi_correction: bool,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(method: SamplerMethod) -> Self {
        Self {
            method,
            step: 0.01,
            n_iters: 1000,
            xi: 0.0,
            gamma: 1.0,
            aldi_correction: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidConfig(format!("step must be positive, got {}", self.step)));
        }
        if self.n_iters == 0 {
            return Err(Error::InvalidConfig("n_iters must be at least 1".into()));
        }
        self.egi().validate()
    }

    pub fn egi(&self) -> EgiConfig {
        EgiConfig {
            gamma: self.gamma,
            xi: self.xi,
            ..EgiConfig::default()
        }
    }

    /// A quarter of the iterations.
    pub fn default_burn_in(&self) -> usize {
        self.n_iters / 4
    }
}

/// Previous iterates or rejected proposals kept by EGI-MALA.
#[derive(Debug, Clone, PartialEq)]
pub struct Memory {
    pub points: Vec<DVector<f64>>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    pub ensemble: Vec<DVector<f64>>,
    pub values: Vec<f64>,
    /// Present for EGI-MALA once at least one step was taken.
    pub memory: Option<Memory>,
    pub iteration: usize,
    /// Accepted proposals per member (EGI-MALA).
    pub accept_count: Vec<usize>,
}

impl SamplerState {
    pub fn new(objective: &dyn Objective, ensemble: Vec<DVector<f64>>) -> Result<Self> {
        if ensemble.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "sampling needs at least 2 ensemble members, got {}",
                ensemble.len()
            )));
        }
        if let Some(p) = ensemble.iter().find(|p| p.len() != objective.dim()) {
            return Err(Error::DimensionMismatch {
                expected: objective.dim(),
                found: p.len(),
            });
        }
        let values = ensemble.iter().map(|x| objective.value(x)).collect();
        let n = ensemble.len();
        Ok(Self {
            ensemble,
            values,
            memory: None,
            iteration: 0,
            accept_count: vec![0; n],
        })
    }

    pub fn len(&self) -> usize {
        self.ensemble.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ensemble.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.ensemble[0].len()
    }

    pub fn mean(&self) -> DVector<f64> {
        mean(&self.ensemble)
    }
}

/// Inferred gradients at the first `n_members` points of the data set.
///
/// Points with non-finite values are left out of the data. A member whose
/// own value is non-finite, or whose system degenerates, gets a zero
/// gradient.
pub(crate) fn member_gradients(
    points: &[DVector<f64>],
    values: &[f64],
    n_members: usize,
    cfg: &EgiConfig,
) -> Result<Vec<DVector<f64>>> {
    let dim = points[0].len();
    let mut position = vec![None; points.len()];
    let mut kept_points = Vec::with_capacity(points.len());
    let mut kept_values = Vec::with_capacity(points.len());
    for (i, (p, &v)) in points.iter().zip(values).enumerate() {
        if v.is_finite() {
            position[i] = Some(kept_points.len());
            kept_points.push(p.clone());
            kept_values.push(v);
        }
    }
    if kept_points.is_empty() {
        return Ok(vec![DVector::zeros(dim); n_members]);
    }
    let data = EvaluatedEnsemble::new(kept_points, kept_values)?;
    (0..n_members)
        .into_par_iter()
        .map(|j| match position[j] {
            Some(k) => gradient_or_zero(&data, Reference::Member(k), cfg),
            None => Ok(DVector::zeros(dim)),
        })
        .collect()
}

pub(crate) fn gradient_or_zero(
    data: &EvaluatedEnsemble,
    reference: Reference<'_>,
    cfg: &EgiConfig,
) -> Result<DVector<f64>> {
    match build_design_system(data, reference, cfg) {
        Ok(sys) => Ok(infer_lsq(&sys)?.gradient()),
        Err(Error::DegenerateEnsemble) => Ok(DVector::zeros(data.dim())),
        Err(e) => Err(e),
    }
}

/// A member whose potential overflowed has left every region of interest.
fn check_values(state: SamplerState) -> Result<SamplerState> {
    match state.values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFiniteValue { index }),
        None => Ok(state),
    }
}

pub(crate) fn check_finite(points: &[DVector<f64>]) -> Result<()> {
    match points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
        Some(member) => Err(Error::NonFiniteState { member }),
        None => Ok(()),
    }
}

/// What the sampler targets: a black-box potential, or a structured inverse
/// problem (required by gradient-free ALDI, usable by every method).
#[derive(Clone, Copy)]
pub enum SamplerTarget<'a> {
    Potential(&'a dyn Objective),
    Problem(&'a InverseProblemSpec),
}

impl<'a> SamplerTarget<'a> {
    pub fn objective(&self) -> &'a dyn Objective {
        match *self {
            SamplerTarget::Potential(p) => p,
            SamplerTarget::Problem(p) => p,
        }
    }
}

/// Advances the state by one step of `cfg.method`.
pub fn sampler_step(
    state: &SamplerState,
    cfg: &SamplerConfig,
    target: SamplerTarget<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<SamplerState> {
    let objective = target.objective();
    match cfg.method {
        SamplerMethod::EgiLs => egi_ls_step(state, cfg, objective, rng),
        SamplerMethod::EgiMala => egi_mala_step(state, cfg, objective, rng),
        SamplerMethod::EgiAldi => egi_aldi_step(state, cfg, objective, rng),
        SamplerMethod::EgiAldiExtra => egi_aldi_extra_step(state, cfg, objective, rng),
        SamplerMethod::AldiGradFree => match target {
            SamplerTarget::Problem(problem) => aldi_gradfree_step(state, cfg, problem, rng),
            SamplerTarget::Potential(_) => Err(Error::InvalidConfig(
                "gradient-free ALDI needs a structured inverse problem".into(),
            )),
        },
    }
}

/// Runs `cfg.n_iters` steps and pools every member's state after each
/// iteration past `burn_in` as samples.
pub fn run_sampler(
    target: SamplerTarget<'_>,
    init: Vec<DVector<f64>>,
    cfg: &SamplerConfig,
    burn_in: usize,
    trace_every: usize,
) -> Result<RunRecord> {
    cfg.validate()?;
    if trace_every == 0 {
        return Err(Error::InvalidConfig("trace_every must be at least 1".into()));
    }
    if cfg.method == SamplerMethod::AldiGradFree && matches!(target, SamplerTarget::Potential(_)) {
        return Err(Error::InvalidConfig(
            "gradient-free ALDI needs a structured inverse problem".into(),
        ));
    }
    let started = Instant::now();
    let objective = target.objective();
    let mut state = SamplerState::new(objective, init)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let metropolis = cfg.method == SamplerMethod::EgiMala;

    let row = |s: &SamplerState| {
        let m = s.mean();
        let accepted: usize = s.accept_count.iter().sum();
        let proposals = s.iteration * s.len();
        TraceRow {
            iteration: s.iteration,
            value_at_mean: objective.value(&m),
            mean: m,
            spread: max_pairwise_distance(&s.ensemble),
            accept_rate: (metropolis && proposals > 0).then(|| accepted as f64 / proposals as f64),
        }
    };
    let mut trace = vec![row(&state)];
    let mut current_value = trace[0].value_at_mean;
    let mut best_value = current_value;
    let mut samples = Vec::with_capacity(cfg.n_iters.saturating_sub(burn_in) * state.len());
    let mut abort = None;

    for n in 1..=cfg.n_iters {
        match sampler_step(&state, cfg, target, &mut rng).and_then(check_values) {
            Ok(next) => state = next,
            Err(error) => {
                abort = Some(RunAbort {
                    iteration: n,
                    error: error.at_iteration(n),
                });
                break;
            }
        }
        current_value = objective.value(&state.mean());
        best_value = best_value.min(current_value);
        if n > burn_in {
            samples.extend(state.ensemble.iter().cloned());
        }
        if n % trace_every == 0 {
            trace.push(row(&state));
        }
    }

    let acceptance = metropolis.then(|| (state.accept_count.iter().sum(), state.iteration * state.len()));
    Ok(RunRecord {
        method: cfg.method.name(),
        seed: cfg.seed,
        trace,
        iterations: state.iteration,
        final_mean: state.mean(),
        final_value: current_value,
        best_value,
        final_ensemble: state.ensemble,
        samples,
        acceptance,
        abort,
        duration: started.elapsed(),
    })
}
