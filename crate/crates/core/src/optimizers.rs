//! Consensus-based optimization, plain and augmented with inferred gradients.
//!
//! Both variants share one Euler-Maruyama update
//!
//! ```text
//! x <- x - tau kappa g - tau lambda (x - m_alpha) + sqrt(tau) sigma_n
//! ```
//!
//! where `m_alpha` is the softmin-weighted mean and `sigma_n` the scaled
//! noise. Vanilla CBO omits the gradient term. Per iteration the RNG yields
//! `J` standard Gaussian `d`-vectors in member order, after any gradient
//! inference, so that `kappa = 0` reproduces vanilla CBO exactly.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::egi::{infer_at, EgiConfig, EvaluatedEnsemble, Reference};
use crate::error::{Error, Result};
use crate::linalg::{max_pairwise_distance, mean, standard_normal_vector};
use crate::objectives::Objective;
use crate::record::{RunAbort, RunRecord, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// `sigma |x - m_alpha| W`
    NormProportional,
    /// `sigma (x - m_alpha) * W`, elementwise
    ComponentWise,
}

impl NoiseMode {
    pub fn name(self) -> &'static str {
        match self {
            NoiseMode::NormProportional => "norm_proportional",
            NoiseMode::ComponentWise => "component_wise",
        }
    }
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "norm_proportional" => Ok(NoiseMode::NormProportional),
            "component_wise" => Ok(NoiseMode::ComponentWise),
            other => Err(Error::InvalidConfig(format!("unknown noise mode `{other}`"))),
        }
    }
}

/// Parameters of one (EGI-)CBO run.
///
/// `alpha` is the weight sharpness, also known as the inverse temperature
/// `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CboConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub sigma: f64,
    /// Strength of the inferred-gradient drift; `0` disables it.
    pub kappa: f64,
    pub xi: f64,
    pub gamma: f64,
    pub tau: f64,
    pub n_iters: usize,
    pub noise: NoiseMode,
    /// Extrapolate the gradient from the mean to each member with the
    /// inferred Hessian.
    pub extrapolate: bool,
    pub seed: u64,
}

impl Default for CboConfig {
    fn default() -> Self {
        Self {
            alpha: 100.0,
            lambda: 1.0,
            sigma: 0.5,
            kappa: 0.0,
            xi: 0.0,
            gamma: 1.0,
            tau: 0.01,
            n_iters: 1000,
            noise: NoiseMode::NormProportional,
            extrapolate: false,
            seed: 0,
        }
    }
}

impl CboConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("alpha", self.alpha),
            ("lambda", self.lambda),
            ("sigma", self.sigma),
            ("kappa", self.kappa),
            ("xi", self.xi),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be nonnegative, got {v}")));
            }
        }
        for (name, v) in [("gamma", self.gamma), ("tau", self.tau)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn egi(&self) -> EgiConfig {
        EgiConfig {
            gamma: self.gamma,
            xi: self.xi,
            ..EgiConfig::default()
        }
    }
}

/// Ensemble with its values and both means.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub ensemble: Vec<DVector<f64>>,
    pub values: Vec<f64>,
    pub weighted_mean: DVector<f64>,
    pub unweighted_mean: DVector<f64>,
    pub iteration: usize,
}

impl OptState {
    pub fn new(objective: &dyn Objective, ensemble: Vec<DVector<f64>>, alpha: f64) -> Result<Self> {
        if ensemble.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if let Some(p) = ensemble.iter().find(|p| p.len() != objective.dim()) {
            return Err(Error::DimensionMismatch {
                expected: objective.dim(),
                found: p.len(),
            });
        }
        let values = evaluate(objective, &ensemble)?;
        Ok(Self::from_parts(ensemble, values, alpha, 0))
    }

    fn from_parts(ensemble: Vec<DVector<f64>>, values: Vec<f64>, alpha: f64, iteration: usize) -> Self {
        let weighted_mean = weighted_mean(&ensemble, &values, alpha);
        let unweighted_mean = mean(&ensemble);
        Self {
            ensemble,
            values,
            weighted_mean,
            unweighted_mean,
            iteration,
        }
    }

    pub fn len(&self) -> usize {
        self.ensemble.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ensemble.is_empty()
    }
}

fn evaluate(objective: &dyn Objective, points: &[DVector<f64>]) -> Result<Vec<f64>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let v = objective.value(p);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteValue { index: i })
            }
        })
        .collect()
}

/// Barycentric weights `exp(-alpha (V_j - min V))`, normalized.
pub fn consensus_weights(values: &[f64], alpha: f64) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = values.iter().map(|&v| (-alpha * (v - min)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Softmin-weighted mean of the ensemble; tends to the best member as
/// `alpha` grows.
pub fn weighted_mean(points: &[DVector<f64>], values: &[f64], alpha: f64) -> DVector<f64> {
    let weights = consensus_weights(values, alpha);
    let mut acc = DVector::zeros(points[0].len());
    for (p, w) in points.iter().zip(weights) {
        acc.axpy(w, p, 1.0);
    }
    acc
}

/// One vanilla CBO step.
pub fn cbo_step<R: Rng + ?Sized>(
    state: &OptState,
    cfg: &CboConfig,
    objective: &dyn Objective,
    rng: &mut R,
) -> Result<OptState> {
    advance(state, cfg, objective, None, rng)
}

/// One EGI-CBO step: gradient and Hessian are inferred once at the
/// unweighted mean from the ensemble augmented by that mean.
pub fn egi_cbo_step<R: Rng + ?Sized>(
    state: &OptState,
    cfg: &CboConfig,
    objective: &dyn Objective,
    rng: &mut R,
) -> Result<OptState> {
    let center = &state.unweighted_mean;
    let center_value = objective.value(center);
    if !center_value.is_finite() {
        return Err(Error::NonFiniteValue { index: state.len() });
    }
    let data = EvaluatedEnsemble::new(state.ensemble.clone(), state.values.clone())?;
    let reference = Reference::External {
        point: center,
        value: center_value,
    };
    let gradients = match infer_at(&data, reference, &cfg.egi()) {
        Ok(est) => {
            if cfg.extrapolate {
                state
                    .ensemble
                    .iter()
                    .map(|x| est.extrapolate_gradient(x))
                    .collect::<Result<Vec<_>>>()?
            } else {
                vec![est.gradient(); state.len()]
            }
        }
        // a collapsed ensemble carries no slope information
        Err(Error::DegenerateEnsemble) => vec![DVector::zeros(center.len()); state.len()],
        Err(e) => return Err(e),
    };
    advance(state, cfg, objective, Some(&gradients), rng)
}

fn advance<R: Rng + ?Sized>(
    state: &OptState,
    cfg: &CboConfig,
    objective: &dyn Objective,
    gradients: Option<&[DVector<f64>]>,
    rng: &mut R,
) -> Result<OptState> {
    let dim = state.weighted_mean.len();
    let m_alpha = &state.weighted_mean;
    let sqrt_tau = cfg.tau.sqrt();
    let mut next = Vec::with_capacity(state.len());
    for (j, x) in state.ensemble.iter().enumerate() {
        let w = standard_normal_vector(rng, dim);
        let offset = x - m_alpha;
        let noise = match cfg.noise {
            NoiseMode::NormProportional => w * (cfg.sigma * offset.norm()),
            NoiseMode::ComponentWise => offset.component_mul(&w) * cfg.sigma,
        };
        let mut x_new = x.clone();
        if let Some(g) = gradients {
            x_new -= &g[j] * (cfg.tau * cfg.kappa);
        }
        x_new -= offset * (cfg.tau * cfg.lambda);
        x_new += noise * sqrt_tau;
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { member: j });
        }
        next.push(x_new);
    }
    let values = evaluate(objective, &next)?;
    Ok(OptState::from_parts(next, values, cfg.alpha, state.iteration + 1))
}

/// Runs `cfg.n_iters` steps from `init`, seeding the dynamics with
/// `cfg.seed`. `kappa = 0` runs vanilla CBO, otherwise EGI-CBO.
///
/// A failing step ends the run; the record keeps everything up to the last
/// completed iteration together with the error.
pub fn run_optimizer(
    objective: &dyn Objective,
    init: Vec<DVector<f64>>,
    cfg: &CboConfig,
    trace_every: usize,
) -> Result<RunRecord> {
    let method = if cfg.kappa == 0.0 { "cbo" } else { "egi_cbo" };
    run_with(objective, init, cfg, trace_every, method, |s, c, o, r| {
        if c.kappa == 0.0 {
            cbo_step(s, c, o, r)
        } else {
            egi_cbo_step(s, c, o, r)
        }
    })
}

/// Like [`run_optimizer`] but always uses the EGI-CBO step, even for
/// `kappa = 0`.
pub fn run_egi_cbo(
    objective: &dyn Objective,
    init: Vec<DVector<f64>>,
    cfg: &CboConfig,
    trace_every: usize,
) -> Result<RunRecord> {
    run_with(objective, init, cfg, trace_every, "egi_cbo", |s, c, o, r| egi_cbo_step(s, c, o, r))
}

fn run_with<F>(
    objective: &dyn Objective,
    init: Vec<DVector<f64>>,
    cfg: &CboConfig,
    trace_every: usize,
    method: &'static str,
    step: F,
) -> Result<RunRecord>
where
    F: Fn(&OptState, &CboConfig, &dyn Objective, &mut ChaCha8Rng) -> Result<OptState>,
{
    cfg.validate()?;
    if trace_every == 0 {
        return Err(Error::InvalidConfig("trace_every must be at least 1".into()));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = OptState::new(objective, init, cfg.alpha)?;

    let row = |s: &OptState| TraceRow {
        iteration: s.iteration,
        mean: s.weighted_mean.clone(),
        value_at_mean: objective.value(&s.weighted_mean),
        spread: max_pairwise_distance(&s.ensemble),
        accept_rate: None,
    };
    let mut trace = vec![row(&state)];
    let mut current_value = trace[0].value_at_mean;
    let mut best_value = current_value;
    let mut abort = None;

    for n in 1..=cfg.n_iters {
        match step(&state, cfg, objective, &mut rng) {
            Ok(next) => state = next,
            Err(error) => {
                abort = Some(RunAbort {
                    iteration: n,
                    error: error.at_iteration(n),
                });
                break;
            }
        }
        current_value = objective.value(&state.weighted_mean);
        best_value = best_value.min(current_value);
        if n % trace_every == 0 {
            trace.push(row(&state));
        }
    }

    Ok(RunRecord {
        method,
        seed: cfg.seed,
        trace,
        iterations: state.iteration,
        final_mean: state.weighted_mean.clone(),
        final_value: current_value,
        best_value,
        final_ensemble: state.ensemble,
        samples: Vec::new(),
        acceptance: None,
        abort,
        duration: started.elapsed(),
    })
}
