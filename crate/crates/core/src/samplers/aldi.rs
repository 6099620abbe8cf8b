//! Affine-invariant interacting Langevin dynamics.
//!
//! All variants share the Euler-Maruyama update
//!
//! ```text
//! x <- x - tau drift(x) + tau (d+1)/J (x - mean) + sqrt(2 tau) C^{1/2} W
//! ```
//!
//! with `C^{1/2} = (x^1 - mean, ..., x^J - mean) / sqrt(J)` the `d x J`
//! factor of the empirical covariance and `W ~ N(0, I_J)`. The variants
//! differ only in the preconditioned drift.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{check_finite, member_gradients, InverseProblemSpec, SamplerConfig, SamplerState};
use crate::egi::{build_design_system, infer_lsq, EvaluatedEnsemble, Reference};
use crate::error::{Error, Result};
use crate::linalg::{centered_columns, mean, standard_normal_vector};
use crate::objectives::Objective;

struct EnsembleGeometry {
    mean: DVector<f64>,
    /// `d x J` covariance factor.
    sqrt_cov: DMatrix<f64>,
    cov: DMatrix<f64>,
}

impl EnsembleGeometry {
    fn of(points: &[DVector<f64>]) -> Self {
        let mean = mean(points);
        let sqrt_cov = centered_columns(points, &mean) / (points.len() as f64).sqrt();
        let cov = &sqrt_cov * sqrt_cov.transpose();
        Self { mean, sqrt_cov, cov }
    }
}

fn aldi_update<R: Rng + ?Sized>(
    state: &SamplerState,
    cfg: &SamplerConfig,
    geom: &EnsembleGeometry,
    drifts: &[DVector<f64>],
    objective: &dyn Objective,
    rng: &mut R,
) -> Result<SamplerState> {
    let tau = cfg.step;
    let n = state.len();
    let correction = if cfg.aldi_correction {
        (state.dim() + 1) as f64 / n as f64
    } else {
        0.0
    };
    let scale = (2.0 * tau).sqrt();
    let next: Vec<DVector<f64>> = state
        .ensemble
        .iter()
        .zip(drifts)
        .map(|(x, drift)| {
            let w = standard_normal_vector(rng, n);
            let mut x_new = x - drift * tau;
            if cfg.aldi_correction {
                x_new += (x - &geom.mean) * (tau * correction);
            }
            x_new + &geom.sqrt_cov * w * scale
        })
        .collect();
    check_finite(&next)?;
    let values = next.iter().map(|x| objective.value(x)).collect();
    Ok(SamplerState {
        ensemble: next,
        values,
        memory: None,
        iteration: state.iteration + 1,
        accept_count: state.accept_count.clone(),
    })
}

/// Gradient-free ALDI for a structured posterior: the drift
/// `D Gamma^-1 (G(x) - y) + C Sigma0^-1 (x - mu0)` uses the ensemble
/// cross-covariance `D` between states and forward outputs in place of a
/// preconditioned gradient.
pub fn aldi_gradfree_step<R: Rng + ?Sized>(
    state: &SamplerState,
    cfg: &SamplerConfig,
    problem: &InverseProblemSpec,
    rng: &mut R,
) -> Result<SamplerState> {
    if state.dim() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            found: state.dim(),
        });
    }
    let geom = EnsembleGeometry::of(&state.ensemble);
    let outputs: Vec<DVector<f64>> = state.ensemble.iter().map(|x| problem.forward(x)).collect();
    let out_mean = mean(&outputs);
    let centered_out = centered_columns(&outputs, &out_mean);
    let centered_in = centered_columns(&state.ensemble, &geom.mean);
    // D = (1/J) sum_j (x^j - mean)(G^j - G_mean)^T
    let cross = &centered_in * centered_out.transpose() / state.len() as f64;
    let cross_prec = &cross * problem.noise_precision();
    let cov_prec = &geom.cov * problem.prior_precision();

    let drifts: Vec<DVector<f64>> = state
        .ensemble
        .iter()
        .zip(&outputs)
        .map(|(x, g)| &cross_prec * (g - problem.data()) + &cov_prec * (x - problem.prior_mean()))
        .collect();
    aldi_update(state, cfg, &geom, &drifts, problem, rng)
}

/// ALDI with the drift `C g^j`, `g^j` inferred at each member from the
/// ensemble augmented by its mean.
pub fn egi_aldi_step<R: Rng + ?Sized>(
    state: &SamplerState,
    cfg: &SamplerConfig,
    objective: &dyn Objective,
    rng: &mut R,
) -> Result<SamplerState> {
    let geom = EnsembleGeometry::of(&state.ensemble);
    let mut points = state.ensemble.clone();
    points.push(geom.mean.clone());
    let mut values = state.values.clone();
    values.push(objective.value(&geom.mean));
    let grads = member_gradients(&points, &values, state.len(), &cfg.egi())?;
    let drifts: Vec<DVector<f64>> = grads.iter().map(|g| &geom.cov * g).collect();
    aldi_update(state, cfg, &geom, &drifts, objective, rng)
}

/// ALDI with a single inference at the ensemble mean, extrapolated to each
/// member as `g + H (x^j - mean)`.
pub fn egi_aldi_extra_step<R: Rng + ?Sized>(
    state: &SamplerState,
    cfg: &SamplerConfig,
    objective: &dyn Objective,
    rng: &mut R,
) -> Result<SamplerState> {
    let geom = EnsembleGeometry::of(&state.ensemble);
    let mean_value = objective.value(&geom.mean);
    let drifts: Vec<DVector<f64>> = if mean_value.is_finite() {
        let finite: Vec<usize> = (0..state.len()).filter(|&i| state.values[i].is_finite()).collect();
        let data = EvaluatedEnsemble::new(
            finite.iter().map(|&i| state.ensemble[i].clone()).collect(),
            finite.iter().map(|&i| state.values[i]).collect(),
        );
        let reference = Reference::External {
            point: &geom.mean,
            value: mean_value,
        };
        let estimate = match data {
            Ok(data) => match build_design_system(&data, reference, &cfg.egi()) {
                Ok(sys) => Some(infer_lsq(&sys)?),
                Err(Error::DegenerateEnsemble) => None,
                Err(e) => return Err(e),
            },
            Err(Error::EmptyEnsemble) => None,
            Err(e) => return Err(e),
        };
        match estimate {
            Some(est) => state
                .ensemble
                .iter()
                .map(|x| est.extrapolate_gradient(x).map(|g| &geom.cov * g))
                .collect::<Result<_>>()?,
            None => vec![DVector::zeros(state.dim()); state.len()],
        }
    } else {
        vec![DVector::zeros(state.dim()); state.len()]
    };
    aldi_update(state, cfg, &geom, &drifts, objective, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::SamplerMethod;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn linear_problem() -> InverseProblemSpec {
        InverseProblemSpec::new(
            |x| x.clone(),
            v(&[1.0]),
            DMatrix::identity(1, 1),
            v(&[0.0]),
            DMatrix::identity(1, 1),
        )
        .unwrap()
    }

    #[test]
    fn collapsed_ensemble_is_stationary() {
        let problem = linear_problem();
        let init = vec![v(&[0.4]); 5];
        let state = SamplerState::new(&problem, init.clone()).unwrap();
        for method in [SamplerMethod::AldiGradFree, SamplerMethod::EgiAldi, SamplerMethod::EgiAldiExtra] {
            let cfg = SamplerConfig::new(method);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let next = crate::samplers::sampler_step(
                &state,
                &cfg,
                crate::samplers::SamplerTarget::Problem(&problem),
                &mut rng,
            )
            .unwrap();
            assert_eq!(next.ensemble, init, "{method}");
        }
    }

    #[test]
    fn correction_off_differs_only_by_the_correction_term() {
        let problem = linear_problem();
        let init: Vec<_> = [-1.0, 0.2, 0.9, 1.7].iter().map(|&x| v(&[x])).collect();
        let state = SamplerState::new(&problem, init).unwrap();
        let aldi = SamplerConfig { step: 0.05, ..SamplerConfig::new(SamplerMethod::AldiGradFree) };
        let eks = SamplerConfig { aldi_correction: false, ..aldi };
        let a = aldi_gradfree_step(&state, &aldi, &problem, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let b = aldi_gradfree_step(&state, &eks, &problem, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mean = crate::linalg::mean(&state.ensemble);
        for ((x, xa), xb) in state.ensemble.iter().zip(&a.ensemble).zip(&b.ensemble) {
            let expected = (x - &mean) * (0.05 * 2.0 / 4.0);
            assert!((xa - xb - expected).amax() < 1e-14);
        }
    }

    #[test]
    fn same_seed_is_deterministic() {
        let problem = InverseProblemSpec::banana();
        let init = vec![v(&[0.0, 0.0]), v(&[1.0, 1.0]), v(&[2.0, -1.0]), v(&[3.0, 2.0])];
        let state = SamplerState::new(&problem, init).unwrap();
        let cfg = SamplerConfig::new(SamplerMethod::EgiAldi);
        let a = egi_aldi_step(&state, &cfg, &problem, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = egi_aldi_step(&state, &cfg, &problem, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }
}
