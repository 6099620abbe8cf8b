use nalgebra::DVector;
use rand::Rng;

use super::{check_finite, member_gradients, Memory, SamplerConfig, SamplerState};
use crate::error::Result;
use crate::linalg::standard_normal_vector;
use crate::objectives::Objective;

/// Unadjusted Langevin step with the gradient of every member inferred from
/// the current ensemble: `x <- x - h g + sqrt(2h) W`.
pub fn egi_ls_step<R: Rng + ?Sized>(
    state: &SamplerState,
    cfg: &SamplerConfig,
    objective: &dyn Objective,
    rng: &mut R,
) -> Result<SamplerState> {
    let h = cfg.step;
    let grads = member_gradients(&state.ensemble, &state.values, state.len(), &cfg.egi())?;
    let scale = (2.0 * h).sqrt();
    let next: Vec<DVector<f64>> = state
        .ensemble
        .iter()
        .zip(&grads)
        .map(|(x, g)| {
            let w = standard_normal_vector(rng, x.len());
            x - g * h + w * scale
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

/// Log of the Metropolis ratio for a Langevin proposal `prop` from `x`,
/// with `grad_x` and `grad_prop` the gradients used in the forward and
/// backward proposal densities:
///
/// ```text
/// -V(prop) + V(x) + log q(x | prop) - log q(prop | x)
/// ```
pub fn mala_log_ratio(
    x: &DVector<f64>,
    value_x: f64,
    grad_x: &DVector<f64>,
    prop: &DVector<f64>,
    value_prop: f64,
    grad_prop: &DVector<f64>,
    tau: f64,
) -> f64 {
    if value_prop == f64::INFINITY || value_prop.is_nan() {
        return f64::NEG_INFINITY;
    }
    let log_q_fwd = -(prop - (x - grad_x * tau)).norm_squared() / (4.0 * tau);
    let log_q_bwd = -(x - (prop - grad_prop * tau)).norm_squared() / (4.0 * tau);
    -value_prop + value_x + log_q_bwd - log_q_fwd
}

/// Metropolis-adjusted Langevin step with inferred gradients.
///
/// Gradients at the current members use the ensemble together with the
/// memory points from the previous iteration; gradients at the proposals
/// use the proposal ensemble alone. An accepted member remembers its
/// previous position, a rejected one remembers the rejected proposal.
pub fn egi_mala_step<R: Rng + ?Sized>(
    state: &SamplerState,
    cfg: &SamplerConfig,
    objective: &dyn Objective,
    rng: &mut R,
) -> Result<SamplerState> {
    let tau = cfg.step;
    let egi = cfg.egi();
    let n = state.len();

    let grads = match &state.memory {
        Some(mem) if state.iteration >= 1 => {
            let mut points = state.ensemble.clone();
            points.extend(mem.points.iter().cloned());
            let mut values = state.values.clone();
            values.extend_from_slice(&mem.values);
            member_gradients(&points, &values, n, &egi)?
        }
        _ => member_gradients(&state.ensemble, &state.values, n, &egi)?,
    };

    let scale = (2.0 * tau).sqrt();
    let proposals: Vec<DVector<f64>> = state
        .ensemble
        .iter()
        .zip(&grads)
        .map(|(x, g)| {
            let w = standard_normal_vector(rng, x.len());
            x - g * tau + w * scale
        })
        .collect();
    check_finite(&proposals)?;
    let prop_values: Vec<f64> = proposals.iter().map(|p| objective.value(p)).collect();
    let prop_grads = member_gradients(&proposals, &prop_values, n, &egi)?;

    let mut ensemble = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut memory = Memory {
        points: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
    };
    let mut accept_count = state.accept_count.clone();
    for j in 0..n {
        let log_alpha = mala_log_ratio(
            &state.ensemble[j],
            state.values[j],
            &grads[j],
            &proposals[j],
            prop_values[j],
            &prop_grads[j],
            tau,
        );
        let u: f64 = rng.random();
        if u.ln() < log_alpha {
            ensemble.push(proposals[j].clone());
            values.push(prop_values[j]);
            memory.points.push(state.ensemble[j].clone());
            memory.values.push(state.values[j]);
            accept_count[j] += 1;
        } else {
            ensemble.push(state.ensemble[j].clone());
            values.push(state.values[j]);
            memory.points.push(proposals[j].clone());
            memory.values.push(prop_values[j]);
        }
    }

    Ok(SamplerState {
        ensemble,
        values,
        memory: Some(memory),
        iteration: state.iteration + 1,
        accept_count,
    })
}
