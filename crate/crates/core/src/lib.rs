//! Gradient and Hessian inference from ensembles of potential evaluations,
//! and the optimizers and samplers built on it.
//!
//! The central entry point is [`egi::infer_at`]: given points `x^i` with
//! values `V(x^i)` it returns a least-squares fit of the first and second
//! derivatives at a reference point. [`optimizers`] uses the inferred
//! gradient as an extra drift in consensus-based optimization, and
//! [`samplers`] plugs it into Langevin, MALA and ALDI dynamics.

pub mod egi;
pub mod error;
pub mod linalg;
pub mod objectives;
pub mod optimizers;
pub mod record;
pub mod samplers;

pub use egi::{
    build_design_system, infer_at, infer_bayes, infer_lsq, sample_posterior, DerivativeEstimate,
    DerivativePosterior, DesignSystem, EgiConfig, EvaluatedEnsemble, Reference,
};
pub use error::{Error, Result};
pub use objectives::{make_potential, Objective, Potential, PotentialKind, Quadratic};
pub use optimizers::{run_egi_cbo, run_optimizer, CboConfig, NoiseMode, OptState};
pub use record::{RunAbort, RunRecord, TraceRow};
pub use samplers::{run_sampler, InverseProblemSpec, SamplerConfig, SamplerMethod, SamplerState, SamplerTarget};
