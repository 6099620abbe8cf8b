//! Ensemble-based gradient inference.
//!
//! Given pointwise evaluations `V(x^1), ..., V(x^J)` of a scalar potential,
//! the gradient and Hessian at a reference point `x*` are parametrized over
//! the normalized deviation directions `z_k = (x^k - x*) / |x^k - x*|`:
//!
//! ```text
//! grad V(x*) ~ sum_k u1_k z_k
//! Hess V(x*) ~ sum_k u2_k z_k z_k^T
//! ```
//!
//! A second-order Taylor expansion of every value difference `V(x^i) - V(x*)`
//! then yields a linear system `y = A u + Gamma eps` for the coefficients,
//! where the third-order remainder is modelled as noise with scale
//! `gamma^2 (|x^i - x*|^3 / 6 + xi)`. The slack `xi` trades locality for
//! globality: `xi = 0` weights nearby members most, a large `xi` weights all
//! members equally and approaches a quadratic regression through the
//! reference value.
//!
//! The system is solved either by whitened minimum-norm least squares
//! ([`infer_lsq`]) or as a linear-Gaussian Bayesian inverse problem
//! ([`infer_bayes`]).

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{min_norm_lstsq, psd_factor, standard_normal_vector};

/// `J` points in `R^d` together with their potential values.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedEnsemble {
    points: Vec<DVector<f64>>,
    values: Vec<f64>,
}

impl EvaluatedEnsemble {
    /// Validates that points and values pair up, share one dimension and that
    /// every value is finite.
    ///
    /// A single member is accepted: it is a valid data set when the reference
    /// is an external point (see [`Reference::External`]).
    pub fn new(points: Vec<DVector<f64>>, values: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if points.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: values.len(),
            });
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(Self { points, values })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Parameters of the Taylor error model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgiConfig {
    /// Noise scale `gamma` of the third-order remainder.
    pub gamma: f64,
    /// Locality slack `xi`; `0` gives local estimates.
    pub xi: f64,
    /// Relative duplicate tolerance: members closer to the reference than
    /// `dup_tolerance * (1 + |reference|)` are dropped.
    pub dup_tolerance: f64,
    /// Use `Gamma^2` instead of `Gamma` as the noise covariance in
    /// [`infer_bayes`]. Off by default.
    pub bayes_gamma_squared: bool,
}

impl Default for EgiConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            xi: 0.0,
            dup_tolerance: 1e-12,
            bayes_gamma_squared: false,
        }
    }
}

impl EgiConfig {
    pub fn with_xi(xi: f64) -> Self {
        Self {
            xi,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "xi must be nonnegative, got {}",
                self.xi
            )));
        }
        if !(self.dup_tolerance > 0.0 && self.dup_tolerance.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "dup_tolerance must be positive, got {}",
                self.dup_tolerance
            )));
        }
        Ok(())
    }
}

/// Where the derivatives are inferred.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    /// At an ensemble member; that member is excluded from the data.
    Member(usize),
    /// At a point outside the ensemble whose value is known, e.g. the
    /// ensemble mean. All members contribute data.
    External { point: &'a DVector<f64>, value: f64 },
}

/// The linear inverse problem `y = A u + Gamma eps` for the coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSystem {
    /// `(J-1) x 2(J-1)` design matrix `[X^T Z, (X^T Z)^2 / 2]`.
    pub a: DMatrix<f64>,
    /// Value differences `V(x^i) - V(x*)`.
    pub y: DVector<f64>,
    /// Diagonal of `Gamma`.
    pub gamma_diag: DVector<f64>,
    /// Normalized deviations, one per column.
    pub directions: DMatrix<f64>,
    /// Raw deviations `x^i - x*`, one per column.
    pub deviations: DMatrix<f64>,
    pub reference: DVector<f64>,
    pub reference_value: f64,
    /// Ensemble indices of the members that contribute a row.
    pub kept_indices: Vec<usize>,
    pub bayes_gamma_squared: bool,
}

impl DesignSystem {
    /// Number of retained members (rows of `A`).
    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.reference.len()
    }
}

/// Assembles the design system for inference at `reference`.
pub fn build_design_system(
    ensemble: &EvaluatedEnsemble,
    reference: Reference<'_>,
    config: &EgiConfig,
) -> Result<DesignSystem> {
    config.validate()?;
    let dim = ensemble.dim();
    let (ref_point, ref_value, skip) = match reference {
        Reference::Member(index) => {
            if index >= ensemble.len() {
                return Err(Error::ReferenceOutOfRange {
                    index,
                    len: ensemble.len(),
                });
            }
            (
                ensemble.points[index].clone(),
                ensemble.values[index],
                Some(index),
            )
        }
        Reference::External { point, value } => {
            if point.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: point.len(),
                });
            }
            if !value.is_finite() {
                return Err(Error::NonFiniteValue {
                    index: ensemble.len(),
                });
            }
            (point.clone(), value, None)
        }
    };

    let threshold = config.dup_tolerance * (1.0 + ref_point.norm());
    let mut kept_indices = Vec::with_capacity(ensemble.len());
    let mut deviations = Vec::with_capacity(ensemble.len());
    let mut norms = Vec::with_capacity(ensemble.len());
    for (i, p) in ensemble.points.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        let dev = p - &ref_point;
        let n = dev.norm();
        if n < threshold {
            continue;
        }
        kept_indices.push(i);
        deviations.push(dev);
        norms.push(n);
    }
    if kept_indices.is_empty() {
        return Err(Error::DegenerateEnsemble);
    }

    let m = kept_indices.len();
    let deviations = DMatrix::from_columns(&deviations);
    let mut directions = deviations.clone();
    for (mut col, &n) in directions.column_iter_mut().zip(&norms) {
        col /= n;
    }
    let projections = deviations.tr_mul(&directions);
    let mut a = DMatrix::zeros(m, 2 * m);
    a.view_mut((0, 0), (m, m)).copy_from(&projections);
    a.view_mut((0, m), (m, m))
        .copy_from(&projections.map(|v| 0.5 * v * v));

    let y = DVector::from_iterator(
        m,
        kept_indices.iter().map(|&i| ensemble.values[i] - ref_value),
    );
    let g2 = config.gamma * config.gamma;
    let gamma_diag = DVector::from_iterator(m, norms.iter().map(|n| g2 * (n.powi(3) / 6.0 + config.xi)));

    Ok(DesignSystem {
        a,
        y,
        gamma_diag,
        directions,
        deviations,
        reference: ref_point,
        reference_value: ref_value,
        kept_indices,
        bayes_gamma_squared: config.bayes_gamma_squared,
    })
}

/// Gradient and rank-limited Hessian in coefficient form.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeEstimate {
    pub grad_coeffs: DVector<f64>,
    pub hess_coeffs: DVector<f64>,
    pub directions: DMatrix<f64>,
    pub reference: DVector<f64>,
    pub reference_value: f64,
}

impl DerivativeEstimate {
    /// The estimate that carries no derivative information at `reference`.
    pub fn zero(reference: DVector<f64>, reference_value: f64) -> Self {
        let dim = reference.len();
        Self {
            grad_coeffs: DVector::zeros(0),
            hess_coeffs: DVector::zeros(0),
            directions: DMatrix::zeros(dim, 0),
            reference,
            reference_value,
        }
    }

    fn from_coefficients(system: &DesignSystem, coeffs: &DVector<f64>) -> Self {
        let m = system.rows();
        Self {
            grad_coeffs: coeffs.rows(0, m).into_owned(),
            hess_coeffs: coeffs.rows(m, m).into_owned(),
            directions: system.directions.clone(),
            reference: system.reference.clone(),
            reference_value: system.reference_value,
        }
    }

    pub fn dim(&self) -> usize {
        self.reference.len()
    }

    /// `Z u1`.
    pub fn gradient(&self) -> DVector<f64> {
        &self.directions * &self.grad_coeffs
    }

    /// `sum_k u2_k z_k <z_k, v>` without forming the matrix.
    pub fn hessian_matvec(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(v)?;
        let proj = self.directions.tr_mul(v).component_mul(&self.hess_coeffs);
        Ok(&self.directions * proj)
    }

    /// Dense `d x d` Hessian estimate.
    pub fn hessian(&self) -> DMatrix<f64> {
        let mut scaled = self.directions.clone();
        for (mut col, &c) in scaled.column_iter_mut().zip(self.hess_coeffs.iter()) {
            col *= c;
        }
        scaled * self.directions.transpose()
    }

    /// First-order extrapolation `G + H (x - reference)`.
    pub fn extrapolate_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let shift = x - &self.reference;
        Ok(self.gradient() + self.hessian_matvec(&shift)?)
    }

    /// Quadratic model `V(x*) + G^T s + s^T H s / 2` with `s = x - x*`.
    pub fn surrogate_value(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        let shift = x - &self.reference;
        let hs = self.hessian_matvec(&shift)?;
        Ok(self.reference_value + self.gradient().dot(&shift) + 0.5 * shift.dot(&hs))
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        Ok(())
    }
}

/// Minimum-norm least-squares solution of the `Gamma`-whitened system.
pub fn infer_lsq(system: &DesignSystem) -> Result<DerivativeEstimate> {
    if let Some(row) = system.gamma_diag.iter().position(|&g| g == 0.0) {
        return Err(Error::SingularWhitening { row });
    }
    let mut a = system.a.clone();
    let mut y = system.y.clone();
    for (i, &g) in system.gamma_diag.iter().enumerate() {
        a.row_mut(i).unscale_mut(g);
        y[i] /= g;
    }
    let coeffs = min_norm_lstsq(&a, &y);
    Ok(DerivativeEstimate::from_coefficients(system, &coeffs))
}

/// Builds the system and solves it by least squares in one go.
pub fn infer_at(
    ensemble: &EvaluatedEnsemble,
    reference: Reference<'_>,
    config: &EgiConfig,
) -> Result<DerivativeEstimate> {
    infer_lsq(&build_design_system(ensemble, reference, config)?)
}

/// Gaussian posterior over the stacked coefficients `(u1, u2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativePosterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub directions: DMatrix<f64>,
    pub reference: DVector<f64>,
    pub reference_value: f64,
}

impl DerivativePosterior {
    fn estimate_from(&self, coeffs: &DVector<f64>) -> DerivativeEstimate {
        let m = self.mean.len() / 2;
        DerivativeEstimate {
            grad_coeffs: coeffs.rows(0, m).into_owned(),
            hess_coeffs: coeffs.rows(m, m).into_owned(),
            directions: self.directions.clone(),
            reference: self.reference.clone(),
            reference_value: self.reference_value,
        }
    }

    /// The maximum-a-posteriori estimate, which is the posterior mean.
    pub fn map_estimate(&self) -> DerivativeEstimate {
        self.estimate_from(&self.mean)
    }
}

/// Linear-Gaussian update with prior `N(0, prior_covariance)`:
/// `K = S A^T (Gamma + A S A^T)^-1`, mean `K y`, covariance `S - K A S`.
///
/// `Gamma` enters as the noise covariance, or `Gamma^2` when the system was
/// built with `bayes_gamma_squared`.
pub fn infer_bayes(
    system: &DesignSystem,
    prior_covariance: &DMatrix<f64>,
) -> Result<DerivativePosterior> {
    let n = 2 * system.rows();
    if prior_covariance.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: prior_covariance.nrows(),
        });
    }
    let asym = (prior_covariance - prior_covariance.transpose()).amax();
    if asym > 1e-12 * prior_covariance.amax().max(1.0)
        || Cholesky::new(prior_covariance.clone()).is_none()
    {
        return Err(Error::NotPositiveDefinite("prior_covariance"));
    }

    let a = &system.a;
    let a_sigma = a * prior_covariance;
    let mut innovation = &a_sigma * a.transpose();
    for (i, &g) in system.gamma_diag.iter().enumerate() {
        innovation[(i, i)] += if system.bayes_gamma_squared { g * g } else { g };
    }
    let chol = Cholesky::new(innovation).ok_or(Error::SingularInnovation)?;
    // K^T = S^-1 A Sigma because both S and Sigma are symmetric.
    let gain_t = chol.solve(&a_sigma);
    if gain_t.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularInnovation);
    }
    let mean = gain_t.tr_mul(&system.y);
    let mut covariance = prior_covariance - gain_t.tr_mul(&a_sigma);
    covariance = (&covariance + covariance.transpose()) * 0.5;

    Ok(DerivativePosterior {
        mean,
        covariance,
        directions: system.directions.clone(),
        reference: system.reference.clone(),
        reference_value: system.reference_value,
    })
}

/// Draws `n_samples` i.i.d. coefficient vectors from the posterior.
pub fn sample_posterior(
    posterior: &DerivativePosterior,
    n_samples: usize,
    seed: u64,
) -> Vec<DerivativeEstimate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factor = psd_factor(&posterior.covariance);
    (0..n_samples)
        .map(|_| {
            let z = standard_normal_vector(&mut rng, posterior.mean.len());
            let coeffs = &posterior.mean + &factor * z;
            posterior.estimate_from(&coeffs)
        })
        .collect()
}
