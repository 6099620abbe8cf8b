use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::objectives::{banana_forward, Objective, BANANA_DATA, BANANA_NOISE_STD, BANANA_PRIOR_STD};

type ForwardMap = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Bayesian inverse problem `y = G(x) + eta`, `eta ~ N(0, Gamma)`, with a
/// Gaussian prior `N(mu0, Sigma0)`. Its negative log-posterior is
///
/// ```text
/// V(x) = |y - G(x)|^2_Gamma / 2 + |x - mu0|^2_Sigma0 / 2
/// ```
pub struct InverseProblemSpec {
    dim: usize,
    forward: ForwardMap,
    data: DVector<f64>,
    noise_precision: DMatrix<f64>,
    prior_mean: DVector<f64>,
    prior_precision: DMatrix<f64>,
}

impl fmt::Debug for InverseProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InverseProblemSpec")
            .field("dim", &self.dim)
            .field("data", &self.data)
            .field("prior_mean", &self.prior_mean)
            .finish_non_exhaustive()
    }
}

fn spd_inverse(m: &DMatrix<f64>, name: &'static str) -> Result<DMatrix<f64>> {
    if !m.is_square() || (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::NotPositiveDefinite(name));
    }
    Cholesky::new(m.clone())
        .map(|c| c.inverse())
        .ok_or(Error::NotPositiveDefinite(name))
}

impl InverseProblemSpec {
    pub fn new(
        forward: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        data: DVector<f64>,
        noise_cov: DMatrix<f64>,
        prior_mean: DVector<f64>,
        prior_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let dim = prior_mean.len();
        if prior_cov.nrows() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: prior_cov.nrows(),
            });
        }
        if noise_cov.nrows() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                found: noise_cov.nrows(),
            });
        }
        let noise_precision = spd_inverse(&noise_cov, "noise_cov")?;
        let prior_precision = spd_inverse(&prior_cov, "prior_cov")?;
        Ok(Self {
            dim,
            forward: Box::new(forward),
            data,
            noise_precision,
            prior_mean,
            prior_precision,
        })
    }

    /// The banana posterior in structured form: scalar forward map, `y = 0`,
    /// noise std `1/2`, prior `N(0, 4 I)`.
    pub fn banana() -> Self {
        Self::new(
            |x| DVector::from_element(1, banana_forward(x)),
            DVector::from_element(1, BANANA_DATA),
            DMatrix::from_element(1, 1, BANANA_NOISE_STD.powi(2)),
            DVector::zeros(2),
            DMatrix::identity(2, 2) * BANANA_PRIOR_STD.powi(2),
        )
        .expect("banana constants are valid")
    }

    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.forward)(x)
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn noise_precision(&self) -> &DMatrix<f64> {
        &self.noise_precision
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.prior_mean
    }

    pub fn prior_precision(&self) -> &DMatrix<f64> {
        &self.prior_precision
    }
}

impl Objective for InverseProblemSpec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let r = &self.data - self.forward(x);
        let p = x - &self.prior_mean;
        0.5 * r.dot(&(&self.noise_precision * &r)) + 0.5 * p.dot(&(&self.prior_precision * &p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::make_potential;

    #[test]
    fn banana_problem_matches_registered_potential() {
        let problem = InverseProblemSpec::banana();
        let pot = make_potential("banana_posterior", 2).unwrap();
        for x in [[0.0, 0.0], [2.5, 1.0], [-1.0, 3.5]] {
            let x = DVector::from_column_slice(&x);
            assert!((problem.value(&x) - pot.value(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite_covariances() {
        let err = InverseProblemSpec::new(
            |x| x.clone(),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, -1.0),
            DVector::zeros(1),
            DMatrix::identity(1, 1),
        )
        .unwrap_err();
        assert_eq!(err, Error::NotPositiveDefinite("noise_cov"));
    }
}
