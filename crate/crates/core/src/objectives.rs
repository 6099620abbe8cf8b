//! Benchmark potentials.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A scalar potential `V: R^d -> R`, optionally with analytic derivatives.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> f64;

    fn gradient(&self, _x: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// Observation noise std of the banana posterior.
pub const BANANA_NOISE_STD: f64 = 0.5;
/// Prior std of the banana posterior (`N(0, 4 I)`).
pub const BANANA_PRIOR_STD: f64 = 2.0;
/// Observed datum of the banana posterior.
pub const BANANA_DATA: f64 = 0.0;

/// Scalar forward map `A(x) = (x2 - 2)^2 - (x1 - 3.5) - 1` of the banana posterior.
pub fn banana_forward(x: &DVector<f64>) -> f64 {
    (x[1] - 2.0).powi(2) - (x[0] - 3.5) - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PotentialKind {
    /// `x^2 + 3 (1 - cos 2 pi x)`
    Rastrigin1dVariant,
    /// `20 + sum_i x_i^2 - 10 cos 2 pi x_i`
    Rastrigin2d,
    /// `(x^2 + y - 11)^2 + (x + y^2 - 7)^2`
    Himmelblau,
    /// `|x - 1|^2 / 2`
    ShiftedQuadratic,
    /// `|x|^4`
    QuarticNorm,
    /// negative log-density of the 2d banana posterior
    BananaPosterior,
}

impl PotentialKind {
    pub const ALL: [PotentialKind; 6] = [
        PotentialKind::Rastrigin1dVariant,
        PotentialKind::Rastrigin2d,
        PotentialKind::Himmelblau,
        PotentialKind::ShiftedQuadratic,
        PotentialKind::QuarticNorm,
        PotentialKind::BananaPosterior,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PotentialKind::Rastrigin1dVariant => "rastrigin1d_variant",
            PotentialKind::Rastrigin2d => "rastrigin2d",
            PotentialKind::Himmelblau => "himmelblau",
            PotentialKind::ShiftedQuadratic => "shifted_quadratic",
            PotentialKind::QuarticNorm => "quartic_norm",
            PotentialKind::BananaPosterior => "banana_posterior",
        }
    }

    /// Required dimension, or `None` for dimension-free potentials.
    pub fn fixed_dim(self) -> Option<usize> {
        match self {
            PotentialKind::Rastrigin1dVariant => Some(1),
            PotentialKind::Rastrigin2d | PotentialKind::Himmelblau | PotentialKind::BananaPosterior => Some(2),
            PotentialKind::ShiftedQuadratic | PotentialKind::QuarticNorm => None,
        }
    }
}

impl fmt::Display for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PotentialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PotentialKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownPotential(s.to_string()))
    }
}

/// A registered benchmark potential of fixed dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Potential {
    kind: PotentialKind,
    dim: usize,
}

pub fn make_potential(name: &str, dim: usize) -> Result<Potential> {
    Potential::new(name.parse()?, dim)
}

impl Potential {
    pub fn new(kind: PotentialKind, dim: usize) -> Result<Self> {
        let ok = match kind.fixed_dim() {
            Some(d) => d == dim,
            None => dim >= 1,
        };
        if !ok {
            return Err(Error::BadDimension {
                name: kind.name().to_string(),
                dim,
            });
        }
        Ok(Self { kind, dim })
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// Known global minimizers with their values.
    pub fn known_minima(&self) -> Vec<(DVector<f64>, f64)> {
        let d = self.dim;
        match self.kind {
            PotentialKind::Rastrigin1dVariant => vec![(DVector::zeros(1), 0.0)],
            PotentialKind::Rastrigin2d => vec![(DVector::zeros(2), 0.0)],
            PotentialKind::Himmelblau => [
                (3.0, 2.0),
                (-2.805118086952745, 3.131312518250573),
                (-3.779310253377747, -3.2831859912861696),
                (3.5844283403304917, -1.8481265269644036),
            ]
            .into_iter()
            .map(|(x, y)| (DVector::from_vec(vec![x, y]), 0.0))
            .collect(),
            PotentialKind::ShiftedQuadratic => vec![(DVector::from_element(d, 1.0), 0.0)],
            PotentialKind::QuarticNorm => vec![(DVector::zeros(d), 0.0)],
            PotentialKind::BananaPosterior => Vec::new(),
        }
    }

    /// Coordinate box used to initialize experiments and draw random test
    /// points, as `(lower, upper)`.
    pub fn benchmark_box(&self) -> (DVector<f64>, DVector<f64>) {
        let d = self.dim;
        let (lo, hi) = match self.kind {
            PotentialKind::Rastrigin1dVariant => (-4.0, 4.0),
            PotentialKind::Rastrigin2d | PotentialKind::ShiftedQuadratic | PotentialKind::QuarticNorm => {
                (-4.0, -1.0)
            }
            PotentialKind::Himmelblau => (-5.0, 5.0),
            PotentialKind::BananaPosterior => (-2.0, 6.0),
        };
        (DVector::from_element(d, lo), DVector::from_element(d, hi))
    }
}

impl Objective for Potential {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        match self.kind {
            PotentialKind::Rastrigin1dVariant => {
                let t = x[0];
                t * t + 3.0 * (1.0 - (2.0 * PI * t).cos())
            }
            PotentialKind::Rastrigin2d => {
                10.0 * x.len() as f64
                    + x.iter().map(|&t| t * t - 10.0 * (2.0 * PI * t).cos()).sum::<f64>()
            }
            PotentialKind::Himmelblau => {
                let (a, b) = (x[0], x[1]);
                (a * a + b - 11.0).powi(2) + (a + b * b - 7.0).powi(2)
            }
            PotentialKind::ShiftedQuadratic => 0.5 * x.iter().map(|&t| (t - 1.0).powi(2)).sum::<f64>(),
            PotentialKind::QuarticNorm => x.norm_squared().powi(2),
            PotentialKind::BananaPosterior => {
                let misfit = BANANA_DATA - banana_forward(x);
                misfit * misfit / (2.0 * BANANA_NOISE_STD.powi(2))
                    + x.norm_squared() / (2.0 * BANANA_PRIOR_STD.powi(2))
            }
        }
    }

    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        Some(match self.kind {
            PotentialKind::Rastrigin1dVariant => {
                let t = x[0];
                DVector::from_element(1, 2.0 * t + 6.0 * PI * (2.0 * PI * t).sin())
            }
            PotentialKind::Rastrigin2d => x.map(|t| 2.0 * t + 20.0 * PI * (2.0 * PI * t).sin()),
            PotentialKind::Himmelblau => {
                let (a, b) = (x[0], x[1]);
                let p = a * a + b - 11.0;
                let q = a + b * b - 7.0;
                DVector::from_vec(vec![4.0 * a * p + 2.0 * q, 2.0 * p + 4.0 * b * q])
            }
            PotentialKind::ShiftedQuadratic => x.map(|t| t - 1.0),
            PotentialKind::QuarticNorm => x * (4.0 * x.norm_squared()),
            PotentialKind::BananaPosterior => {
                let r = banana_forward(x) - BANANA_DATA;
                let w = r / BANANA_NOISE_STD.powi(2);
                let p = 1.0 / BANANA_PRIOR_STD.powi(2);
                DVector::from_vec(vec![-w + p * x[0], w * 2.0 * (x[1] - 2.0) + p * x[1]])
            }
        })
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let d = self.dim;
        Some(match self.kind {
            PotentialKind::Rastrigin1dVariant => {
                let t = x[0];
                DMatrix::from_element(1, 1, 2.0 + 12.0 * PI * PI * (2.0 * PI * t).cos())
            }
            PotentialKind::Rastrigin2d => {
                DMatrix::from_diagonal(&x.map(|t| 2.0 + 40.0 * PI * PI * (2.0 * PI * t).cos()))
            }
            PotentialKind::Himmelblau => {
                let (a, b) = (x[0], x[1]);
                let xy = 4.0 * (a + b);
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[12.0 * a * a + 4.0 * b - 42.0, xy, xy, 4.0 * a + 12.0 * b * b - 26.0],
                )
            }
            PotentialKind::ShiftedQuadratic => DMatrix::identity(d, d),
            PotentialKind::QuarticNorm => {
                DMatrix::identity(d, d) * (4.0 * x.norm_squared()) + (x * x.transpose()) * 8.0
            }
            PotentialKind::BananaPosterior => {
                let r = banana_forward(x) - BANANA_DATA;
                let s2 = BANANA_NOISE_STD.powi(2);
                let p = 1.0 / BANANA_PRIOR_STD.powi(2);
                let grad_a = DVector::from_vec(vec![-1.0, 2.0 * (x[1] - 2.0)]);
                let mut h = (&grad_a * grad_a.transpose()) / s2;
                h[(1, 1)] += 2.0 * r / s2;
                h + DMatrix::identity(2, 2) * p
            }
        })
    }
}

/// `offset + (x - center)^T H (x - center) / 2` for a symmetric `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub hessian: DMatrix<f64>,
    pub center: DVector<f64>,
    pub offset: f64,
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let s = x - &self.center;
        self.offset + 0.5 * s.dot(&(&self.hessian * &s))
    }

    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        Some(&self.hessian * (x - &self.center))
    }

    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.hessian.clone())
    }
}

/// Central differences with the given step, coordinate by coordinate.
pub fn finite_difference_gradient(p: &dyn Objective, x: &DVector<f64>, step: f64) -> DVector<f64> {
    let mut grad = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = p.value(&probe);
        probe[i] = x[i] - step;
        let down = p.value(&probe);
        probe[i] = x[i];
        grad[i] = (up - down) / (2.0 * step);
    }
    grad
}
