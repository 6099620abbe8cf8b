//! One-dimensional marginal histograms and the quadrature reference.

use egi_core::Objective;
use nalgebra::DVector;

use crate::error::{HarnessError, Result};

/// Equal-width bins on `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinSpec {
    pub lower: f64,
    pub upper: f64,
    pub n_bins: usize,
}

/// 40 bins on `[-6, 6]`, used for the banana marginals.
pub const BANANA_BINS: BinSpec = BinSpec {
    lower: -6.0,
    upper: 6.0,
    n_bins: 40,
};

impl BinSpec {
    pub fn new(lower: f64, upper: f64, n_bins: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) || n_bins == 0 {
            return Err(HarnessError::validation(
                "bins",
                format!("need finite lower < upper and at least one bin, got [{lower}, {upper}] x {n_bins}"),
            ));
        }
        Ok(Self { lower, upper, n_bins })
    }

    pub fn width(&self) -> f64 {
        (self.upper - self.lower) / self.n_bins as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.n_bins).map(|k| self.lower + k as f64 * self.width()).collect()
    }

    /// Bin containing `x`; the upper edge belongs to the last bin.
    pub fn index(&self, x: f64) -> Option<usize> {
        if !(x >= self.lower && x <= self.upper) {
            return None;
        }
        let k = ((x - self.lower) / self.width()).floor() as usize;
        Some(k.min(self.n_bins - 1))
    }
}

/// Histogram of one coordinate. Densities are normalized over the mass
/// inside the bin range; `outside` counts samples that fell beyond it.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalHistogram {
    pub axis: usize,
    pub bins: BinSpec,
    pub counts: Vec<usize>,
    pub outside: usize,
    pub densities: Vec<f64>,
}

impl MarginalHistogram {
    pub fn from_samples(samples: &[DVector<f64>], axis: usize, bins: BinSpec) -> Result<Self> {
        let mut counts = vec![0; bins.n_bins];
        let mut outside = 0;
        for s in samples {
            if axis >= s.len() {
                return Err(HarnessError::DimensionMismatch {
                    expected: axis + 1,
                    found: s.len(),
                });
            }
            match bins.index(s[axis]) {
                Some(k) => counts[k] += 1,
                None => outside += 1,
            }
        }
        let inside: usize = counts.iter().sum();
        let densities = counts
            .iter()
            .map(|&c| if inside == 0 { 0.0 } else { c as f64 / (inside as f64 * bins.width()) })
            .collect();
        Ok(Self {
            axis,
            bins,
            counts,
            outside,
            densities,
        })
    }

    /// Probability mass per bin, relative to the mass inside the range.
    pub fn masses(&self) -> Vec<f64> {
        let w = self.bins.width();
        self.densities.iter().map(|d| d * w).collect()
    }

    /// Share of samples outside the bin range.
    pub fn outside_fraction(&self) -> f64 {
        let total = self.outside + self.counts.iter().sum::<usize>();
        if total == 0 {
            0.0
        } else {
            self.outside as f64 / total as f64
        }
    }
}

/// Total-variation distance `sum |p_i - q_i| / 2` between bin masses.
///
/// Mass outside the bin range counts as one extra bin, so a sample pool
/// that left the range entirely is at distance 1 from any reference.
pub fn tv_distance(a: &MarginalHistogram, b: &MarginalHistogram) -> Result<f64> {
    if a.bins != b.bins {
        return Err(HarnessError::BinMismatch);
    }
    let (fa, fb) = (a.outside_fraction(), b.outside_fraction());
    let inside: f64 = a
        .masses()
        .iter()
        .zip(b.masses())
        .map(|(p, q)| (p * (1.0 - fa) - q * (1.0 - fb)).abs())
        .sum();
    Ok(0.5 * (inside + (fa - fb).abs()))
}

fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect()
}

/// Integral over `[a, b]` of the piecewise-linear interpolant through
/// `(t_i, f_i)`, taken as zero outside the nodes.
fn piecewise_linear_integral(t: &[f64], f: &[f64], a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..t.len() - 1 {
        let lo = a.max(t[i]);
        let hi = b.min(t[i + 1]);
        if hi <= lo {
            continue;
        }
        let slope = (f[i + 1] - f[i]) / (t[i + 1] - t[i]);
        let at = |x: f64| f[i] + slope * (x - t[i]);
        total += 0.5 * (hi - lo) * (at(lo) + at(hi));
    }
    total
}

/// Marginal of `exp(-V)` along `axis` for a 2d potential, from tensor-grid
/// quadrature with `n_nodes` equispaced nodes per axis on `grid`.
///
/// The other coordinate is integrated out with the trapezoid rule; the
/// resulting marginal is integrated exactly per bin as a piecewise-linear
/// function. `V` is shifted by its grid minimum before exponentiation.
pub fn reference_marginal(
    potential: &dyn Objective,
    axis: usize,
    grid: (f64, f64),
    n_nodes: usize,
    bins: BinSpec,
) -> Result<MarginalHistogram> {
    if potential.dim() != 2 {
        return Err(HarnessError::DimensionMismatch {
            expected: 2,
            found: potential.dim(),
        });
    }
    if axis > 1 {
        return Err(HarnessError::validation("axis", format!("must be 0 or 1, got {axis}")));
    }
    if n_nodes < 100 {
        return Err(HarnessError::validation("n_nodes", format!("need at least 100 nodes per axis, got {n_nodes}")));
    }
    let (lo, hi) = grid;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(HarnessError::validation("grid", format!("invalid extent [{lo}, {hi}]")));
    }
    let h = (hi - lo) / (n_nodes - 1) as f64;
    let t: Vec<f64> = (0..n_nodes).map(|i| lo + i as f64 * h).collect();

    // values[i][j]: node i along `axis`, node j along the other coordinate
    let mut values = vec![vec![0.0; n_nodes]; n_nodes];
    let mut v_min = f64::INFINITY;
    let mut p = DVector::zeros(2);
    for (i, &ti) in t.iter().enumerate() {
        for (j, &tj) in t.iter().enumerate() {
            p[axis] = ti;
            p[1 - axis] = tj;
            let v = potential.value(&p);
            if v.is_nan() || v == f64::NEG_INFINITY {
                return Err(HarnessError::QuadratureOverflow(format!("V({ti}, {tj}) = {v}")));
            }
            values[i][j] = v;
            v_min = v_min.min(v);
        }
    }
    if !v_min.is_finite() {
        return Err(HarnessError::QuadratureOverflow("V is infinite on the whole grid".into()));
    }

    let w = trapezoid_weights(n_nodes, h);
    let marginal: Vec<f64> = values
        .iter()
        .map(|row| row.iter().zip(&w).map(|(v, wj)| wj * (v_min - v).exp()).sum())
        .collect();
    let edges = bins.edges();
    let masses: Vec<f64> = edges
        .windows(2)
        .map(|e| piecewise_linear_integral(&t, &marginal, e[0], e[1]))
        .collect();
    let total: f64 = masses.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(HarnessError::QuadratureOverflow(format!(
            "no finite probability mass inside [{}, {}]",
            bins.lower, bins.upper
        )));
    }
    let width = bins.width();
    Ok(MarginalHistogram {
        axis,
        bins,
        counts: vec![0; bins.n_bins],
        outside: 0,
        densities: masses.iter().map(|m| m / (total * width)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use egi_core::Quadratic;
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn standard_gaussian() -> Quadratic {
        Quadratic {
            hessian: DMatrix::identity(2, 2),
            center: DVector::zeros(2),
            offset: 0.0,
        }
    }

    #[test]
    fn gaussian_marginal_matches_density_at_bin_centers() {
        let bins = BinSpec::new(-6.0, 6.0, 120).unwrap();
        let h = reference_marginal(&standard_gaussian(), 0, (-8.0, 8.0), 800, bins).unwrap();
        let edges = bins.edges();
        for (k, d) in h.densities.iter().enumerate() {
            let c = 0.5 * (edges[k] + edges[k + 1]);
            let exact = (-0.5 * c * c).exp() / (2.0 * PI).sqrt();
            assert!((d - exact).abs() < 1e-3, "bin {k}: {d} vs {exact}");
        }
    }

    #[test]
    fn reference_densities_integrate_to_one_and_respect_symmetry() {
        let h = reference_marginal(&standard_gaussian(), 1, (-8.0, 8.0), 401, BANANA_BINS).unwrap();
        assert!((h.masses().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for k in 0..20 {
            assert!((h.densities[k] - h.densities[39 - k]).abs() < 1e-10);
        }
    }

    #[test]
    fn reference_rejects_bad_inputs() {
        let g = standard_gaussian();
        assert!(reference_marginal(&g, 0, (-8.0, 8.0), 50, BANANA_BINS).is_err());
        struct Nan;
        impl Objective for Nan {
            fn dim(&self) -> usize {
                2
            }
            fn value(&self, _x: &DVector<f64>) -> f64 {
                f64::NAN
            }
        }
        assert!(matches!(
            reference_marginal(&Nan, 0, (-1.0, 1.0), 100, BANANA_BINS),
            Err(HarnessError::QuadratureOverflow(_))
        ));
    }

    #[test]
    fn sample_histogram_counts_and_normalization() {
        let bins = BinSpec::new(0.0, 4.0, 4).unwrap();
        let samples: Vec<_> = [0.5, 1.5, 1.7, 4.0, 9.0, -1.0].iter().map(|&x| v(&[x, 0.0])).collect();
        let h = MarginalHistogram::from_samples(&samples, 0, bins).unwrap();
        assert_eq!(h.counts, vec![1, 2, 0, 1]);
        assert_eq!(h.outside, 2);
        assert_eq!(h.counts.iter().sum::<usize>() + h.outside, samples.len());
        assert!((h.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tv_distance_examples() {
        let bins = BinSpec::new(0.0, 2.0, 2).unwrap();
        let p = MarginalHistogram::from_samples(&[v(&[0.5])], 0, bins).unwrap();
        let q = MarginalHistogram::from_samples(&[v(&[0.5]), v(&[1.5])], 0, bins).unwrap();
        let r = MarginalHistogram::from_samples(&[v(&[1.5])], 0, bins).unwrap();
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        assert!((tv_distance(&p, &q).unwrap() - 0.5).abs() < 1e-15);
        assert!((tv_distance(&p, &r).unwrap() - 1.0).abs() < 1e-15);
        let half_out = MarginalHistogram::from_samples(&[v(&[0.5]), v(&[7.0])], 0, bins).unwrap();
        assert!((tv_distance(&p, &half_out).unwrap() - 0.5).abs() < 1e-15);
        let all_out = MarginalHistogram::from_samples(&[v(&[-3.0])], 0, bins).unwrap();
        assert!((tv_distance(&p, &all_out).unwrap() - 1.0).abs() < 1e-15);
        let other = MarginalHistogram::from_samples(&[v(&[0.5])], 0, BinSpec::new(0.0, 2.0, 4).unwrap()).unwrap();
        assert!(matches!(tv_distance(&p, &other), Err(HarnessError::BinMismatch)));
    }
}
