//! Small dense linear-algebra helpers shared by the inference and dynamics code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

/// Minimum-norm least-squares solution of `a * u = b`.
///
/// Singular values below `max(rows, cols) * eps * sigma_max` are treated as
/// zero, which gives pseudoinverse semantics for rank-deficient and
/// underdetermined systems.
pub fn min_norm_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return DVector::zeros(cols);
    }
    let fa = faer::Mat::<f64>::from_fn(rows, cols, |i, j| a[(i, j)]);
    let Ok(svd) = fa.thin_svd() else {
        return DVector::from_element(cols, f64::NAN);
    };
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let sigma_max = (0..s.nrows()).map(|k| s[k]).fold(0.0, f64::max);
    if sigma_max == 0.0 || !sigma_max.is_finite() {
        return DVector::zeros(cols);
    }
    let cutoff = sigma_max * rows.max(cols) as f64 * f64::EPSILON;

    let mut x = DVector::zeros(cols);
    for k in 0..s.nrows() {
        if s[k] <= cutoff {
            continue;
        }
        let c = (0..rows).map(|i| u[(i, k)] * b[i]).sum::<f64>() / s[k];
        for j in 0..cols {
            x[j] += c * v[(j, k)];
        }
    }
    x
}

/// Factor `L` with `L * L^T = cov` for a symmetric positive semi-definite
/// matrix. Slightly negative eigenvalues from round-off are clamped to zero.
pub fn psd_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(cov.clone());
    let mut factor = eig.eigenvectors;
    for (mut col, &lambda) in factor.column_iter_mut().zip(eig.eigenvalues.iter()) {
        col *= lambda.max(0.0).sqrt();
    }
    factor
}

pub fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Arithmetic mean of a non-empty set of points.
pub fn mean(points: &[DVector<f64>]) -> DVector<f64> {
    let dim = points.first().map_or(0, |p| p.len());
    let mut acc = DVector::zeros(dim);
    for p in points {
        acc += p;
    }
    acc / points.len() as f64
}

/// Largest pairwise Euclidean distance in the ensemble.
pub fn max_pairwise_distance(points: &[DVector<f64>]) -> f64 {
    let mut best = 0.0_f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max((a - b).norm());
        }
    }
    best
}

/// Centered deviations `x^j - mean` as the columns of a `d x J` matrix.
pub fn centered_columns(points: &[DVector<f64>], center: &DVector<f64>) -> DMatrix<f64> {
    let dim = center.len();
    DMatrix::from_fn(dim, points.len(), |r, c| points[c][r] - center[r])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_norm_solution_of_underdetermined_system() {
        // x + y = 2 has minimum-norm solution (1, 1)
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0]);
        let u = min_norm_lstsq(&a, &b);
        assert!((u[0] - 1.0).abs() < 1e-14);
        assert!((u[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn overdetermined_system_returns_least_squares_fit() {
        // fit of y = c through (1, 1), (1, 3): c = 2
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 3.0]);
        let u = min_norm_lstsq(&a, &b);
        assert!((u[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_gives_zero_solution() {
        let a = DMatrix::zeros(2, 3);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(min_norm_lstsq(&a, &b), DVector::zeros(3));
    }

    #[test]
    fn rank_deficient_wide_system_matches_pseudoinverse() {
        // repeated columns [x, -x, x, x^2/2, ...]: rank 2 with a round-off sized third singular value
        let x = [2.0904819973419293, 1.7540264532276026, -1.492713795709762];
        let s = [1.0, 1.0, -1.0];
        let a = DMatrix::from_fn(3, 6, |i, j| if j < 3 { x[i] * s[j] } else { 0.5 * x[i] * x[i] });
        let b = DVector::from_vec(vec![2.3439630705717103; 3]);
        let u = min_norm_lstsq(&a, &b);
        // normal equations restricted to the two-dimensional column space
        let basis = DMatrix::from_fn(3, 2, |i, j| if j == 0 { x[i] } else { 0.5 * x[i] * x[i] });
        let coef = (basis.transpose() * &basis).lu().solve(&(basis.transpose() * &b)).unwrap();
        assert!((&a * &u - &basis * coef).amax() < 1e-12);
        // minimum norm spreads the weight evenly over duplicated columns
        assert!((u[3] - u[4]).abs() < 1e-12 && (u[4] - u[5]).abs() < 1e-12);
        assert!((u[0] + u[2]).abs() < 1e-12 && (u[0] - u[1]).abs() < 1e-12);
    }

    #[test]
    fn psd_factor_reproduces_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let l = psd_factor(&cov);
        assert!((&l * l.transpose() - &cov).norm() < 1e-12);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let l = psd_factor(&singular);
        assert!((&l * l.transpose() - &singular).norm() < 1e-12);
    }

    #[test]
    fn pairwise_distance() {
        let pts = vec![
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![3.0, 4.0]),
            DVector::from_vec(vec![1.0, 0.0]),
        ];
        assert_eq!(max_pairwise_distance(&pts), 5.0);
        assert_eq!(max_pairwise_distance(&pts[..1]), 0.0);
    }
}
