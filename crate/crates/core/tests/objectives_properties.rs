use egi_core::objectives::{finite_difference_gradient, make_potential, Objective, PotentialKind};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dims(kind: PotentialKind) -> Vec<usize> {
    match kind.fixed_dim() {
        Some(d) => vec![d],
        None => vec![1, 10, 50],
    }
}

#[test]
fn analytic_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for kind in PotentialKind::ALL {
        for d in dims(kind) {
            let pot = make_potential(kind.name(), d).unwrap();
            let (lo, hi) = pot.benchmark_box();
            for _ in 0..100 {
                let x = DVector::from_fn(d, |i, _| rng.random_range(lo[i]..hi[i]));
                let exact = pot.gradient(&x).unwrap();
                let fd = finite_difference_gradient(&pot, &x, 1e-5);
                for i in 0..d {
                    let tol = 1e-5 * exact[i].abs().max(1.0);
                    assert!(
                        (exact[i] - fd[i]).abs() <= tol,
                        "{} d={d} at {x:?}: coordinate {i}: {} vs {}",
                        kind.name(),
                        exact[i],
                        fd[i]
                    );
                }
            }
        }
    }
}

#[test]
fn analytic_hessians_match_differences_of_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let h = 1e-6;
    for kind in PotentialKind::ALL {
        for d in dims(kind).into_iter().take(2) {
            let pot = make_potential(kind.name(), d).unwrap();
            let (lo, hi) = pot.benchmark_box();
            for _ in 0..20 {
                let x = DVector::from_fn(d, |i, _| rng.random_range(lo[i]..hi[i]));
                let hess = pot.hessian(&x).unwrap();
                assert!((&hess - hess.transpose()).amax() <= 1e-12 * hess.amax().max(1.0));
                for j in 0..d {
                    let mut up = x.clone();
                    up[j] += h;
                    let mut down = x.clone();
                    down[j] -= h;
                    let col = (pot.gradient(&up).unwrap() - pot.gradient(&down).unwrap()) / (2.0 * h);
                    for i in 0..d {
                        let tol = 1e-4 * hess[(i, j)].abs().max(1.0);
                        assert!((hess[(i, j)] - col[i]).abs() <= tol, "{} d={d}", kind.name());
                    }
                }
            }
        }
    }
}

#[test]
fn values_are_finite_on_benchmark_boxes() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for kind in PotentialKind::ALL {
        for d in dims(kind) {
            let pot = make_potential(kind.name(), d).unwrap();
            let (lo, hi) = pot.benchmark_box();
            for _ in 0..100 {
                let x = DVector::from_fn(d, |i, _| rng.random_range(lo[i]..hi[i]));
                assert!(pot.value(&x).is_finite());
            }
        }
    }
}

#[test]
fn known_minima_are_stationary() {
    for kind in PotentialKind::ALL {
        let d = kind.fixed_dim().unwrap_or(4);
        let pot = make_potential(kind.name(), d).unwrap();
        for (x, v) in pot.known_minima() {
            assert!((pot.value(&x) - v).abs() < 1e-10, "{}", kind.name());
            assert!(pot.gradient(&x).unwrap().amax() < 1e-6, "{}", kind.name());
        }
    }
}
