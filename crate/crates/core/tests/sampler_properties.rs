use egi_core::objectives::{make_potential, Objective};
use egi_core::samplers::{
    aldi_gradfree_step, egi_aldi_extra_step, egi_aldi_step, egi_ls_step, egi_mala_step, run_sampler,
    InverseProblemSpec, SamplerConfig, SamplerMethod, SamplerState, SamplerTarget,
};
use egi_core::Quadratic;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn normal(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

fn quadratic_1d() -> Quadratic {
    Quadratic {
        hessian: DMatrix::from_element(1, 1, 1.5),
        center: v(&[0.7]),
        offset: 0.0,
    }
}

fn quadratic_2d() -> Quadratic {
    Quadratic {
        hessian: DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0]),
        center: v(&[1.0, -0.5]),
        offset: 0.3,
    }
}

fn linear_gaussian_problem() -> InverseProblemSpec {
    InverseProblemSpec::new(
        |x| x.clone(),
        v(&[1.0]),
        DMatrix::identity(1, 1),
        v(&[0.0]),
        DMatrix::identity(1, 1),
    )
    .unwrap()
}

/// `G(x) = L x` in 2d with two observations.
fn linear_problem_2d() -> InverseProblemSpec {
    let l = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 2.0]);
    InverseProblemSpec::new(
        move |x| &l * x,
        v(&[0.4, -1.0]),
        DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.8]),
        v(&[0.2, 0.1]),
        DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
    )
    .unwrap()
}

fn spread_init(rng: &mut ChaCha8Rng, j: usize, d: usize) -> Vec<DVector<f64>> {
    (0..j).map(|_| normal(rng, d)).collect()
}

#[test]
fn egi_ls_tracks_exact_gradient_ula() {
    for (q, j) in [(quadratic_1d(), 5), (quadratic_2d(), 7)] {
        let d = q.dim();
        let cfg = SamplerConfig { step: 0.05, ..SamplerConfig::new(SamplerMethod::EgiLs) };
        let mut state = SamplerState::new(&q, spread_init(&mut ChaCha8Rng::seed_from_u64(1), j, d)).unwrap();
        let mut oracle = state.ensemble.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut replay = ChaCha8Rng::seed_from_u64(2);
        for n in 0..100 {
            state = egi_ls_step(&state, &cfg, &q, &mut rng).unwrap();
            for x in oracle.iter_mut() {
                let g = q.gradient(x).unwrap();
                *x = &*x - g * cfg.step + normal(&mut replay, d) * (2.0 * cfg.step).sqrt();
            }
            for (a, b) in state.ensemble.iter().zip(&oracle) {
                assert!((a - b).amax() < 1e-8, "d={d} step {n}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn egi_mala_tracks_exact_gradient_mala() {
    for (q, j) in [(quadratic_1d(), 5), (quadratic_2d(), 7)] {
        let d = q.dim();
        let tau = 0.2;
        let cfg = SamplerConfig { step: tau, ..SamplerConfig::new(SamplerMethod::EgiMala) };
        let mut state = SamplerState::new(&q, spread_init(&mut ChaCha8Rng::seed_from_u64(3), j, d)).unwrap();
        let mut oracle = state.ensemble.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut replay = ChaCha8Rng::seed_from_u64(4);
        let log_q = |to: &DVector<f64>, from: &DVector<f64>| {
            let mean = from - q.gradient(from).unwrap() * tau;
            -(to - mean).norm_squared() / (4.0 * tau)
        };
        let mut accepted = 0;
        for n in 0..100 {
            state = egi_mala_step(&state, &cfg, &q, &mut rng).unwrap();
            let props: Vec<DVector<f64>> = oracle
                .iter()
                .map(|x| x - q.gradient(x).unwrap() * tau + normal(&mut replay, d) * (2.0 * tau).sqrt())
                .collect();
            for (x, p) in oracle.iter_mut().zip(props) {
                let log_alpha = -q.value(&p) + q.value(x) + log_q(x, &p) - log_q(&p, x);
                let u: f64 = replay.random();
                if u.ln() < log_alpha {
                    *x = p;
                    accepted += 1;
                }
            }
            for (a, b) in state.ensemble.iter().zip(&oracle) {
                assert!((a - b).amax() < 1e-8, "d={d} step {n}: {a} vs {b}");
            }
        }
        assert_eq!(accepted, state.accept_count.iter().sum::<usize>());
        assert!(accepted > 0 && accepted < 100 * j, "accepted {accepted}");
    }
}

#[test]
fn mala_leaves_the_standard_gaussian_invariant() {
    let target = Quadratic {
        hessian: DMatrix::identity(1, 1),
        center: v(&[0.0]),
        offset: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let init = spread_init(&mut rng, 10, 1);
    let cfg = SamplerConfig { step: 0.5, n_iters: 50_000, seed: 10, ..SamplerConfig::new(SamplerMethod::EgiMala) };
    let rec = run_sampler(SamplerTarget::Potential(&target), init, &cfg, 5_000, 1000).unwrap();
    let mean = rec.sample_mean().unwrap()[0];
    let var = rec.sample_variance().unwrap()[0];
    assert!(mean.abs() < 0.03, "mean {mean}");
    assert!((var - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn gradient_free_aldi_recovers_the_conjugate_posterior() {
    let problem = linear_gaussian_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let init = spread_init(&mut rng, 20, 1);
    let cfg = SamplerConfig { n_iters: 20_000, seed: 12, ..SamplerConfig::new(SamplerMethod::AldiGradFree) };
    let rec = run_sampler(SamplerTarget::Problem(&problem), init, &cfg, 5_000, 1000).unwrap();
    let mean = rec.sample_mean().unwrap()[0];
    let var = rec.sample_variance().unwrap()[0];
    assert!((mean - 0.5).abs() < 0.05, "mean {mean}");
    assert!((var - 0.5).abs() < 0.05, "variance {var}");
}

#[test]
fn egi_aldi_agrees_with_gradient_free_aldi_for_linear_forward_maps() {
    for (problem, j) in [(linear_gaussian_problem(), 4), (linear_problem_2d(), 8)] {
        let d = problem.dim();
        let init = spread_init(&mut ChaCha8Rng::seed_from_u64(13), j, d);
        let state = SamplerState::new(&problem, init).unwrap();
        let cfg = SamplerConfig { step: 0.05, ..SamplerConfig::new(SamplerMethod::EgiAldi) };
        let a = aldi_gradfree_step(&state, &cfg, &problem, &mut ChaCha8Rng::seed_from_u64(14)).unwrap();
        let b = egi_aldi_step(&state, &cfg, &problem, &mut ChaCha8Rng::seed_from_u64(14)).unwrap();
        for (x, y) in a.ensemble.iter().zip(&b.ensemble) {
            assert!((x - y).amax() < 1e-8, "d={d}: {x} vs {y}");
        }
    }
}

#[test]
fn extrapolated_variant_matches_per_member_inference_on_quadratics() {
    let q = quadratic_2d();
    let init = spread_init(&mut ChaCha8Rng::seed_from_u64(15), 8, 2);
    let mut a = SamplerState::new(&q, init).unwrap();
    let mut b = a.clone();
    let cfg = SamplerConfig { step: 0.02, ..SamplerConfig::new(SamplerMethod::EgiAldi) };
    let mut ra = ChaCha8Rng::seed_from_u64(16);
    let mut rb = ChaCha8Rng::seed_from_u64(16);
    for n in 0..50 {
        a = egi_aldi_step(&a, &cfg, &q, &mut ra).unwrap();
        b = egi_aldi_extra_step(&b, &cfg, &q, &mut rb).unwrap();
        for (x, y) in a.ensemble.iter().zip(&b.ensemble) {
            assert!((x - y).amax() < 1e-8, "step {n}: {x} vs {y}");
        }
    }
}

#[test]
fn aldi_family_stays_in_the_initial_affine_span() {
    let problem = InverseProblemSpec::banana();
    let pot = make_potential("banana_posterior", 2).unwrap();
    let init = vec![v(&[0.5, 1.0]), v(&[2.0, 2.5])];
    let dir = (&init[1] - &init[0]).normalize();
    let normal_dir = v(&[-dir[1], dir[0]]);
    let offset = normal_dir.dot(&init[0]);
    for method in [SamplerMethod::AldiGradFree, SamplerMethod::EgiAldi, SamplerMethod::EgiAldiExtra] {
        let cfg = SamplerConfig { n_iters: 2000, seed: 17, ..SamplerConfig::new(method) };
        let target = if method == SamplerMethod::AldiGradFree {
            SamplerTarget::Problem(&problem)
        } else {
            SamplerTarget::Potential(&pot)
        };
        let rec = run_sampler(target, init.clone(), &cfg, 0, 100).unwrap();
        assert!(rec.abort.is_none(), "{method}: {:?}", rec.abort);
        let worst = rec.samples.iter().map(|x| (normal_dir.dot(x) - offset).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "{method}: distance {worst}");
    }
}

#[test]
fn sampler_runs_are_reproducible() {
    let pot = make_potential("banana_posterior", 2).unwrap();
    let problem = InverseProblemSpec::banana();
    let init = spread_init(&mut ChaCha8Rng::seed_from_u64(18), 6, 2);
    for method in SamplerMethod::ALL {
        let cfg = SamplerConfig { n_iters: 200, seed: 19, ..SamplerConfig::new(method) };
        let target = if method == SamplerMethod::AldiGradFree {
            SamplerTarget::Problem(&problem)
        } else {
            SamplerTarget::Potential(&pot)
        };
        let a = run_sampler(target, init.clone(), &cfg, 50, 10).unwrap();
        let b = run_sampler(target, init.clone(), &cfg, 50, 10).unwrap();
        assert_eq!(a.samples, b.samples, "{method}");
        assert_eq!(a.trace, b.trace, "{method}");
    }
}
