use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vtsdd::krylov::{fgmres, gmres, KrylovConfig};

fn system(n: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { n as f64 } else { 0.0 };
        d + rng.random_range(-1.0..1.0)
    });
    let b = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    (a, b)
}

fn mv(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(x)).as_slice().to_vec()
}

fn true_residual(a: &DMatrix<f64>, x: &[f64], b: &[f64]) -> f64 {
    let ax = mv(a, x);
    let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    r / b.iter().map(|v| v * v).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn residual_history_is_monotone_and_reported_residual_is_true(n in 2usize..40, seed in any::<u64>(), flexible in any::<bool>()) {
        let (a, b) = system(n, seed);
        let cfg = KrylovConfig { tol: 1e-10, max_iter: None, flexible };
        let res = if flexible {
            fgmres(|x| mv(&a, x), |v| v.to_vec(), &b, &cfg)
        } else {
            gmres(|x| mv(&a, x), |v| v.to_vec(), &b, &cfg)
        };
        prop_assert!(res.converged);
        prop_assert!(res.iterations <= n);
        prop_assert_eq!(res.residual_history[0], 1.0);
        for w in res.residual_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        let tr = true_residual(&a, &res.x, &b);
        prop_assert!((tr - res.relative_residual).abs() <= 1e-12);
        prop_assert!(tr <= 1e-10);
    }

    #[test]
    fn diagonal_preconditioner_does_not_change_the_solution(n in 2usize..30, seed in any::<u64>()) {
        let (a, b) = system(n, seed);
        let d: Vec<f64> = (0..n).map(|i| 1.0 / a[(i, i)]).collect();
        let cfg = KrylovConfig { tol: 1e-11, ..KrylovConfig::default() };
        let plain = gmres(|x| mv(&a, x), |v| v.to_vec(), &b, &cfg);
        let jac = gmres(|x| mv(&a, x), |v| v.iter().zip(&d).map(|(x, s)| x * s).collect(), &b, &cfg);
        let direct = a.clone().lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let scale = direct.amax();
        for i in 0..n {
            prop_assert!((plain.x[i] - direct[i]).abs() <= 1e-8 * scale);
            prop_assert!((jac.x[i] - direct[i]).abs() <= 1e-8 * scale);
        }
    }
}

#[test]
fn iteration_cap_is_respected() {
    let (a, b) = system(30, 3);
    let cfg = KrylovConfig { tol: 1e-14, max_iter: Some(4), flexible: false };
    let res = gmres(|x| mv(&a, x), |v| v.to_vec(), &b, &cfg);
    assert!(!res.converged);
    assert_eq!(res.iterations, 4);
    assert!((true_residual(&a, &res.x, &b) - res.relative_residual).abs() <= 1e-12);
}
