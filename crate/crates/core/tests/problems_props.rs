use din_restart::problems::*;
use nalgebra::DVector;
use proptest::prelude::*;

fn vec_of(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

fn instance(seed: u64) -> (Quadratic, QuadraticSpec) {
    make_random_quadratic(8, 0.05, 4.0, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gradient_is_ax_plus_b(seed in 0u64..1000, x in vec_of(8)) {
        let (q, spec) = instance(seed);
        let x = DVector::from_vec(x);
        let expected = &spec.matrix * &x + &spec.linear;
        let diff = (q.gradient(&x) - &expected).norm();
        prop_assert!(diff <= 1e-12 * (1.0 + expected.norm()));
    }

    #[test]
    fn hessian_vec_matches_central_difference(seed in 0u64..1000, x in vec_of(8), d in vec_of(8)) {
        let (q, _) = instance(seed);
        let x = DVector::from_vec(x);
        let d = DVector::from_vec(d);
        prop_assume!(d.norm() > 1e-3);
        let eps = 1e-6 * (1.0 + x.norm());
        let fd = (q.gradient(&(&x + &d * eps)) - q.gradient(&(&x - &d * eps))) / (2.0 * eps);
        let hv = q.hessian_vec(&x, &d);
        prop_assert!((&fd - &hv).norm() <= 1e-5 * hv.norm().max(1e-12));
    }

    #[test]
    fn hessian_vec_is_linear(seed in 0u64..1000, x in vec_of(8), d in vec_of(8), e in vec_of(8), a in -2.0f64..2.0) {
        let (q, _) = instance(seed);
        let (x, d, e) = (DVector::from_vec(x), DVector::from_vec(d), DVector::from_vec(e));
        let lhs = q.hessian_vec(&x, &(&d * a + &e));
        let rhs = q.hessian_vec(&x, &d) * a + q.hessian_vec(&x, &e);
        prop_assert!((&lhs - &rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn convex_on_samples(seed in 0u64..1000, x in vec_of(8), y in vec_of(8)) {
        let (q, _) = instance(seed);
        let (x, y) = (DVector::from_vec(x), DVector::from_vec(y));
        let lower = q.value(&x) + q.gradient(&x).dot(&(&y - &x));
        prop_assert!(q.value(&y) >= lower - 1e-9);
    }

    #[test]
    fn growth_satisfies_lojasiewicz(seed in 0u64..1000, x in vec_of(8)) {
        let (q, _) = instance(seed);
        let x = DVector::from_vec(x);
        let gap = q.gap(&x).unwrap();
        let g = q.gradient(&x).norm();
        prop_assert!(q.growth() * gap <= 0.5 * g * g + 1e-9);
        prop_assert!(q.growth() > 0.0 && q.growth() <= q.lipschitz());
    }

    #[test]
    fn diag_rho_lojasiewicz(rho in 0.1f64..20.0, x in vec_of(3)) {
        let q = make_diag_rho(rho).unwrap();
        let x = DVector::from_vec(x);
        let g = q.gradient(&x).norm();
        prop_assert!(q.growth() * q.gap(&x).unwrap() <= 0.5 * g * g + 1e-9);
        prop_assert_eq!(q.lipschitz(), rho.powi(2).max(1.0));
    }
}

#[test]
fn gradient_vanishes_at_minimizer() {
    for seed in 0..20 {
        let (q, _) = make_random_quadratic(30, 0.01, 10.0, seed).unwrap();
        let x = q.minimizer().unwrap();
        assert!(q.gradient(x).norm() <= 1e-9 * (1.0 + x.norm()));
    }
    let q = make_diag_rho(10.0).unwrap();
    let x = q.minimizer().unwrap();
    assert_eq!(q.gradient(x).norm(), 0.0);
}

#[test]
fn spec_is_symmetric_with_requested_spectrum() {
    let (q, spec) = make_random_quadratic(12, 0.3, 2.0, 7).unwrap();
    assert_eq!((&spec.matrix - spec.matrix.transpose()).amax(), 0.0);
    let eig = spec.matrix.clone().symmetric_eigenvalues();
    assert!(eig.min() > 0.3 - 1e-12 && eig.max() < 2.0 + 1e-12);
    assert!((eig.max() - q.lipschitz()).abs() < 1e-10);
    assert!((eig.min() - q.growth()).abs() < 1e-10);
}

#[test]
fn same_seed_same_instance() {
    let (_, a) = make_random_quadratic(10, 0.1, 1.0, 3).unwrap();
    let (_, b) = make_random_quadratic(10, 0.1, 1.0, 3).unwrap();
    let (_, c) = make_random_quadratic(10, 0.1, 1.0, 4).unwrap();
    assert_eq!(a.matrix, b.matrix);
    assert_eq!(a.linear, b.linear);
    assert_ne!(a.matrix, c.matrix);
    assert_eq!(random_start(5, 9), random_start(5, 9));
    assert!(random_start(50, 1).iter().all(|c| c.abs() <= 1.0));
}
