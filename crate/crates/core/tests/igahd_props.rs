use din_restart::igahd::*;
use din_restart::problems::*;
use nalgebra::DVector;
use proptest::prelude::*;

/// Speed-restarted Nesterov on `φ(x) = ½λx²` with step `s`, restarts clearing momentum.
fn nesterov_scalar(lambda: f64, s: f64, alpha: f64, k_min: usize, x0: f64, n: usize) -> Vec<f64> {
    let mut xs = vec![x0];
    let (mut prev, mut cur) = (x0, x0);
    let mut k = 1usize;
    while xs.len() < n {
        let y = cur + (1.0 - alpha / k as f64) * (cur - prev);
        let next = y - s * lambda * y;
        xs.push(next);
        if (next - cur).abs() < (cur - prev).abs() && k >= k_min {
            k = 1;
            prev = next;
        } else {
            k += 1;
            prev = cur;
        }
        cur = next;
    }
    xs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beta_zero_is_speed_restarted_nesterov(lambda in 0.01f64..10.0, x0 in -5.0f64..5.0, k_min in 1usize..20) {
        let q = Quadratic::diagonal(&[lambda], None).unwrap();
        let h = 1.0 / lambda.sqrt();
        let params = IgahdParams { alpha: 3.1, beta: 0.0, h, k_min, n_iter: 300, reset: ResetMode::ClearMomentum };
        let x = DVector::from_vec(vec![x0]);
        let log = run_igahd(&x, &x, &params, &q, IgahdPolicy::Speed).unwrap();
        let reference = nesterov_scalar(lambda, h * h, 3.1, k_min, x0, 300);
        for (p, r) in log.points.iter().zip(&reference) {
            prop_assert!((p[0] - r).abs() <= 1e-12 * (1.0 + r.abs()));
        }
    }
}

fn ill_conditioned(policy: IgahdPolicy, reset: ResetMode) -> IterateLog {
    let q = make_diag_rho(10.0).unwrap();
    let x = DVector::from_element(3, 1.0);
    let params = IgahdParams { reset, ..IgahdParams::defaults_for(100.0, 1000) };
    run_igahd(&x, &x, &params, &q, policy).unwrap()
}

#[test]
fn step_norms_rise_until_trigger() {
    let log = ill_conditioned(IgahdPolicy::Speed, ResetMode::ClearMomentum);
    let k_min = log.params.k_min;
    assert!(!log.restart_indices.is_empty());
    for w in log.rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.k_local >= k_min {
            if b.restarted == 1 {
                assert!(b.step_norm < a.step_norm);
            } else {
                assert!(b.step_norm >= a.step_norm, "k={}", b.k_global);
            }
        }
    }
}

#[test]
fn restarts_are_spaced_by_k_min() {
    for policy in [IgahdPolicy::Speed, IgahdPolicy::WarmThenSpeed] {
        let log = ill_conditioned(policy, ResetMode::ClearMomentum);
        let idx = &log.restart_indices;
        assert!(idx.windows(2).all(|w| w[1] > w[0]));
        let start = usize::from(policy == IgahdPolicy::WarmThenSpeed);
        for w in idx[start..].windows(2) {
            assert!(w[1] - w[0] >= log.params.k_min);
        }
        for &i in idx.iter().skip(start) {
            assert!(log.rows[i - 1].k_local >= log.params.k_min);
        }
    }
}

#[test]
fn warm_restart_fires_at_first_increase() {
    let log = ill_conditioned(IgahdPolicy::WarmThenSpeed, ResetMode::ClearMomentum);
    let first = log.restart_indices[0];
    let gaps: Vec<f64> = log.rows.iter().map(|r| r.phi_gap).collect();
    assert!(gaps[first - 1] > gaps[first - 2]);
    assert!(gaps[..first - 1].windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn reset_clears_momentum() {
    let q = make_diag_rho(10.0).unwrap();
    let log = ill_conditioned(IgahdPolicy::Speed, ResetMode::ClearMomentum);
    for &i in &log.restart_indices {
        if i >= log.points.len() {
            continue;
        }
        let x = &log.points[i - 1];
        let expected = igahd_step(x, x, 1, &log.params, &q).unwrap();
        assert_eq!(log.points[i], expected);
        assert_eq!(log.rows[i].k_local, 1);
    }
    let strict = ill_conditioned(IgahdPolicy::Speed, ResetMode::StrictBox);
    let &i = strict.restart_indices.first().unwrap();
    let expected = igahd_step(&strict.points[i - 1], &strict.points[i - 2], 1, &strict.params, &q).unwrap();
    assert_eq!(strict.points[i], expected);
}

#[test]
fn restart_gains_on_ill_conditioned_example() {
    let none = ill_conditioned(IgahdPolicy::None, ResetMode::ClearMomentum);
    let warm = ill_conditioned(IgahdPolicy::WarmThenSpeed, ResetMode::ClearMomentum);
    assert!(warm.best_gap() <= 1e-4 * none.best_gap(), "{:e} vs {:e}", warm.best_gap(), none.best_gap());
    assert!(none.last_gap() < none.rows[0].phi_gap);
}

#[test]
fn unknown_optimum_measured_from_best() {
    struct NoOpt(Quadratic);
    impl ObjectiveModel for NoOpt {
        fn dim(&self) -> usize { self.0.dim() }
        fn value(&self, x: &Point) -> f64 { self.0.value(x) }
        fn gradient(&self, x: &Point) -> Point { self.0.gradient(x) }
        fn hessian_vec(&self, x: &Point, d: &Point) -> Point { self.0.hessian_vec(x, d) }
        fn lipschitz(&self) -> f64 { self.0.lipschitz() }
    }
    let m = NoOpt(make_diag_rho(2.0).unwrap());
    let x = DVector::from_element(3, 1.0);
    let log = run_igahd(&x, &x, &IgahdParams::defaults_for(4.0, 100), &m, IgahdPolicy::Speed).unwrap();
    assert!(log.gap_from_best);
    assert_eq!(log.best_gap(), 0.0);
}
