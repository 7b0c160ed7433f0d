mod common;

use proptest::prelude::*;
use synthbench::accountant::{
    calibrate_sigma, default_orders, epsilon_from_rdp, rdp_step, to_epsilon, AccountantState, PrivacyBudget,
};

use common::{epsilon_by_quadrature, rdp_by_quadrature};

#[test]
fn rdp_matches_quadrature_across_orders() {
    for &(q, sigma) in &[(0.01, 2.2), (0.05, 1.1), (0.2, 0.8), (0.5, 4.0)] {
        for &alpha in &[1.1, 1.5, 2.0, 2.5, 3.0, 7.3, 16.0, 32.0, 64.0] {
            let got = rdp_step(q, sigma, alpha).unwrap();
            let want = rdp_by_quadrature(q, sigma, alpha);
            let rel = (got - want).abs() / want.abs().max(1e-300);
            assert!(rel < 1e-6, "q={q} sigma={sigma} alpha={alpha}: {got} vs {want}");
        }
    }
}

#[test]
fn full_batch_matches_gaussian_closed_form() {
    for &sigma in &[0.5, 1.0, 3.0, 10.0] {
        for &alpha in &[1.5, 2.0, 10.0, 64.0] {
            let closed = alpha / (2.0 * sigma * sigma);
            assert!((rdp_step(1.0, sigma, alpha).unwrap() - closed).abs() < 1e-10);
            let quad = rdp_by_quadrature(1.0, sigma, alpha);
            assert!((quad - closed).abs() / closed < 1e-7, "{quad} vs {closed}");
        }
    }
}

#[test]
fn calibrated_sigma_hits_target_under_independent_accounting() {
    let target = PrivacyBudget::new(1.0, 5e-5).unwrap();
    let sigma = calibrate_sigma(target, 0.01, 2000).unwrap();
    let eps = epsilon_by_quadrature(0.01, sigma, 2000, 5e-5, &default_orders());
    assert!((eps - 1.0).abs() < 0.01, "sigma {sigma} gives {eps}");
}

#[test]
fn published_mnist_setting() {
    // 60 epochs of batch 256 over 60 000 examples at sigma 1.1, delta 1e-5.
    let q = 256.0 / 60_000.0;
    let state = AccountantState::fresh(q, 1.1).unwrap().compose(14_062);
    let eps = to_epsilon(&state, 1e-5).unwrap().epsilon;
    assert!((eps - 3.0).abs() < 0.1, "{eps}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn epsilon_monotone_in_steps_and_sigma(
        q in 0.001f64..0.5,
        sigma in 0.5f64..10.0,
        steps in 1u64..5000,
    ) {
        let delta = 1e-5;
        let e = |s: f64, t: u64| to_epsilon(&AccountantState::fresh(q, s).unwrap().compose(t), delta).unwrap().epsilon;
        prop_assert!(e(sigma, steps + 100) >= e(sigma, steps));
        prop_assert!(e(sigma * 1.2, steps) <= e(sigma, steps));
    }

    #[test]
    fn rdp_non_decreasing_in_order(q in 0.001f64..1.0, sigma in 0.5f64..10.0) {
        let orders = default_orders();
        let rdp: Vec<f64> = orders.iter().map(|&a| rdp_step(q, sigma, a).unwrap()).collect();
        for w in rdp.windows(2) {
            prop_assert!(w[1] >= w[0] * (1.0 - 1e-9) - 1e-15);
        }
        prop_assert!(rdp.iter().all(|r| *r >= -1e-15));
    }

    #[test]
    fn composition_is_linear(q in 0.001f64..0.5, sigma in 0.5f64..5.0, a in 1u64..1000, b in 1u64..1000) {
        let s = AccountantState::fresh(q, sigma).unwrap();
        let ab = s.compose(a + b).rdp();
        let sum: Vec<f64> = s.compose(a).rdp().iter().zip(s.compose(b).rdp()).map(|(x, y)| x + y).collect();
        for (x, y) in ab.iter().zip(&sum) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn conversion_is_min_over_orders(r in prop::collection::vec(0.0f64..5.0, 3), delta in 1e-8f64..0.1) {
        let orders = [2.0, 8.0, 32.0];
        let got = epsilon_from_rdp(&orders, &r, delta).unwrap().epsilon;
        let want = orders.iter().zip(&r).map(|(a, x)| x + (1.0 / delta).ln() / (a - 1.0)).fold(f64::INFINITY, f64::min);
        prop_assert!((got - want).abs() < 1e-12);
    }
}
