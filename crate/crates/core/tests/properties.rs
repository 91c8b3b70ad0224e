//! Randomized structural invariants: symmetry and positivity of the driver
//! covariance, exactness of the Gray-code walk, log-convexity of the
//! partition function, attraction of the couplings, and round trips through
//! the curve representation.

mod common;

use latgas_core::gas::{config_log_weight, flip_log_gain, naive_log_partition};
use latgas_core::math::em1_over;
use latgas_core::process::{covariance_x, variance_g};
use latgas_core::{
    bdt, build_subsystem, detect_critical_volatility, enumerate_log_partition,
    occupancy_expectation, Error, Occupation, ProcessSpec, TenorGrid, YieldCurve,
};
use proptest::prelude::*;

/// Random subsystem with `m` sites anchored at 0 on an (m+1)-period grid.
fn subsystem_strategy(
    max_sites: usize,
) -> impl Strategy<Value = (latgas_core::GasSubsystem, ProcessSpec, TenorGrid)> {
    (
        1..=max_sites,
        prop::bool::ANY,
        0.05..0.5f64,
        0.0..0.2f64,
        prop::collection::vec(0.001..0.5f64, max_sites),
    )
        .prop_map(move |(m, half, sigma, gamma, tails)| {
            let tau = if half { 0.5 } else { 0.25 };
            let grid = TenorGrid::new(m + 1, tau).unwrap();
            let spec = ProcessSpec::new(sigma, gamma).unwrap();
            let sub = build_subsystem(&tails[..m], &grid, &spec, 0).unwrap();
            (sub, spec, grid)
        })
}

proptest! {
    #[test]
    fn covariance_is_symmetric_and_consistent(
        sigma in 0.01..1.0f64,
        gamma in 0.0..0.3f64,
        t1 in 0.0..20.0f64,
        t2 in 0.0..20.0f64,
    ) {
        let spec = ProcessSpec::new(sigma, gamma).unwrap();
        let a = covariance_x(&spec, t1, t2).unwrap();
        let b = covariance_x(&spec, t2, t1).unwrap();
        prop_assert_eq!(a, b);
        let v = covariance_x(&spec, t1, t1).unwrap();
        prop_assert!((v - variance_g(&spec, t1).unwrap()).abs() <= 1e-14 * v.max(1.0));
        // 2x2 minor of a covariance matrix is nonnegative.
        let det = variance_g(&spec, t1).unwrap() * variance_g(&spec, t2).unwrap() - a * a;
        prop_assert!(det >= -1e-12 * v.max(1.0).powi(2), "det = {}", det);
    }

    #[test]
    fn em1_over_stays_in_unit_interval(x in 0.0..50.0f64, dx in 1e-6..1.0f64) {
        let a = em1_over(x);
        let b = em1_over(x + dx);
        prop_assert!(a > 0.0 && a <= 1.0);
        prop_assert!(b <= a, "em1_over must be nonincreasing: {} then {}", a, b);
    }

    #[test]
    fn gray_walk_matches_direct_summation(
        (sub, _, _) in subsystem_strategy(8),
        phi in 0.0..2.0f64,
    ) {
        let walk = enumerate_log_partition(&sub, phi).unwrap().log_value;
        let naive = naive_log_partition(&sub, phi).unwrap();
        prop_assert!((walk - naive).abs() <= 1e-12 * naive.abs().max(1.0));
    }

    #[test]
    fn partition_is_log_convex_in_phi(
        (sub, _, _) in subsystem_strategy(8),
        phi in 0.0..2.0f64,
    ) {
        let h = 0.25;
        let f = |p: f64| enumerate_log_partition(&sub, p).unwrap().log_value;
        prop_assert!(f(phi - h) + f(phi + h) >= 2.0 * f(phi) - 1e-10);
    }

    #[test]
    fn couplings_only_raise_the_partition_function(
        (sub, _, _) in subsystem_strategy(8),
        phi in 0.0..2.0f64,
    ) {
        let coupled = enumerate_log_partition(&sub, phi).unwrap().log_value;
        let free = enumerate_log_partition(&sub.couplings_zeroed(), phi).unwrap().log_value;
        prop_assert!(coupled >= free - 1e-12, "coupled {} < free {}", coupled, free);
    }

    #[test]
    fn flip_gain_equals_weight_difference(
        (sub, _, _) in subsystem_strategy(10),
        bits in prop::num::u64::ANY,
        site_pick in prop::num::usize::ANY,
        phi in 0.0..2.0f64,
    ) {
        let site = site_pick % sub.m;
        let occ = Occupation::new(bits & ((1 << sub.m) - 1), sub.m).unwrap();
        let mut flipped = occ;
        flipped.flip(site);
        let gain = flip_log_gain(&sub, &occ, site, phi);
        let direct = config_log_weight(&sub, &flipped, phi) - config_log_weight(&sub, &occ, phi);
        prop_assert!((gain - direct).abs() <= 1e-10, "gain {} vs {}", gain, direct);
    }

    #[test]
    fn occupancy_is_a_probability_and_grows_with_phi(
        (sub, _, _) in subsystem_strategy(8),
        phi in 0.0..1.5f64,
    ) {
        let lo = occupancy_expectation(&sub, phi).unwrap();
        let hi = occupancy_expectation(&sub, phi + 0.5).unwrap();
        for (a, b) in lo.iter().zip(&hi) {
            prop_assert!((0.0..=1.0).contains(a));
            prop_assert!(b >= &(a - 1e-10), "occupancy fell from {} to {}", a, b);
        }
    }

    #[test]
    fn zero_gamma_recursion_matches_enumeration(
        (m, half, sigma, tails) in (1..=8usize, prop::bool::ANY, 0.05..0.5f64,
            prop::collection::vec(0.001..0.5f64, 8)),
        phi in 0.0..2.0f64,
    ) {
        let tau = if half { 0.5 } else { 0.25 };
        let grid = TenorGrid::new(m + 1, tau).unwrap();
        let spec = ProcessSpec::new(sigma, 0.0).unwrap();
        let sub = build_subsystem(&tails[..m], &grid, &spec, 0).unwrap();
        let walk = enumerate_log_partition(&sub, phi).unwrap().log_value;
        let ln_c = bdt::bdt_coefficients(&tails[..m], &grid, &spec, 0).unwrap();
        let rec = bdt::bdt_log_n(&ln_c, &spec, &grid, 0, phi);
        prop_assert!((walk - rec).abs() <= 1e-10 * walk.abs().max(1.0),
            "walk {} vs recursion {}", walk, rec);
    }

    #[test]
    fn smooth_quadratic_data_reports_no_transition(
        a in 0.01..5.0f64,
        b in -1.0..1.0f64,
        points in 21..60usize,
    ) {
        let sigmas: Vec<f64> = (0..points).map(|k| 0.05 + 0.01 * k as f64).collect();
        let ln_n: Vec<f64> = sigmas.iter().map(|&s| a * s * s + b * s).collect();
        match detect_critical_volatility(&sigmas, &ln_n) {
            Err(Error::NoTransition) => {}
            other => prop_assert!(false, "expected NoTransition, got {:?}", other),
        }
    }

    #[test]
    fn curve_round_trips_through_discounts(
        forwards in prop::collection::vec(0.001..0.2f64, 2..30),
        half in prop::bool::ANY,
    ) {
        let tau = if half { 0.5 } else { 0.25 };
        let mut discounts = vec![1.0];
        for &f in &forwards {
            discounts.push(discounts.last().unwrap() / (1.0 + f * tau));
        }
        let curve = YieldCurve::from_discounts(discounts).unwrap();
        for (i, &f) in forwards.iter().enumerate() {
            let rt = curve.forward(i, tau);
            prop_assert!((rt - f).abs() <= 1e-12 * f.max(1.0), "period {}: {} vs {}", i, rt, f);
        }
    }
}
