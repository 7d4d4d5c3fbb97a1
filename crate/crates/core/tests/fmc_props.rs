use matcap_core::fmc::{
    capacity, capacity_bounds_report, capacity_normal_closed_form, dynamic_range_bound_check,
    expected_state_norm, fmc, simulate, spatiotemporal_fmm, state_covariance_factors, vector_fmc,
    LinearMatrixDynamics, VectorDynamics,
};
use matcap_core::linalg::Mat;
use matcap_core::SeededRng;
use proptest::prelude::*;

fn normal_system(seed: u64, n: usize) -> LinearMatrixDynamics {
    LinearMatrixDynamics::random_normal(n, 0.95, &mut SeededRng::new(seed))
}

/// Direct truncated sum of the scalar curve `(1-u^2)(1-v^2)(uv)^(2i)`.
fn scalar_oracle(u: f64, v: f64, terms: usize) -> f64 {
    (0..terms).map(|i| (1.0 - u * u) * (1.0 - v * v) * (u * v).powi(2 * i as i32)).sum()
}

#[test]
fn scalar_capacity_anchor() {
    let oracle = scalar_oracle(0.5, 0.5, 200);
    assert!((oracle - 0.6).abs() < 1e-15);
    let c = capacity(&LinearMatrixDynamics::scalar(0.5, 0.5, 1.0), 1e-14).unwrap();
    assert!((c - 0.6).abs() <= 1e-12);
}

#[test]
fn closed_form_parity_and_strict_bound() {
    for trial in 0..100u64 {
        let n = 2 + (trial as usize % 14);
        let d = normal_system(1000 + trial, n);
        let series = capacity(&d, 1e-12).unwrap();
        let closed = capacity_normal_closed_form(&d).unwrap();
        assert!((series - closed).abs() <= 1e-9 * (1.0 + closed), "trial {trial}: {series} vs {closed}");
        let r = capacity_bounds_report(&d).unwrap();
        assert_eq!(r.corollary2_satisfied, Some(true), "trial {trial}: {}", r.j_tot_rel);
    }
}

#[test]
fn general_systems_respect_n_squared() {
    let mut rng = SeededRng::new(77);
    for trial in 0..100 {
        let n = 4 + trial % 9;
        let d = LinearMatrixDynamics::random_general(n, 0.95, &mut rng);
        let r = capacity_bounds_report(&d).unwrap();
        assert!(r.theorem3_satisfied, "trial {trial}: {}", r.j_tot_rel);
    }
}

#[test]
fn vector_baseline_converges_to_one() {
    let mut rng = SeededRng::new(55);
    for _ in 0..50 {
        let d = VectorDynamics::random_normal(9, 0.95, &mut rng);
        let s = vector_fmc(&d, 400).unwrap();
        assert!(s.truncation_error_bound < 1e-6);
        assert!((s.capacity - 1.0).abs() <= 1e-6 + s.truncation_error_bound);
    }
}

#[test]
fn expected_state_norm_matches_simulation() {
    // i.i.d. Rademacher input: unit variance, so cross terms vanish in expectation
    let d = LinearMatrixDynamics::scalar(0.5, 0.5, 1.0);
    let mut rng = SeededRng::new(9);
    let steps = 10_000;
    let signal: Vec<f64> = (0..steps).map(|_| if rng.bernoulli(0.5) { 1.0 } else { -1.0 }).collect();
    let xs = simulate(&d, &signal, &mut rng, true);
    let burn = 100;
    let avg = xs[burn..].iter().map(|x| x.frobenius_norm_sq()).sum::<f64>() / (steps - burn) as f64;
    let expected = expected_state_norm(&d, 1e-12).unwrap();
    assert!((avg - expected).abs() <= 0.05 * expected, "{avg} vs {expected}");

    let d = normal_system(4, 3);
    let signal: Vec<f64> = (0..steps).map(|_| if rng.bernoulli(0.5) { 1.0 } else { -1.0 }).collect();
    let xs = simulate(&d, &signal, &mut rng, true);
    let avg = xs[burn..].iter().map(|x| x.frobenius_norm_sq()).sum::<f64>() / (steps - burn) as f64;
    let expected = expected_state_norm(&d, 1e-12).unwrap();
    assert!((avg - expected).abs() <= 0.05 * expected, "{avg} vs {expected}");
}

#[test]
fn dynamic_range_bound_holds() {
    let mut rng = SeededRng::new(31);
    for trial in 0..100 {
        let n = 2 + trial % 8;
        let d = if trial % 2 == 0 {
            LinearMatrixDynamics::random_normal(n, 0.95, &mut rng)
        } else {
            LinearMatrixDynamics::random_general(n, 0.95, &mut rng)
        };
        let r = dynamic_range_bound_check(&d).unwrap();
        assert!(r.satisfied, "trial {trial}: {} > {}", r.j_tot, r.bound);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn curve_is_nonnegative_and_cumulative_monotone(seed in any::<u64>(), n in 1usize..=15) {
        let d = normal_system(seed, n);
        let s = fmc(&d, 60).unwrap();
        prop_assert!(s.values.iter().all(|v| *v >= -1e-12));
        prop_assert!(s.cumulative.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn spatiotemporal_reproduces_curve(seed in any::<u64>(), n in 2usize..=6, i in 0usize..12) {
        let d = normal_system(seed, n);
        let s = fmc(&d, i).unwrap();
        let (jv, ju) = spatiotemporal_fmm(&d, i, i).unwrap();
        let t = d.w.matmul(&jv).matmul_t(&d.w).matmul(&ju).trace();
        prop_assert!((t - s.values[i]).abs() <= 1e-10, "{t} vs {}", s.values[i]);
        prop_assert!(jv.max_abs_diff(&jv.transpose()) <= 1e-12 * jv.max_abs().max(1.0));
    }

    #[test]
    fn spatiotemporal_general_systems(seed in any::<u64>(), i in 0usize..8) {
        let d = LinearMatrixDynamics::random_general(4, 0.9, &mut SeededRng::new(seed));
        let s = fmc(&d, i).unwrap();
        let (jv, ju) = spatiotemporal_fmm(&d, i, i).unwrap();
        let t = d.w.matmul(&jv).matmul_t(&d.w).matmul(&ju).trace();
        prop_assert!((t - s.values[i]).abs() <= 1e-10 * (1.0 + s.values[i]));
    }

    #[test]
    fn curve_scales_quadratically_in_w(seed in any::<u64>(), c in 0.1f64..10.0) {
        let d = normal_system(seed, 4);
        let scaled = d.with_w(d.w.scale(c)).unwrap();
        let a = fmc(&d, 20).unwrap();
        let b = fmc(&scaled, 20).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((y - c * c * x).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}

#[test]
fn spatiotemporal_column_trace_sums_to_n() {
    let d = normal_system(3, 5);
    let cov = state_covariance_factors(&d).unwrap();
    let mut total = 0.0;
    let mut vk = Mat::identity(5);
    for _ in 0..2000 {
        total += vk.matmul(&cov.sigma_chol.solve(&vk.transpose())).trace();
        vk = vk.matmul(&d.v);
    }
    assert!((d.eps2 * total - 5.0).abs() < 1e-9);
}
