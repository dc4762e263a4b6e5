use lpp_core::env::EnvParams;
use lpp_core::shape::{
    check_bounds, check_concavity, detect_flat_edge, estimate_s, estimate_shape, lattice_target, ShapeCurve,
    ShapeRun,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn lattice_target_is_truncation(num in 0i64..=1000, n in 1usize..2000) {
        let alpha = num as f64 / 1000.0;
        let k = lattice_target(alpha, n);
        prop_assert_eq!(k, num * n as i64 / 1000);
        prop_assert_eq!(lattice_target(-alpha, n), -k);
    }

    #[test]
    fn linear_chords_give_exact_slope(s in 0.01f64..2.0, b in -3.0f64..3.0) {
        // c - lambda = s a + b a^2 has chord slope s + b a
        let alphas: Vec<f64> = (0..=10).map(|i| i as f64 * 0.02).collect();
        let lambda = alphas.iter().map(|a| 1.0 - s * a - b * a * a).collect();
        let curve = ShapeCurve::from_table(alphas.clone(), lambda, vec![0.01; alphas.len()]);
        let est = estimate_s(&curve, 1.0, 0.2).unwrap();
        prop_assert!((est.s - s).abs() < 1e-9);
    }
}

fn tabulated(f: impl Fn(f64) -> f64) -> ShapeCurve {
    let alphas: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
    let lambda = alphas.iter().map(|&a| f(a)).collect();
    ShapeCurve::from_table(alphas.clone(), lambda, vec![1e-4; alphas.len()])
}

#[test]
fn concavity_flags_only_convex_kinks() {
    let concave = tabulated(|a| 1.0 - 0.3 * a - 0.5 * a * a);
    assert!(check_concavity(&concave).iter().all(|r| r.ok));
    let convex = tabulated(|a| 1.0 - 0.9 * a + 0.5 * a * a);
    assert!(check_concavity(&convex).iter().any(|r| !r.ok));
    // |alpha| has a convex kink at zero
    let kink = tabulated(|a| 0.2 + 0.5 * a);
    assert!(!check_concavity(&kink)[0].ok);
}

#[test]
fn flat_edge_found_on_piecewise_curve() {
    let curve = tabulated(|a| if a <= 0.3 { 1.0 - 0.2 * a } else { 0.94 - 0.5 * (a - 0.3) - (a - 0.3).powi(2) });
    let fe = detect_flat_edge(&curve, 1.0);
    assert!((fe.alpha0_hat - 0.3).abs() < 1e-12);
    assert!((fe.k_hat - 0.2).abs() < 1e-9);
    assert!(!fe.inconclusive);
}

#[test]
fn extrapolation_removes_power_correction() {
    // check the two-horizon formula against a synthetic ladder through a
    // real estimate: lambda_hat(n) - lambda_hat(m) must match b (n^e - m^e)
    let p = EnvParams::edge_power(0.0, 1.0).unwrap().with_seed(3);
    let run = ShapeRun {
        alphas: vec![0.0, 0.5],
        n_ladder: vec![100, 400],
        replicas: 4,
        budget: None,
    };
    let est = estimate_shape(&p, &run).unwrap();
    let e = -1.0 / 3.0;
    let x = est.extrapolated(0, 1, e).unwrap();
    let (lo, hi) = (est.curve(0), est.curve(1));
    let r = 4f64.powf(e);
    for j in 0..2 {
        for rep in 0..4 {
            let b = (hi.samples[rep][j] - lo.samples[rep][j]) / (100f64.powf(e) * (r - 1.0));
            let limit = lo.samples[rep][j] - b * 100f64.powf(e);
            assert!((x.samples[rep][j] - limit).abs() < 1e-12);
        }
    }
    assert!(est.extrapolated(1, 0, e).is_err());
    assert!(est.extrapolated(0, 1, 0.5).is_err());
}

#[test]
fn estimates_respect_trivial_bounds() {
    let p = EnvParams::edge_power(0.0, 1.0).unwrap().with_seed(12);
    let run = ShapeRun {
        alphas: vec![0.0, 0.25, 0.5, 1.0],
        n_ladder: vec![300],
        replicas: 8,
        budget: None,
    };
    let est = estimate_shape(&p, &run).unwrap();
    let curve = est.curve(0);
    assert!(curve.samples.iter().flatten().all(|&l| l <= 1.0 + 1e-12));
    // finite horizons sit below the limit, so only the upper bound and the
    // forced diagonal are checked here
    let rows = check_bounds(&curve, 1.0, est.d);
    assert!(rows.iter().all(|r| r.upper_ok));
    assert!(rows[3].lower_ok);
    assert!((est.d - 0.5).abs() < 1e-15);
    let tight = ShapeRun { budget: Some(run.cost() - 1), ..run };
    assert!(estimate_shape(&p, &tight).is_err());
}
