mod common;

use common::{env, KAPPAS};
use lpp_core::discrepancy::{
    discrepancy_field, modified_discrepancy, modified_discrepancy_tail_bound, p_kappa, record_edges,
    small_discrepancy_constant, zeta, zeta_identity_residual,
};
use lpp_core::env::{EnvParams, Environment};
use lpp_core::stats::mean_stderr;
use proptest::prelude::*;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let inner: f64 = (1..m).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

proptest! {
    #[test]
    fn modified_discrepancy_is_nonnegative(k in prop::sample::select(KAPPAS.to_vec()), seed in any::<u64>()) {
        let e = env(k, seed, 200, 1);
        for x in -199..=199 {
            let d = modified_discrepancy(&e, x).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert!(d <= 2.0 * e.c() + 1e-12);
        }
    }

    #[test]
    fn discrepancy_bounded_by_twice_c(k in prop::sample::select(KAPPAS.to_vec()), seed in any::<u64>()) {
        let e = env(k, seed, 100, 1);
        let d = discrepancy_field(&e).unwrap();
        prop_assert!(d.d.iter().all(|&v| (0.0..=2.0 * e.c()).contains(&v)));
    }

    #[test]
    fn zeta_identity(k in -0.99f64..10.0) {
        prop_assert!(zeta_identity_residual(k).abs() < 1e-12);
        prop_assert!(zeta(k) > 0.0 && zeta(k) < 1.0);
    }
}

#[test]
fn p_kappa_matches_quadrature() {
    // p = 2 int_0^1 u^k (1 - u)^k du; substitute u = v^2 near 0 when k < 0
    for k in [0.0, 1.0, 2.5, 4.0] {
        let num = 2.0 * simpson(|u: f64| u.powf(k) * (1.0 - u).powf(k), 0.0, 1.0, 20_000);
        assert!((p_kappa(k).unwrap() - num).abs() < 1e-8, "kappa {k}");
    }
    let k = -0.5;
    let num = 4.0 * simpson(|v: f64| 2.0 * v.powf(2.0 * k + 1.0) * (1.0 - v * v).powf(k), 0.0, 0.5f64.sqrt(), 20_000);
    assert!((p_kappa(k).unwrap() - num).abs() < 1e-8);
    let pi = std::f64::consts::PI;
    assert!((p_kappa(0.5).unwrap() - pi / 4.0).abs() < 1e-13);
    assert!((p_kappa(-0.5).unwrap() - 2.0 * pi).abs() < 1e-12);
    assert!(p_kappa(-1.0).is_err());
}

#[test]
fn small_discrepancy_constant_by_quadrature() {
    // P(d <= u) = P(|F1 - F2| >= 2c - u) ~ const u^(2k+2); check at small u
    let p = EnvParams::edge_power(1.0, 1.0).unwrap();
    let q = p.q();
    let rho = |x: f64| q * (1.0 - x.abs()).max(0.0);
    let u = 0.02;
    // F1 in (1 - u, 1], F2 < F1 - 2 + u, mirrored
    let inner = |f1: f64| simpson(|f2| rho(f2), -1.0, f1 - 2.0 + u, 200);
    let prob = 2.0 * simpson(|f1| rho(f1) * inner(f1), 1.0 - u, 1.0, 200);
    let ratio = prob / u.powi(4);
    assert!((ratio - small_discrepancy_constant(&p)).abs() < 1e-6 * ratio, "{ratio}");
}

#[test]
fn record_count_is_harmonic() {
    // d(0), d(1), ... are stationary and continuous, and records of a
    // 1-dependent sequence still number about log N
    let n = 4000;
    let counts: Vec<f64> = (0..400)
        .map(|seed| {
            let p = EnvParams::edge_power(0.0, 1.0)
                .unwrap()
                .with_seed(seed)
                .with_window(0, n)
                .unwrap()
                .with_horizon(1)
                .unwrap();
            let e = Environment::sample(&p).unwrap();
            record_edges(&e).unwrap().len() as f64
        })
        .collect();
    let (m, se) = mean_stderr(&counts);
    let harmonic: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
    assert!((m - harmonic).abs() < 0.5 + 4.0 * se, "{m} +- {se} vs {harmonic}");
}

#[test]
fn records_strictly_decrease() {
    let e = env(0.5, 4, 3000, 1);
    let r = record_edges(&e).unwrap();
    assert_eq!(r[0].0, 0);
    assert!(r.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 > w[1].1));
    let d = discrepancy_field(&e).unwrap();
    for w in r.windows(2) {
        assert!((w[0].0..w[1].0).all(|x| d.get(x).unwrap() >= w[0].1));
    }
}

#[test]
fn modified_discrepancy_tail() {
    // edge power with c = 1 satisfies rho(u) <= (c - u)^k / k for k <= 1
    let k = 0.25;
    let p = EnvParams::edge_power(k, 1.0)
        .unwrap()
        .with_seed(11)
        .with_window(-1_000_001, 1_000_001)
        .unwrap()
        .with_horizon(1)
        .unwrap();
    let e = Environment::sample(&p).unwrap();
    let vals: Vec<f64> = (-1_000_000..=1_000_000).map(|x| modified_discrepancy(&e, x).unwrap()).collect();
    for h in [0.02, 0.05, 0.1, 0.2] {
        let frac = vals.iter().filter(|&&v| v <= h).count() as f64 / vals.len() as f64;
        let se = (frac.max(1e-6) / vals.len() as f64).sqrt();
        assert!(frac <= modified_discrepancy_tail_bound(k, h) + 4.0 * se, "h {h}: {frac}");
    }
}
