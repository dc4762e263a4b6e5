mod common;

use common::env;
use lpp_core::discrepancy::discrepancy_field;
use lpp_core::dp::min_action_free;
use lpp_core::env::{EnvParams, Environment};
use lpp_core::freepath::{compute_h, free_path_stats, g_argmin, limit_survival, run_free_paths};
use lpp_core::stats::ks_distance;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stats_agree_with_independent_scan(seed in any::<u64>(), n in 10usize..300) {
        let e = env(0.0, seed, n as i64 + 2, n);
        let st = match free_path_stats(&e, n) {
            Ok(st) => st,
            Err(_) => return Ok(()),
        };
        let (best, _) = min_action_free(e.potential(), n).unwrap();
        prop_assert!((st.action - best).abs() < 1e-9);
        let d = discrepancy_field(&e).unwrap();
        let (lo, hi) = st.range;
        let min_d = (lo..=hi).map(|x| d.get(x).unwrap()).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(st.d, min_d);
        prop_assert_eq!(d.get(st.ell).unwrap(), min_d);
        prop_assert!(st.tau <= n);
        prop_assert!(st.action >= -e.c() * n as f64 - 1e-9);
    }
}

#[test]
fn g_minimum_follows_weibull_law() {
    // min over edges of s|x| + y/2 for the rescaled point process has
    // survival exp(-(t/h)^3) at kappa = 0
    let s = 0.5;
    let n = 1_000_000;
    let base = EnvParams::edge_power(0.0, 1.0).unwrap();
    let h = compute_h(&base, s).unwrap();
    let t: Vec<f64> = (0..300)
        .map(|seed| {
            let p = base
                .clone()
                .with_seed(1000 + seed)
                .with_window(-40_000, 40_001)
                .unwrap()
                .with_horizon(1)
                .unwrap();
            let e = Environment::sample(&p).unwrap();
            g_argmin(&e, n, s).unwrap().1 / h
        })
        .collect();
    let ks = ks_distance(&t, |x| 1.0 - limit_survival(0.0, x));
    assert!(ks < 0.1, "KS {ks}");
}

#[test]
fn run_is_reproducible_and_nested() {
    let p = EnvParams::edge_power(0.0, 1.0).unwrap().with_seed(8);
    let a = run_free_paths(&p, &[50, 200], 6).unwrap();
    let b = run_free_paths(&p, &[50, 200], 6).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    let single = run_free_paths(&p, &[200], 6).unwrap();
    for r in 0..6 {
        assert_eq!(a.stats[r][1].action, single.stats[r][0].action);
    }
    assert!((0.0..=1.0).contains(&a.settled_fraction(1)));
    assert!(a.excess(1).iter().all(|&x| x >= -1e-9));
}
