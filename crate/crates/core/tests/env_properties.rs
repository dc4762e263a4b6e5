use lpp_core::env::{cdf, density_pdf, inverse_cdf, mean_abs_f, sample_f, EnvParams, Environment};
use lpp_core::stats::{ks_distance, mean_stderr};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn quantile_inverts_distribution(k in -0.9f64..4.0, c in 0.1f64..5.0, u in 0.0f64..=1.0) {
        let p = EnvParams::edge_power(k, c).unwrap();
        let x = inverse_cdf(&p, u).unwrap();
        prop_assert!(x.abs() <= c);
        prop_assert!((cdf(&p, x) - u).abs() < 1e-9);
    }

    #[test]
    fn density_is_even_and_vanishes_outside(k in -0.9f64..4.0, x in -2.0f64..2.0) {
        let p = EnvParams::edge_power(k, 1.0).unwrap();
        prop_assert_eq!(density_pdf(&p, x), density_pdf(&p, -x));
        if x.abs() > 1.0 {
            prop_assert_eq!(density_pdf(&p, x), 0.0);
        }
    }

    #[test]
    fn mean_abs_closed_form(k in -0.9f64..4.0, c in 0.1f64..5.0) {
        let p = EnvParams::edge_power(k, c).unwrap();
        prop_assert!((mean_abs_f(&p) - c / (k + 2.0)).abs() < 1e-12 * c);
    }

    #[test]
    fn windows_agree_on_overlap(seed in any::<u64>(), a in -300i64..0, b in 0i64..300, h in 1usize..200) {
        let p = EnvParams::edge_power(0.5, 1.0).unwrap().with_seed(seed);
        let small = Environment::sample(&p.clone().with_window(a, b).unwrap().with_horizon(h).unwrap()).unwrap();
        let big = small.resized(a - 17, b + 33, h + 50).unwrap();
        for x in a..=b {
            prop_assert_eq!(small.f(x), big.f(x));
        }
        for i in 1..=h {
            prop_assert_eq!(small.b(i), big.b(i));
        }
    }

    #[test]
    fn kv_roundtrip(k in -0.9f64..4.0, c in 0.1f64..5.0, seed in any::<u64>(), a in -100i64..=0, b in 0i64..100) {
        let p = EnvParams::edge_power(k, c).unwrap().with_seed(seed).with_window(a, b).unwrap();
        let q = EnvParams::from_kv(&p.to_kv()).unwrap();
        prop_assert_eq!(q.to_kv(), p.to_kv());
    }
}

#[test]
fn sampled_field_follows_the_density() {
    for k in [-0.5, 0.0, 1.0, 3.0] {
        let p = EnvParams::edge_power(k, 2.0).unwrap().with_seed(5).with_window(-20_000, 20_000).unwrap();
        let e = Environment::sample(&p).unwrap();
        let ks = ks_distance(e.field(), |x| cdf(&p, x));
        // 1% critical value for n = 40001 is about 0.0082
        assert!(ks < 0.0082, "kappa {k}: KS {ks}");
        let abs: Vec<f64> = e.field().iter().map(|v| v.abs()).collect();
        let (m, se) = mean_stderr(&abs);
        assert!((m - mean_abs_f(&p)).abs() < 4.0 * se);
    }
}

#[test]
fn signs_are_fair_coins() {
    let p = EnvParams::edge_power(0.0, 1.0).unwrap().with_seed(2).with_horizon(200_000).unwrap();
    let e = Environment::sample(&p).unwrap();
    let plus = e.signs().iter().filter(|&&s| s > 0).count() as f64;
    assert!((plus - 100_000.0).abs() < 4.0 * (50_000.0f64).sqrt());
    let runs = e.signs().windows(2).filter(|w| w[0] != w[1]).count() as f64;
    assert!((runs - 100_000.0).abs() < 4.0 * (50_000.0f64).sqrt());
}

#[test]
fn sample_f_by_inversion() {
    let p = EnvParams::edge_power(1.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xs: Vec<f64> = (0..20_000).map(|_| sample_f(&p, rng.gen::<f64>())).collect();
    assert!(xs.iter().all(|x| x.abs() < 1.0));
    assert!(ks_distance(&xs, |x| cdf(&p, x)) < 0.015);
}
