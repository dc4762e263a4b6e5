#![allow(dead_code)]

use lpp_core::env::{EnvParams, Environment};

/// Field on `[-half, half]` and signs on `1..=horizon` from one seed.
pub fn env(kappa: f64, seed: u64, half: i64, horizon: usize) -> Environment {
    let p = EnvParams::edge_power(kappa, 1.0)
        .unwrap()
        .with_seed(seed)
        .with_window(-half, half)
        .unwrap()
        .with_horizon(horizon)
        .unwrap();
    Environment::sample(&p).unwrap()
}

pub const KAPPAS: [f64; 4] = [-0.5, 0.0, 1.0, 2.5];
