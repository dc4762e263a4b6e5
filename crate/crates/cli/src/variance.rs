//! Variance over the signs of the minimal action needed to reach a record
//! edge and settle there, with the field held fixed.

use lpp_core::discrepancy::record_edges;
use lpp_core::dp::RowSweep;
use lpp_core::env::{EnvParams, Environment, Potential};
use lpp_core::error::{Error, Result};
use lpp_core::rng::derive_seed;
use lpp_core::stats::mean_stderr;
use rayon::prelude::*;
use serde::Serialize;

pub const TAG_VARIANCE: u64 = 0x5641_5249;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRow {
    /// Position in the record sequence, starting at 0 for `x = 0`.
    pub record: usize,
    pub x: i64,
    pub d: f64,
    pub horizon: usize,
    pub mean: f64,
    pub variance: f64,
    pub variance_stderr: f64,
    pub excess_mean: f64,
    pub excess_variance: f64,
    pub excess_variance_stderr: f64,
    pub replicas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceStudy {
    pub seed: u64,
    pub rows: Vec<VarianceRow>,
    /// Records dropped because of the budget.
    pub truncated: usize,
}

/// `4 max(x, 1)`.
pub fn study_horizon(x: i64) -> usize {
    4 * x.max(1) as usize
}

/// The first `count` record edges with `x <= x_limit`, growing the window
/// until enough are found.
pub fn find_records(params: &EnvParams, count: usize, x_limit: i64) -> Result<Vec<(i64, f64)>> {
    if count == 0 {
        return Err(Error::Param("need at least one record".into()));
    }
    let mut w = 1024i64.min(x_limit.max(1) + 1);
    loop {
        let p = params.clone().with_window(0, w)?.with_horizon(1)?;
        let env = Environment::sample(&p)?;
        let mut rec = record_edges(&env)?;
        rec.retain(|&(x, _)| x <= x_limit);
        if rec.len() >= count || w > x_limit {
            rec.truncate(count);
            return Ok(rec);
        }
        w = (2 * w).min(x_limit + 1);
    }
}

/// Minimal action over walks in `[0, x + 1]` of length `horizon` that
/// first reach `x` at some time `m` and then stay on `{x, x + 1}`, and the
/// same minus the action of sitting on the edge from time 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settle {
    pub action: f64,
    pub excess: f64,
}

pub fn settle_action(pot: Potential<'_>, x: i64, horizon: usize) -> Result<Settle> {
    // suffix[m]: best edge action over (m, horizon]
    let mut suffix = vec![0.0; horizon + 1];
    for t in (1..=horizon).rev() {
        suffix[t - 1] = suffix[t] + pot.weight(t, x).min(pot.weight(t, x + 1));
    }
    if x == 0 {
        return Ok(Settle {
            action: suffix[0],
            excess: 0.0,
        });
    }
    let mut sweep = RowSweep::new(pot, (0, 0), 0, x - 1)?;
    let mut best = f64::INFINITY;
    for m in 1..=horizon {
        best = best.min(sweep.value(x - 1) + pot.weight(m, x) + suffix[m]);
        if m < horizon {
            sweep.step()?;
        }
    }
    Ok(Settle {
        action: best,
        excess: best - suffix[0],
    })
}

/// Unbiased sample variance with a large-sample standard error from the
/// fourth central moment.
pub fn variance_with_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let (m, _) = mean_stderr(xs);
    let m2 = xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    let se = ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
    (var, se)
}

/// Cell updates for one replica over the given records.
pub fn replica_cost(records: &[(i64, f64)]) -> u128 {
    records
        .iter()
        .map(|&(x, _)| study_horizon(x) as u128 * (x.max(0) as u128 + 1))
        .sum()
}

/// Fixes `F` from `params.seed`, draws `replicas` independent sign
/// sequences, and reports the variance of [`settle_action`] per record edge.
/// Records that would push the cost over `budget` are dropped from the end.
pub fn variance_study(
    params: &EnvParams,
    record_count: usize,
    x_limit: i64,
    replicas: usize,
    budget: Option<u128>,
) -> Result<VarianceStudy> {
    if replicas < 2 {
        return Err(Error::Param("need at least two sign replicas".into()));
    }
    let mut records = find_records(params, record_count, x_limit)?;
    let mut truncated = 0;
    if let Some(b) = budget {
        while !records.is_empty() && replica_cost(&records) * replicas as u128 > b {
            records.pop();
            truncated += 1;
        }
        if records.is_empty() {
            return Err(Error::Budget {
                needed: replicas as u128 * study_horizon(0) as u128,
                budget: b,
            });
        }
    }
    let x_last = records.last().unwrap().0;
    let p = params
        .clone()
        .with_window(0, x_last + 1)?
        .with_horizon(study_horizon(x_last))?;
    let table: Vec<Vec<Settle>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let env = Environment::sample_with_signs(&p, derive_seed(p.seed(), TAG_VARIANCE, r as u64))?;
            records
                .iter()
                .map(|&(x, _)| settle_action(env.potential(), x, study_horizon(x)))
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows = records
        .iter()
        .enumerate()
        .map(|(i, &(x, d))| {
            let col: Vec<f64> = table.iter().map(|row| row[i].action).collect();
            let exc: Vec<f64> = table.iter().map(|row| row[i].excess).collect();
            let (variance, variance_stderr) = variance_with_stderr(&col);
            let (excess_variance, excess_variance_stderr) = variance_with_stderr(&exc);
            VarianceRow {
                record: i,
                x,
                d,
                horizon: study_horizon(x),
                mean: mean_stderr(&col).0,
                variance,
                variance_stderr,
                excess_mean: mean_stderr(&exc).0,
                excess_variance,
                excess_variance_stderr,
                replicas,
            }
        })
        .collect();
    Ok(VarianceStudy {
        seed: params.seed(),
        rows,
        truncated,
    })
}
