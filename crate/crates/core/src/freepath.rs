//! Statistics of the free-endpoint optimal path: the best edge on its range
//! `l_n`, that edge's discrepancy `d_n`, the hitting time `tau_n`, whether
//! the path settles there, scaling exponents across horizons, and the
//! limiting law of `(c n + A) / (h n^zeta)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::discrepancy::{p_kappa, zeta};
use crate::dp::free_endpoint_paths;
use crate::env::{EnvParams, Environment, Potential};
use crate::error::{param, range, Error, Result};
use crate::paths::{discrepancy_at, LazyPath};
use crate::rng::derive_seed;
use crate::stats::{bootstrap_ci, ks_distance, median, ols};

pub const TAG_FREEPATH: u64 = 0x4652_4545;

/// Checkpoint spacing used by the free-path sweeps.
pub const CHECKPOINT_SPACING: usize = 512;

#[derive(Debug, Clone, Serialize)]
pub struct FreePathStats {
    pub n: usize,
    /// Edge `{l, l + 1}` of smallest discrepancy with `l` on the path range.
    pub ell: i64,
    pub d: f64,
    /// First time the path is on `{l, l + 1}`.
    pub tau: usize,
    /// The path stays on `{l, l + 1}` from `tau` to `n`.
    pub settled: bool,
    pub action: f64,
    pub endpoint: i64,
    pub range: (i64, i64),
    /// No ties were met while backtracking.
    pub unique: bool,
}

/// Extracts the statistics of an optimal path. `x + 1` must be in the
/// window for every `x` on the path.
pub fn path_stats(pot: Potential<'_>, c: f64, path: &LazyPath, action: f64, unique: bool) -> Result<FreePathStats> {
    let (lo, hi) = path.range();
    if !pot.contains(lo) || !pot.contains(hi + 1) {
        return range("path range plus one site must lie in the window".to_string());
    }
    let mut ell = lo;
    let mut d = discrepancy_at(pot, c, lo);
    for x in lo + 1..=hi {
        let dx = discrepancy_at(pot, c, x);
        if dx < d || (dx == d && (x.abs(), x > 0) < (ell.abs(), ell > 0)) {
            ell = x;
            d = dx;
        }
    }
    let on_edge = |x: i64| x == ell || x == ell + 1;
    let tau = path
        .iter()
        .find(|&(_, x)| on_edge(x))
        .map(|(t, _)| t)
        .expect("l lies on the range");
    let settled = path.iter().filter(|&(t, _)| t >= tau).all(|(_, x)| on_edge(x));
    Ok(FreePathStats {
        n: path.end_time(),
        ell,
        d,
        tau,
        settled,
        action,
        endpoint: path.end(),
        range: (lo, hi),
        unique,
    })
}

/// Free-path statistics for one environment at horizon `n`, with walks
/// confined to the environment window minus its last site.
///
/// Fails with [`Error::WindowTooSmall`] when the optimal path touches a
/// window edge that the cone could cross.
pub fn free_path_stats(env: &Environment, n: usize) -> Result<FreePathStats> {
    Ok(free_path_stats_multi(env, &[n])?.remove(0))
}

fn free_path_stats_multi(env: &Environment, ns: &[usize]) -> Result<Vec<FreePathStats>> {
    let pot = env.potential();
    let (lo, hi) = (env.x_min(), env.x_max() - 1);
    if lo > 0 || hi < 0 {
        return param("window must contain 0 and 1");
    }
    let runs = free_endpoint_paths(pot, lo, hi, ns, CHECKPOINT_SPACING)?;
    runs.into_iter()
        .map(|run| {
            let (a, b) = run.path.range();
            let reach = run.n as i64;
            if (a == lo && -reach < lo) || (b == hi && reach > hi) {
                return Err(Error::WindowTooSmall {
                    x_min: lo,
                    x_max: hi,
                    detail: format!("optimal path at n = {} reaches [{a}, {b}]", run.n),
                });
            }
            path_stats(pot, env.c(), &run.path, run.value, run.unique)
        })
        .collect()
}

/// Initial half-width `ceil(4 n^zeta)`.
pub fn initial_half_width(kappa: f64, n: usize) -> i64 {
    (4.0 * (n as f64).powf(zeta(kappa))).ceil() as i64
}

/// One replica over a horizon grid: the window starts at `4 n_max^zeta`
/// and doubles on boundary contact. Returns the stats and the final half
/// width.
pub fn replica_free_paths(params: &EnvParams, ns: &[usize], replica: u64) -> Result<(Vec<FreePathStats>, i64)> {
    let n_max = *ns.iter().max().ok_or_else(|| Error::Param("empty horizon grid".into()))?;
    let seed = derive_seed(params.seed(), TAG_FREEPATH, replica);
    let mut w = initial_half_width(params.kappa(), n_max).min(n_max as i64);
    loop {
        let p = params
            .clone()
            .with_seed(seed)
            .with_window(-w, w + 1)?
            .with_horizon(n_max)?;
        let env = Environment::sample(&p)?;
        match free_path_stats_multi(&env, ns) {
            Ok(stats) => return Ok((stats, w)),
            Err(Error::WindowTooSmall { .. }) => w = (2 * w).min(n_max as i64),
            Err(e) => return Err(e),
        }
    }
}

/// Per-replica free-path statistics on a horizon grid.
#[derive(Debug, Clone)]
pub struct FreePathRun {
    pub kappa: f64,
    pub c: f64,
    pub n_grid: Vec<usize>,
    /// `stats[r][j]` is replica `r` at horizon `n_grid[j]`.
    pub stats: Vec<Vec<FreePathStats>>,
    /// Windows that had to be enlarged.
    pub window_doublings: usize,
}

pub fn run_free_paths(params: &EnvParams, n_grid: &[usize], replicas: usize) -> Result<FreePathRun> {
    if n_grid.is_empty() || n_grid.contains(&0) {
        return param("horizon grid must be nonempty and positive");
    }
    let initial = initial_half_width(params.kappa(), *n_grid.iter().max().unwrap());
    let out: Vec<(Vec<FreePathStats>, i64)> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| replica_free_paths(params, n_grid, r))
        .collect::<Result<_>>()?;
    let window_doublings = out.iter().filter(|(_, w)| *w > initial).count();
    Ok(FreePathRun {
        kappa: params.kappa(),
        c: params.c(),
        n_grid: n_grid.to_vec(),
        stats: out.into_iter().map(|(s, _)| s).collect(),
        window_doublings,
    })
}

impl FreePathRun {
    pub fn column(&self, j: usize) -> impl Iterator<Item = &FreePathStats> + '_ {
        self.stats.iter().map(move |s| &s[j])
    }

    pub fn settled_fraction(&self, j: usize) -> f64 {
        self.column(j).filter(|s| s.settled).count() as f64 / self.stats.len() as f64
    }

    /// `c n + A` for every replica at horizon index `j`.
    pub fn excess(&self, j: usize) -> Vec<f64> {
        let n = self.n_grid[j] as f64;
        self.column(j).map(|s| self.c * n + s.action).collect()
    }

    /// Fraction of replicas where `c n + A >= n d_n / 5`.
    pub fn action_bound_fraction(&self, j: usize) -> f64 {
        let n = self.n_grid[j] as f64;
        self.column(j)
            .filter(|s| self.c * n + s.action >= 0.2 * n * s.d)
            .count() as f64
            / self.stats.len() as f64
    }

    /// CSV rows `n,replica,ell,d,tau,settled,action`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,replica,ell,d,tau,settled,action\n");
        for (j, &n) in self.n_grid.iter().enumerate() {
            for (r, st) in self.column(j).enumerate() {
                s.push_str(&format!(
                    "{n},{r},{},{:.12e},{},{},{:.12e}\n",
                    st.ell,
                    st.d,
                    st.tau,
                    u8::from(st.settled),
                    st.action
                ));
            }
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub zeta: f64,
    pub ell: SlopeFit,
    pub d: SlopeFit,
    pub action: SlopeFit,
    pub medians: Vec<(usize, f64, f64, f64)>,
}

/// Least-squares slope of `log median` against `log n`.
pub fn log_log_slope(ns: &[usize], medians: &[f64]) -> f64 {
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
    ols(&x, &y).slope
}

/// Slopes of `log median |l_n|`, `log median d_n` and `log median (c n + A)`
/// against `log n`, with 95% bootstrap intervals over replicas.
pub fn scaling_regression(run: &FreePathRun, bootstrap: usize, seed: u64) -> Result<ScalingReport> {
    let ns = &run.n_grid;
    if ns.len() < 2 {
        return param("scaling regression needs at least two horizons");
    }
    let (lo, hi) = (*ns.iter().min().unwrap() as f64, *ns.iter().max().unwrap() as f64);
    if (hi / lo).log10() < 1.5 {
        return param("horizon grid must span at least 1.5 decades");
    }
    let r = run.stats.len();
    let ell: Vec<Vec<f64>> = (0..ns.len())
        .map(|j| run.column(j).map(|s| s.ell.abs() as f64).collect())
        .collect();
    let d: Vec<Vec<f64>> = (0..ns.len()).map(|j| run.column(j).map(|s| s.d).collect()).collect();
    let ex: Vec<Vec<f64>> = (0..ns.len()).map(|j| run.excess(j)).collect();
    let fit = |cols: &Vec<Vec<f64>>, tag: u64| {
        let med: Vec<f64> = cols.iter().map(|c| median(c)).collect();
        let slope = log_log_slope(ns, &med);
        let ci = bootstrap_ci(r, bootstrap, 0.95, derive_seed(seed, tag, 0), |idx| {
            let med: Vec<f64> = cols
                .iter()
                .map(|c| median(&idx.iter().map(|&i| c[i]).collect::<Vec<_>>()))
                .collect();
            log_log_slope(ns, &med)
        });
        (SlopeFit { slope, ci }, med)
    };
    let (f_ell, m_ell) = fit(&ell, 1);
    let (f_d, m_d) = fit(&d, 2);
    let (f_a, m_a) = fit(&ex, 3);
    Ok(ScalingReport {
        zeta: zeta(run.kappa),
        ell: f_ell,
        d: f_d,
        action: f_a,
        medians: (0..ns.len()).map(|j| (ns[j], m_ell[j], m_d[j], m_a[j])).collect(),
    })
}

/// `h = (p_kappa q^2 2^(2k+2) / (s (k + 1)(2k + 3)))^(-1 / (2k + 3))`.
pub fn compute_h(params: &EnvParams, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return param(format!("s must be positive, got {s}"));
    }
    let k = params.kappa();
    let num = p_kappa(k)? * params.q().powi(2) * 2f64.powf(2.0 * k + 2.0);
    Ok((num / (s * (k + 1.0) * (2.0 * k + 3.0))).powf(-1.0 / (2.0 * k + 3.0)))
}

/// Limiting survival `exp(-t^(2 kappa + 3))` for `t >= 0`.
pub fn limit_survival(kappa: f64, t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else {
        (-t.powf(2.0 * kappa + 3.0)).exp()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QuantileZ {
    pub p: f64,
    /// `t` with limiting distribution function `p`.
    pub t: f64,
    pub empirical: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitLawReport {
    pub n: usize,
    pub replicas: usize,
    pub s: f64,
    pub h: f64,
    /// `h` at `s -+ 2 stderr` (lower `s` gives lower `h`).
    pub h_band: (f64, f64),
    pub ks: f64,
    /// KS distances at the two ends of the band.
    pub ks_band: (f64, f64),
    pub quantiles: Vec<QuantileZ>,
    /// `(M, fraction of replicas with tau_n < M |l_n|)`.
    pub assumption: Vec<(f64, f64)>,
}

/// Compares `(c n + A) / (h n^zeta)` with the limiting law. `s_stderr` sets
/// the reported band for `h`.
pub fn limit_law_test(params: &EnvParams, stats: &[FreePathStats], s: f64, s_stderr: f64) -> Result<LimitLawReport> {
    let n = stats.first().ok_or_else(|| Error::Param("no replicas".into()))?.n;
    if stats.iter().any(|st| st.n != n) {
        return param("all replicas must share the horizon");
    }
    let k = params.kappa();
    let nz = (n as f64).powf(zeta(k));
    let c = params.c();
    let excess: Vec<f64> = stats.iter().map(|st| c * n as f64 + st.action).collect();
    let law = |h: f64| {
        let t: Vec<f64> = excess.iter().map(|e| e / (h * nz)).collect();
        (ks_distance(&t, |x| 1.0 - limit_survival(k, x)), t)
    };
    let h = compute_h(params, s)?;
    let s_lo = (s - 2.0 * s_stderr).max(s * 1e-3);
    let h_band = (compute_h(params, s_lo)?, compute_h(params, s + 2.0 * s_stderr)?);
    let (ks, t) = law(h);
    let ks_band = (law(h_band.0).0, law(h_band.1).0);
    let r = t.len() as f64;
    let quantiles = [0.1, 0.25, 0.5, 0.75, 0.9]
        .iter()
        .map(|&p| {
            // 1 - exp(-t^e) = p
            let tq = (-(1.0 - p as f64).ln()).powf(1.0 / (2.0 * k + 3.0));
            let emp = t.iter().filter(|&&x| x <= tq).count() as f64 / r;
            QuantileZ {
                p,
                t: tq,
                empirical: emp,
                z: (emp - p) / (p * (1.0 - p) / r).sqrt(),
            }
        })
        .collect();
    let assumption = [2.0, 4.0, 8.0]
        .iter()
        .map(|&m| {
            let hit = stats
                .iter()
                .filter(|st| (st.tau as f64) < m * st.ell.abs() as f64)
                .count();
            (m, hit as f64 / r)
        })
        .collect();
    Ok(LimitLawReport {
        n,
        replicas: stats.len(),
        s,
        h,
        h_band,
        ks,
        ks_band,
        quantiles,
        assumption,
    })
}

/// `g(x, y) = s |x| + y / 2` at rescaled coordinates.
#[inline]
pub fn g_value(s: f64, n: usize, kappa: f64, x: i64, d: f64) -> f64 {
    let z = zeta(kappa);
    s * (x.abs() as f64) * (n as f64).powf(-z) + 0.5 * d * (n as f64).powf(1.0 - z)
}

/// Minimizer over the window's edges of `g(n^-zeta x, n^(1-zeta) d(x))`,
/// smallest `|x|` on ties. Fails if an edge outside the window could still
/// do better.
pub fn g_argmin(env: &Environment, n: usize, s: f64) -> Result<(i64, f64)> {
    if !(s > 0.0) {
        return param("s must be positive");
    }
    let pot = env.potential();
    let k = env.params().kappa();
    let (lo, hi) = (env.x_min(), env.x_max() - 1);
    let mut best = (0i64, f64::INFINITY);
    for x in lo..=hi {
        let g = g_value(s, n, k, x, discrepancy_at(pot, env.c(), x));
        if g < best.1 || (g == best.1 && x.abs() < best.0.abs()) {
            best = (x, g);
        }
    }
    let reach = (-lo).min(hi) + 1;
    if s * reach as f64 * (n as f64).powf(-zeta(k)) <= best.1 {
        return Err(Error::WindowTooSmall {
            x_min: lo,
            x_max: hi + 1,
            detail: "edges beyond the window could minimize g".into(),
        });
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{build_table, min_action_free};

    #[test]
    fn h_closed_form() {
        let p = EnvParams::edge_power(0.0, 1.0).unwrap();
        let h = compute_h(&p, 0.5).unwrap();
        assert!((h - (4.0f64 / 3.0).powf(-1.0 / 3.0)).abs() < 1e-14);
        let h8 = compute_h(&p, 4.0).unwrap();
        assert!((h8 / h - 8f64.powf(1.0 / 3.0)).abs() < 1e-12);
        assert!(compute_h(&p, 0.0).is_err());
        for k in [-0.9, -0.5, 0.0, 1.0, 3.0] {
            let p = EnvParams::edge_power(k, 1.0).unwrap();
            let h = compute_h(&p, 0.7).unwrap();
            assert!(h.is_finite() && h > 0.0);
        }
    }

    #[test]
    fn survival_values() {
        assert_eq!(limit_survival(0.0, 0.0), 1.0);
        assert!((limit_survival(0.0, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn exact_power_law_slope() {
        let ns = [1000, 10_000, 100_000];
        let m: Vec<f64> = ns.iter().map(|&n| 3.0 * (n as f64).powf(0.4)).collect();
        assert!((log_log_slope(&ns, &m) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn stats_match_full_table() {
        let p = EnvParams::edge_power(0.0, 1.0)
            .unwrap()
            .with_seed(21)
            .with_window(-150, 151)
            .unwrap()
            .with_horizon(150)
            .unwrap();
        let env = Environment::sample(&p).unwrap();
        let st = free_path_stats(&env, 150).unwrap();
        let pot = env.potential();
        let (v, k) = min_action_free(pot, 150).unwrap();
        assert_eq!(st.action, v);
        assert_eq!(st.endpoint, k);
        let table = build_table(pot, 150, (0, 0)).unwrap();
        let r = table.backtrack(pot, (150, k)).unwrap();
        let again = path_stats(pot, 1.0, &r.path, r.action, r.unique).unwrap();
        assert_eq!(again.ell, st.ell);
        assert_eq!(again.tau, st.tau);
        assert!(st.tau <= 150 && st.ell >= st.range.0 && st.ell <= st.range.1);
        assert!(st.action + 150.0 >= 0.0);
    }

    #[test]
    fn tiny_window_is_reported() {
        let p = EnvParams::edge_power(0.0, 1.0)
            .unwrap()
            .with_seed(1)
            .with_window(-1, 2)
            .unwrap()
            .with_horizon(400)
            .unwrap();
        let env = Environment::sample(&p).unwrap();
        // any path that ever leaves the origin touches the strip [-1, 1] edge
        assert!(matches!(
            free_path_stats(&env, 400),
            Err(Error::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn g_argmin_limits() {
        let p = EnvParams::edge_power(0.0, 1.0)
            .unwrap()
            .with_seed(4)
            .with_window(-300, 301)
            .unwrap();
        let env = Environment::sample(&p).unwrap();
        let (x, _) = g_argmin(&env, 1000, 1e6).unwrap();
        assert!(x == 0 || x == -1 || x == 1);
        assert!(g_argmin(&env, 1000, 1e-6).is_err());
    }
}
