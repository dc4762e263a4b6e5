//! Monte Carlo estimation of the shape function
//! `Lambda(alpha) = -lim A(n, [alpha n]) / n` and checks of its structure:
//! the bounds `c(1 - |alpha|) <= Lambda <= c - |alpha| (c - D)`, the corner
//! at zero, the flat edge, evenness and concavity.
//!
//! Each replica draws one environment and runs one full-cone DP up to the
//! largest horizon; every `(alpha, n)` cell of that replica is read from the
//! same sweep, so differences across `alpha` and `n` are paired.

use rayon::prelude::*;
use serde::Serialize;

use crate::dp::RowSweep;
use crate::env::{mean_abs_f, EnvParams, Environment};
use crate::error::{param, Error, Result};
use crate::rng::derive_seed;
use crate::stats::{mean_stderr, wls};

/// Seed-derivation tag for shape replicas.
pub const TAG_SHAPE: u64 = 0x5348_4150_45;

/// `{0, 0.02, ..., 0.2} u {0.25, 0.30, ..., 1.0}`.
pub fn default_alphas() -> Vec<f64> {
    let mut a: Vec<f64> = (0..=10).map(|i| f64::from(i) * 0.02).collect();
    a.extend((5..=20).map(|i| f64::from(i) * 0.05));
    a
}

/// `[alpha n]`, rounded toward zero. The small offset keeps grid values such
/// as `0.29 * 100` from landing one below the intended integer.
pub fn lattice_target(alpha: f64, n: usize) -> i64 {
    let v = alpha.abs() * n as f64;
    let k = (v + 1e-9 * v.max(1.0)).floor() as i64;
    k.min(n as i64) * if alpha < 0.0 { -1 } else { 1 }
}

#[derive(Debug, Clone)]
pub struct ShapeRun {
    pub alphas: Vec<f64>,
    pub n_ladder: Vec<usize>,
    pub replicas: usize,
    /// Maximum number of DP cell updates; `None` disables the guard.
    pub budget: Option<u128>,
}

impl ShapeRun {
    /// Cell updates needed: `replicas * n_max (n_max + 2)`.
    pub fn cost(&self) -> u128 {
        let n = self.n_ladder.iter().copied().max().unwrap_or(0) as u128;
        self.replicas as u128 * n * (n + 2)
    }
}

/// Per-replica samples of `-A(n, [+-alpha n]) / n` on a nonnegative grid.
#[derive(Debug, Clone)]
pub struct ShapeEstimate {
    pub kappa: f64,
    pub c: f64,
    /// `E|F|` of the sampled density.
    pub d: f64,
    pub seed: u64,
    pub alphas: Vec<f64>,
    pub n_values: Vec<usize>,
    replicas: usize,
    // index [(r * A + a) * N + n]
    plus: Vec<f64>,
    minus: Vec<f64>,
}

/// Runs the replicas and collects every `(alpha, n)` cell.
pub fn estimate_shape(params: &EnvParams, run: &ShapeRun) -> Result<ShapeEstimate> {
    if run.replicas < 2 {
        return param("at least two replicas are needed for error bars");
    }
    if run.n_ladder.is_empty() || run.n_ladder[0] == 0 {
        return param("horizon ladder must be nonempty and positive");
    }
    if run.n_ladder.windows(2).any(|w| w[0] >= w[1]) {
        return param("horizon ladder must be strictly increasing");
    }
    if run.alphas.iter().any(|a| !(a.abs() <= 1.0)) {
        return param("slopes must lie in [-1, 1]");
    }
    if let Some(budget) = run.budget {
        let needed = run.cost();
        if needed > budget {
            return Err(Error::Budget { needed, budget });
        }
    }
    let mut alphas: Vec<f64> = run.alphas.iter().map(|a| a.abs()).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let n_values = run.n_ladder.clone();
    let n_max = *n_values.last().unwrap();
    let reach = n_max as i64;

    let per_replica: Vec<(Vec<f64>, Vec<f64>)> = (0..run.replicas)
        .into_par_iter()
        .map(|r| -> Result<(Vec<f64>, Vec<f64>)> {
            let p = params
                .clone()
                .with_seed(derive_seed(params.seed(), TAG_SHAPE, r as u64))
                .with_window(-reach, reach)?
                .with_horizon(n_max)?;
            let env = Environment::sample(&p)?;
            let mut sweep = RowSweep::new(env.potential(), (0, 0), -reach, reach)?;
            let mut plus = vec![0.0; alphas.len() * n_values.len()];
            let mut minus = plus.clone();
            let mut next = 0;
            for t in 1..=n_max {
                sweep.step()?;
                if t == n_values[next] {
                    for (ai, &a) in alphas.iter().enumerate() {
                        let k = lattice_target(a, t);
                        plus[ai * n_values.len() + next] = -sweep.value(k) / t as f64;
                        minus[ai * n_values.len() + next] = -sweep.value(-k) / t as f64;
                    }
                    next += 1;
                }
            }
            Ok((plus, minus))
        })
        .collect::<Result<_>>()?;

    let mut plus = Vec::with_capacity(run.replicas * alphas.len() * n_values.len());
    let mut minus = Vec::with_capacity(plus.capacity());
    for (p, m) in per_replica {
        plus.extend(p);
        minus.extend(m);
    }
    Ok(ShapeEstimate {
        kappa: params.kappa(),
        c: params.c(),
        d: mean_abs_f(params),
        seed: params.seed(),
        alphas,
        n_values,
        replicas: run.replicas,
        plus,
        minus,
    })
}

/// Extends the ladder by doubling until `c - lambda_hat(0, n_max) < gap`
/// or the budget would be exceeded. Returns the estimate and whether the
/// target was met.
pub fn estimate_shape_until(params: &EnvParams, run: &ShapeRun, gap: f64) -> Result<(ShapeEstimate, bool)> {
    let mut run = run.clone();
    if !run.alphas.contains(&0.0) {
        run.alphas.push(0.0);
    }
    loop {
        let est = estimate_shape(params, &run)?;
        let last = est.n_values.len() - 1;
        if est.c - est.lambda_hat(0, last).0 < gap {
            return Ok((est, true));
        }
        let mut bigger = run.clone();
        bigger.n_ladder.push(2 * *run.n_ladder.last().unwrap());
        match bigger.budget {
            Some(b) if bigger.cost() > b => return Ok((est, false)),
            _ => run = bigger,
        }
    }
}

impl ShapeEstimate {
    pub fn replicas(&self) -> usize {
        self.replicas
    }

    #[inline]
    fn idx(&self, r: usize, a: usize, n: usize) -> usize {
        (r * self.alphas.len() + a) * self.n_values.len() + n
    }

    pub fn alpha_index(&self, alpha: f64) -> Option<usize> {
        self.alphas.iter().position(|&a| (a - alpha.abs()).abs() < 1e-12)
    }

    /// Symmetrized per-replica samples `(plus + minus) / 2`.
    fn sym_samples(&self, a: usize, n: usize) -> Vec<f64> {
        (0..self.replicas)
            .map(|r| {
                let i = self.idx(r, a, n);
                0.5 * (self.plus[i] + self.minus[i])
            })
            .collect()
    }

    /// Symmetrized estimate and standard error at grid cell `(a, n)`.
    pub fn lambda_hat(&self, a: usize, n: usize) -> (f64, f64) {
        mean_stderr(&self.sym_samples(a, n))
    }

    /// One-sided estimate at `+alpha` (`sign > 0`) or `-alpha`.
    pub fn one_sided(&self, a: usize, n: usize, sign: i8) -> (f64, f64) {
        let src = if sign > 0 { &self.plus } else { &self.minus };
        let xs: Vec<f64> = (0..self.replicas).map(|r| src[self.idx(r, a, n)]).collect();
        mean_stderr(&xs)
    }

    /// Curve at horizon index `n`, keeping replica pairing.
    pub fn curve(&self, n: usize) -> ShapeCurve {
        let samples = (0..self.replicas)
            .map(|r| {
                (0..self.alphas.len())
                    .map(|a| {
                        let i = self.idx(r, a, n);
                        0.5 * (self.plus[i] + self.minus[i])
                    })
                    .collect()
            })
            .collect();
        ShapeCurve::from_samples(self.alphas.clone(), samples)
    }

    /// Removes the leading finite-size correction `b n^exponent` using the
    /// horizons at indices `lo < hi`, replica by replica.
    pub fn extrapolated(&self, lo: usize, hi: usize, exponent: f64) -> Result<ShapeCurve> {
        if lo >= hi || hi >= self.n_values.len() {
            return param("extrapolation needs two distinct ladder indices lo < hi");
        }
        if exponent >= 0.0 {
            return param("correction exponent must be negative");
        }
        let ratio = (self.n_values[hi] as f64 / self.n_values[lo] as f64).powf(exponent);
        let (a_curve, b_curve) = (self.curve(lo), self.curve(hi));
        let samples = a_curve
            .samples
            .iter()
            .zip(&b_curve.samples)
            .map(|(s_lo, s_hi)| {
                s_lo.iter()
                    .zip(s_hi)
                    .map(|(l, h)| (h - ratio * l) / (1.0 - ratio))
                    .collect()
            })
            .collect();
        Ok(ShapeCurve::from_samples(self.alphas.clone(), samples))
    }

    /// Largest `|mean(plus - minus)| / stderr` per slope at horizon index `n`.
    pub fn evenness(&self, n: usize) -> Vec<EvennessRow> {
        (0..self.alphas.len())
            .filter(|&a| self.alphas[a] > 0.0)
            .map(|a| {
                let diffs: Vec<f64> = (0..self.replicas)
                    .map(|r| {
                        let i = self.idx(r, a, n);
                        self.plus[i] - self.minus[i]
                    })
                    .collect();
                let (diff, stderr) = mean_stderr(&diffs);
                EvennessRow {
                    alpha: self.alphas[a],
                    diff,
                    stderr,
                    ok: diff.abs() <= 3.0 * stderr,
                }
            })
            .collect()
    }

    /// Whether `lambda_hat(0, n)` increases along the ladder.
    pub fn origin_increasing(&self) -> Option<bool> {
        let a = self.alpha_index(0.0)?;
        let vals: Vec<f64> = (0..self.n_values.len()).map(|n| self.lambda_hat(a, n).0).collect();
        Some(vals.windows(2).all(|w| w[0] < w[1]))
    }

    /// CSV with columns `alpha,n,lambda_hat,stderr,replicas`, one row per
    /// signed slope and horizon.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,n,lambda_hat,stderr,replicas\n");
        let mut rows: Vec<(f64, usize, i8)> = Vec::new();
        for a in (0..self.alphas.len()).rev() {
            if self.alphas[a] > 0.0 {
                rows.push((-self.alphas[a], a, -1));
            }
        }
        for a in 0..self.alphas.len() {
            rows.push((self.alphas[a], a, 1));
        }
        for (alpha, a, sign) in rows {
            for (ni, n) in self.n_values.iter().enumerate() {
                let (m, se) = self.one_sided(a, ni, sign);
                s.push_str(&format!(
                    "{},{},{:.10},{:.10},{}\n",
                    fmt_alpha(alpha),
                    n,
                    m,
                    se,
                    self.replicas
                ));
            }
        }
        s
    }
}

fn fmt_alpha(a: f64) -> String {
    let s = format!("{a:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvennessRow {
    pub alpha: f64,
    pub diff: f64,
    pub stderr: f64,
    pub ok: bool,
}

/// `Lambda` estimates on a nonnegative slope grid, optionally with the
/// per-replica samples behind them.
#[derive(Debug, Clone)]
pub struct ShapeCurve {
    pub alphas: Vec<f64>,
    pub lambda: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `[replica][alpha]`; empty for tabulated curves.
    pub samples: Vec<Vec<f64>>,
}

impl ShapeCurve {
    pub fn from_samples(alphas: Vec<f64>, samples: Vec<Vec<f64>>) -> Self {
        let (lambda, stderr) = (0..alphas.len())
            .map(|a| mean_stderr(&samples.iter().map(|s| s[a]).collect::<Vec<_>>()))
            .unzip();
        Self {
            alphas,
            lambda,
            stderr,
            samples,
        }
    }

    pub fn from_table(alphas: Vec<f64>, lambda: Vec<f64>, stderr: Vec<f64>) -> Self {
        Self {
            alphas,
            lambda,
            stderr,
            samples: Vec::new(),
        }
    }

    pub fn index(&self, alpha: f64) -> Option<usize> {
        self.alphas.iter().position(|&a| (a - alpha).abs() < 1e-12)
    }

    /// Mean and standard error of `sum_j w_j lambda(alpha_j)`; paired over
    /// replicas when samples are available.
    pub fn functional(&self, terms: &[(usize, f64)]) -> (f64, f64) {
        if self.samples.is_empty() {
            let m = terms.iter().map(|&(j, w)| w * self.lambda[j]).sum();
            let v: f64 = terms.iter().map(|&(j, w)| (w * self.stderr[j]).powi(2)).sum();
            (m, v.sqrt())
        } else {
            let xs: Vec<f64> = self
                .samples
                .iter()
                .map(|s| terms.iter().map(|&(j, w)| w * s[j]).sum())
                .collect();
            mean_stderr(&xs)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub alpha: f64,
    pub lambda: f64,
    pub stderr: f64,
    pub lower: f64,
    pub upper: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

/// `c(1 - |alpha|) <= lambda <= c - |alpha| (c - D)`, each within 3 stderr.
pub fn check_bounds(curve: &ShapeCurve, c: f64, d: f64) -> Vec<BoundRow> {
    curve
        .alphas
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            let (l, se) = (curve.lambda[j], curve.stderr[j]);
            let lower = c * (1.0 - a);
            let upper = c - a * (c - d);
            BoundRow {
                alpha: a,
                lambda: l,
                stderr: se,
                lower,
                upper,
                lower_ok: l >= lower - 3.0 * se,
                upper_ok: l <= upper + 3.0 * se,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CornerReport {
    pub rows: Vec<BoundRow>,
    pub passed: bool,
    pub right_slope: Option<SlopeEstimate>,
}

/// Upper bound from the corner lemma, `lambda <= c - |alpha| (c - D)`, and
/// the right slope at zero.
pub fn check_corner(curve: &ShapeCurve, params: &EnvParams) -> CornerReport {
    let rows = check_bounds(curve, params.c(), mean_abs_f(params));
    let passed = rows.iter().all(|r| r.upper_ok);
    CornerReport {
        rows,
        passed,
        right_slope: estimate_s(curve, params.c(), 0.2).ok(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginRow {
    pub alpha: f64,
    pub margin: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NonlinearityReport {
    pub rows: Vec<MarginRow>,
    /// Interior slopes with `margin < -3 stderr`.
    pub failures: Vec<f64>,
}

impl NonlinearityReport {
    pub fn row(&self, alpha: f64) -> Option<&MarginRow> {
        self.rows.iter().find(|r| (r.alpha - alpha).abs() < 1e-12)
    }
}

/// Margins `lambda - c(1 - |alpha|)` at interior slopes `0 < alpha < 1`.
pub fn check_nonlinearity(curve: &ShapeCurve, c: f64) -> NonlinearityReport {
    let rows: Vec<MarginRow> = curve
        .alphas
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0 && a < 1.0)
        .map(|(j, &a)| MarginRow {
            alpha: a,
            margin: curve.lambda[j] - c * (1.0 - a),
            stderr: curve.stderr[j],
        })
        .collect();
    let failures = rows
        .iter()
        .filter(|r| r.margin < -3.0 * r.stderr)
        .map(|r| r.alpha)
        .collect();
    NonlinearityReport { rows, failures }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlatEdge {
    /// Largest grid slope up to which the line `c - K alpha` fits.
    pub alpha0_hat: f64,
    /// `(c - lambda(alpha0)) / alpha0`.
    pub k_hat: f64,
    /// Fewer than two positive slopes fit the line.
    pub inconclusive: bool,
    /// `(alpha, residual, tolerance)` for the accepted fit.
    pub residuals: Vec<(f64, f64, f64)>,
}

/// Fits `c - K alpha` through `(0, c)` by least squares over the smallest
/// slopes, adding grid points while every residual stays below
/// `max(2 stderr, 1e-3 c)`.
pub fn detect_flat_edge(curve: &ShapeCurve, c: f64) -> FlatEdge {
    let tol = |j: usize| (2.0 * curve.stderr[j]).max(1e-3 * c);
    let zero = curve.index(0.0);
    let positive: Vec<usize> = (0..curve.alphas.len()).filter(|&j| curve.alphas[j] > 0.0).collect();
    let mut accepted: Option<(usize, f64, Vec<(f64, f64, f64)>)> = None;
    if zero.is_none_or(|z| (curve.lambda[z] - c).abs() < tol(z)) {
        for m in 1..=positive.len() {
            let pts = &positive[..m];
            let sxx: f64 = pts.iter().map(|&j| curve.alphas[j].powi(2)).sum();
            let sxy: f64 = pts
                .iter()
                .map(|&j| curve.alphas[j] * (c - curve.lambda[j]))
                .sum();
            let k = sxy / sxx;
            let mut residuals: Vec<(f64, f64, f64)> = zero
                .map(|z| (0.0, curve.lambda[z] - c, tol(z)))
                .into_iter()
                .collect();
            residuals.extend(pts.iter().map(|&j| {
                let a = curve.alphas[j];
                (a, curve.lambda[j] - (c - k * a), tol(j))
            }));
            if residuals.iter().all(|(_, r, t)| r.abs() < *t) {
                accepted = Some((pts[m - 1], k, residuals));
            } else {
                break;
            }
        }
    }
    match accepted {
        Some((j, _, residuals)) => {
            let a0 = curve.alphas[j];
            let points = residuals.iter().filter(|r| r.0 > 0.0).count();
            FlatEdge {
                alpha0_hat: a0,
                k_hat: (c - curve.lambda[j]) / a0,
                inconclusive: points < 2,
                residuals,
            }
        }
        None => FlatEdge {
            alpha0_hat: 0.0,
            k_hat: f64::NAN,
            inconclusive: true,
            residuals: Vec::new(),
        },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeEstimate {
    pub s: f64,
    pub stderr: f64,
    /// `s > 0`, as the theory requires.
    pub consistent: bool,
}

/// `s = -Lambda'(0+)`.
///
/// Chord slopes `S(alpha) = (c - lambda(alpha)) / alpha` are extrapolated
/// linearly to `alpha = 0` by weighted least squares over
/// `0 < alpha <= alpha_max` (with two points this is the classical
/// Richardson step `2 S(h) - S(2h)`). Needs at least three such slopes.
pub fn estimate_s(curve: &ShapeCurve, c: f64, alpha_max: f64) -> Result<SlopeEstimate> {
    let pts: Vec<usize> = (0..curve.alphas.len())
        .filter(|&j| curve.alphas[j] > 0.0 && curve.alphas[j] <= alpha_max + 1e-12)
        .collect();
    if pts.len() < 3 {
        return param("slope estimate needs at least three small positive slopes");
    }
    let xs: Vec<f64> = pts.iter().map(|&j| curve.alphas[j]).collect();
    let w: Vec<f64> = pts
        .iter()
        .map(|&j| {
            let se = curve.stderr[j] / curve.alphas[j];
            if se > 0.0 && se.is_finite() {
                1.0 / (se * se)
            } else {
                1.0
            }
        })
        .collect();
    // the intercept is linear in the data, so it maps to a functional
    let sw: f64 = w.iter().sum();
    let mx = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&w).map(|(x, w)| w * (x - mx).powi(2)).sum();
    let coef: Vec<f64> = xs
        .iter()
        .zip(&w)
        .map(|(x, w)| w / sw - mx * w * (x - mx) / sxx)
        .collect();
    // intercept = sum coef_j S_j,  S_j = (c - lambda_j) / alpha_j
    let offset: f64 = coef.iter().zip(&xs).map(|(k, x)| k * c / x).sum();
    let terms: Vec<(usize, f64)> = pts
        .iter()
        .zip(coef.iter().zip(&xs))
        .map(|(&j, (k, x))| (j, -k / x))
        .collect();
    let (part, stderr) = curve.functional(&terms);
    let s = offset + part;
    debug_assert!({
        let ys: Vec<f64> = pts.iter().map(|&j| (c - curve.lambda[j]) / curve.alphas[j]).collect();
        (wls(&xs, &ys, &w).0 - s).abs() < 1e-9 * s.abs().max(1.0)
    });
    Ok(SlopeEstimate {
        s,
        stderr,
        consistent: s > 0.0,
    })
}

/// `M (c - lambda(1 / M))` at each positive grid slope, with errors.
pub fn chord_slopes(curve: &ShapeCurve, c: f64) -> Vec<(f64, f64, f64)> {
    (0..curve.alphas.len())
        .filter(|&j| curve.alphas[j] > 0.0)
        .map(|j| {
            let a = curve.alphas[j];
            ((1.0 / a), (c - curve.lambda[j]) / a, curve.stderr[j] / a)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcavityRow {
    pub alpha: f64,
    /// Divided second difference.
    pub second: f64,
    pub stderr: f64,
    pub ok: bool,
}

/// Discrete concavity of the even extension, at every grid point including
/// zero: second divided differences must not exceed 3 stderr.
pub fn check_concavity(curve: &ShapeCurve) -> Vec<ConcavityRow> {
    let m = curve.alphas.len();
    let mut rows = Vec::new();
    for j in 0..m {
        let a = curve.alphas[j];
        let (left, right) = if a == 0.0 {
            // mirror: lambda(-alpha_1) = lambda(alpha_1)
            if j + 1 >= m {
                continue;
            }
            ((j + 1, -curve.alphas[j + 1]), (j + 1, curve.alphas[j + 1]))
        } else if j == 0 || j + 1 >= m {
            continue;
        } else {
            ((j - 1, curve.alphas[j - 1]), (j + 1, curve.alphas[j + 1]))
        };
        let (h1, h2) = (a - left.1, right.1 - a);
        let w_l = 2.0 / (h1 * (h1 + h2));
        let w_r = 2.0 / (h2 * (h1 + h2));
        let w_c = -2.0 / (h1 * h2);
        let terms = if left.0 == right.0 {
            vec![(left.0, w_l + w_r), (j, w_c)]
        } else {
            vec![(left.0, w_l), (j, w_c), (right.0, w_r)]
        };
        let (second, stderr) = curve.functional(&terms);
        rows.push(ConcavityRow {
            alpha: a,
            second,
            stderr,
            ok: second <= 3.0 * stderr,
        });
    }
    rows
}
