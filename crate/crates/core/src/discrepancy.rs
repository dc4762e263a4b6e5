//! Edge discrepancies `d(x) = 2c - |f(x + 1) - f(x)|`, their small-value
//! law, the rescaled point cloud `{(n^-zeta x, n^(1 - zeta) d(x))}` and its
//! Poisson limit, the modified discrepancy `d*` and record edges.

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::env::{sample_f, EnvParams, Environment};
use crate::error::{param, range, Result};
use crate::rng::{derive_seed, StreamReader, STREAM_AUX};
use crate::stats::{correlation, mean_stderr, variance};

pub const TAG_POISSON: u64 = 0x504f_4953;
pub const TAG_DCDF: u64 = 0x4443_4446;

/// `d` on the edges `x_min ..= x_max - 1` of an environment window.
#[derive(Debug, Clone)]
pub struct DiscrepancyField {
    pub x_min: i64,
    pub d: Vec<f64>,
}

impl DiscrepancyField {
    /// Last edge with a value.
    pub fn x_max(&self) -> i64 {
        self.x_min + self.d.len() as i64 - 1
    }

    pub fn get(&self, x: i64) -> Option<f64> {
        let i = x - self.x_min;
        (i >= 0).then(|| self.d.get(i as usize).copied()).flatten()
    }
}

pub fn discrepancy_field(env: &Environment) -> Result<DiscrepancyField> {
    let f = env.field();
    if f.len() < 2 {
        return param("discrepancy needs at least two sites");
    }
    let c2 = 2.0 * env.c();
    Ok(DiscrepancyField {
        x_min: env.x_min(),
        d: f.windows(2).map(|w| c2 - (w[1] - w[0]).abs()).collect(),
    })
}

/// `p_kappa = 2 B(kappa + 1, kappa + 1)`.
pub fn p_kappa(kappa: f64) -> Result<f64> {
    if !(kappa > -1.0) {
        return param(format!("kappa must exceed -1, got {kappa}"));
    }
    Ok(2.0 * (2.0 * ln_gamma(kappa + 1.0) - ln_gamma(2.0 * kappa + 2.0)).exp())
}

/// `zeta = (2 kappa + 2) / (2 kappa + 3)`.
pub fn zeta(kappa: f64) -> f64 {
    (2.0 * kappa + 2.0) / (2.0 * kappa + 3.0)
}

/// `(2 kappa + 2)(zeta - 1) + zeta`, zero up to rounding.
pub fn zeta_identity_residual(kappa: f64) -> f64 {
    (2.0 * kappa + 2.0) * (zeta(kappa) - 1.0) + zeta(kappa)
}

/// `lim P(d(0) <= u) / u^(2 kappa + 2) = p_kappa q^2 / (2 kappa + 2)`.
pub fn small_discrepancy_constant(params: &EnvParams) -> f64 {
    let k = params.kappa();
    p_kappa(k).expect("validated kappa") * params.q().powi(2) / (2.0 * k + 2.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct CdfRow {
    pub u: f64,
    pub hits: u64,
    pub ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `ratio / limit - 1`.
    pub rel_err: f64,
    /// Fewer than 100 hits: the interval is wide.
    pub low_count: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CdfReport {
    pub samples: u64,
    pub limit: f64,
    pub rows: Vec<CdfRow>,
    /// `|rel_err|` decreases as `u` decreases.
    pub converging: bool,
}

/// Monte Carlo `P(d(0) <= u) / u^(2 kappa + 2)` on a grid of `u`, with 95%
/// normal-approximation intervals.
pub fn small_discrepancy_cdf_check(params: &EnvParams, u_grid: &[f64], samples: u64) -> Result<CdfReport> {
    let c = params.c();
    if u_grid.is_empty() || u_grid.iter().any(|&u| !(u > 0.0 && u <= 0.25 * c)) {
        return param("u grid must lie in (0, c/4]");
    }
    if samples == 0 {
        return param("need at least one sample");
    }
    const CHUNK: u64 = 1 << 20;
    let chunks = samples.div_ceil(CHUNK);
    let seed = derive_seed(params.seed(), TAG_DCDF, 0);
    let hits = (0..chunks)
        .into_par_iter()
        .map(|ch| {
            let len = CHUNK.min(samples - ch * CHUNK);
            let mut r = StreamReader::new(seed, STREAM_AUX, 2 * ch * CHUNK);
            let mut h = vec![0u64; u_grid.len()];
            for _ in 0..len {
                let a = sample_f(params, r.open01());
                let b = sample_f(params, r.open01());
                let d = 2.0 * c - (b - a).abs();
                for (k, &u) in u_grid.iter().enumerate() {
                    h[k] += u64::from(d <= u);
                }
            }
            h
        })
        .reduce(
            || vec![0u64; u_grid.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let limit = small_discrepancy_constant(params);
    let power = 2.0 * params.kappa() + 2.0;
    let n = samples as f64;
    let rows: Vec<CdfRow> = u_grid
        .iter()
        .zip(&hits)
        .map(|(&u, &h)| {
            let p = h as f64 / n;
            let half = 1.96 * (p * (1.0 - p) / n).sqrt();
            let scale = u.powf(power);
            CdfRow {
                u,
                hits: h,
                ratio: p / scale,
                ci_low: (p - half).max(0.0) / scale,
                ci_high: (p + half) / scale,
                rel_err: p / scale / limit - 1.0,
                low_count: h < 100,
            }
        })
        .collect();
    let mut by_u: Vec<&CdfRow> = rows.iter().collect();
    by_u.sort_by(|a, b| b.u.total_cmp(&a.u));
    let converging = by_u
        .windows(2)
        .all(|w| w[1].rel_err.abs() <= w[0].rel_err.abs() + (w[1].ci_high - w[1].ci_low) / limit);
    Ok(CdfReport {
        samples,
        limit,
        rows,
        converging,
    })
}

/// Points `(n^-zeta x, n^(1 - zeta) d(x))` for every edge of the window.
#[derive(Debug, Clone)]
pub struct RescaledPointCloud {
    pub n: usize,
    pub zeta: f64,
    pub points: Vec<(f64, f64)>,
}

/// Rescales the discrepancy field of `env`; the window must cover
/// `[-a n^zeta, a n^zeta]` for the requested view half-width `a`.
pub fn rescale_cloud(env: &Environment, n: usize, view: f64) -> Result<RescaledPointCloud> {
    let z = zeta(env.params().kappa());
    let nz = (n as f64).powf(z);
    let need = (view * nz).ceil() as i64;
    if env.x_min() > -need || env.x_max() < need + 1 {
        return range(format!(
            "window [{}, {}] does not cover the view [-{need}, {need}]",
            env.x_min(),
            env.x_max()
        ));
    }
    let field = discrepancy_field(env)?;
    let sx = nz.recip();
    let sy = (n as f64).powf(1.0 - z);
    let points = field
        .d
        .iter()
        .enumerate()
        .map(|(i, &d)| ((field.x_min + i as i64) as f64 * sx, d * sy))
        .collect();
    Ok(RescaledPointCloud { n, zeta: z, points })
}

/// Half-open rectangle `[a1, a2) x [b1, b2)` in rescaled coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rectangle {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
}

impl Rectangle {
    pub fn new(a1: f64, a2: f64, b1: f64, b2: f64) -> Result<Self> {
        if !(a1 < a2) || !(0.0 <= b1 && b1 <= b2) {
            return param(format!("bad rectangle [{a1}, {a2}) x [{b1}, {b2})"));
        }
        Ok(Self { a1, a2, b1, b2 })
    }

    #[inline]
    pub fn contains(&self, (x, y): (f64, f64)) -> bool {
        x >= self.a1 && x < self.a2 && y >= self.b1 && y < self.b2
    }

    /// Mean of the limiting process, `q^2 p_kappa (a2 - a1)
    /// (b2^(2k+2) - b1^(2k+2)) / (2k + 2)`.
    pub fn intensity(&self, params: &EnvParams) -> f64 {
        let e = 2.0 * params.kappa() + 2.0;
        small_discrepancy_constant(params) * (self.a2 - self.a1) * (self.b2.powf(e) - self.b1.powf(e))
    }
}

/// Six rectangles with limiting means `0.5, 2, 1.5, 0.24, 2.5, 4.32`.
///
/// The `x` extents are fixed; the `y` extents are set from the intensity of
/// the given parameters so the means do not depend on `kappa` or `c`.
pub fn default_rectangles(params: &EnvParams) -> Vec<Rectangle> {
    let e = 2.0 * params.kappa() + 2.0;
    let k = small_discrepancy_constant(params);
    // (a1, a2, mass below b1, target mean); mass below b1 uses the same
    // normalization as the target
    let design = [
        (-1.0, 1.0, 0.0, 0.5),
        (0.0, 2.0, 0.0, 2.0),
        (-2.0, 0.0, 0.5, 1.5),
        (-3.0, 3.0, 0.0, 0.24),
        (-1.0, 1.0, 2.0, 2.5),
        (-4.0, 4.0, 0.18, 4.32),
    ];
    design
        .iter()
        .map(|&(a1, a2, below, mean)| {
            let w = a2 - a1;
            let b1 = (below / (k * w)).powf(1.0 / e);
            let b2 = ((below + mean) / (k * w)).powf(1.0 / e);
            Rectangle { a1, a2, b1, b2 }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RectangleStats {
    pub rectangle: [f64; 4],
    pub lambda: f64,
    pub mean: f64,
    pub var: f64,
    pub avoid_emp: f64,
    pub avoid_theory: f64,
    /// `(mean - lambda) / sqrt(lambda / replicas)`.
    pub z: f64,
}

impl RectangleStats {
    pub fn var_ratio(&self) -> f64 {
        self.var / self.mean
    }

    /// Binomial standard deviation of the empirical avoidance frequency.
    pub fn avoid_sigma(&self, replicas: usize) -> f64 {
        (self.avoid_theory * (1.0 - self.avoid_theory) / replicas as f64).sqrt()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PoissonComparison {
    pub n: usize,
    pub replicas: usize,
    pub rows: Vec<RectangleStats>,
    /// `counts[r][j]`: points of replica `r` in rectangle `j`.
    #[serde(skip)]
    pub counts: Vec<Vec<u32>>,
}

impl PoissonComparison {
    /// Correlation across replicas of the counts in rectangles `i` and `j`.
    pub fn count_correlation(&self, i: usize, j: usize) -> f64 {
        let x: Vec<f64> = self.counts.iter().map(|c| f64::from(c[i])).collect();
        let y: Vec<f64> = self.counts.iter().map(|c| f64::from(c[j])).collect();
        correlation(&x, &y)
    }
}

fn cloud_window(params: &EnvParams, n: usize, rects: &[Rectangle]) -> (i64, i64) {
    let nz = (n as f64).powf(zeta(params.kappa()));
    let a_lo = rects.iter().map(|r| r.a1).fold(0.0, f64::min);
    let a_hi = rects.iter().map(|r| r.a2).fold(0.0, f64::max);
    ((a_lo * nz).floor() as i64 - 1, (a_hi * nz).ceil() as i64 + 1)
}

fn replica_env(params: &EnvParams, tag: u64, r: usize, window: (i64, i64)) -> Result<Environment> {
    let p = params
        .clone()
        .with_seed(derive_seed(params.seed(), tag, r as u64))
        .with_window(window.0, window.1)?
        .with_horizon(1)?;
    Environment::sample(&p)
}

/// Empirical counts of the rescaled cloud in each rectangle over
/// independent fields, compared with the Poisson limit.
pub fn poisson_compare(
    params: &EnvParams,
    n: usize,
    rects: &[Rectangle],
    replicas: usize,
) -> Result<PoissonComparison> {
    if replicas < 2 || n == 0 {
        return param("need n >= 1 and at least two replicas");
    }
    let window = cloud_window(params, n, rects);
    let counts: Vec<Vec<u32>> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<u32>> {
            let env = replica_env(params, TAG_POISSON, r, window)?;
            let cloud = rescale_cloud(&env, n, 0.0)?;
            let mut c = vec![0u32; rects.len()];
            for &pt in &cloud.points {
                for (j, rect) in rects.iter().enumerate() {
                    c[j] += u32::from(rect.contains(pt));
                }
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let rows = rects
        .iter()
        .enumerate()
        .map(|(j, rect)| {
            let xs: Vec<f64> = counts.iter().map(|c| f64::from(c[j])).collect();
            let (mean, _) = mean_stderr(&xs);
            let lambda = rect.intensity(params);
            let zeros = xs.iter().filter(|&&v| v == 0.0).count();
            RectangleStats {
                rectangle: [rect.a1, rect.a2, rect.b1, rect.b2],
                lambda,
                mean,
                var: variance(&xs),
                avoid_emp: zeros as f64 / replicas as f64,
                avoid_theory: (-lambda).exp(),
                z: if lambda > 0.0 {
                    (mean - lambda) / (lambda / replicas as f64).sqrt()
                } else {
                    0.0
                },
            }
        })
        .collect();
    Ok(PoissonComparison {
        n,
        replicas,
        rows,
        counts,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparationRow {
    pub delta: f64,
    /// Fraction of replicas where some strip `(-a, a) x (y - delta,
    /// y + delta)` inside `(-a, a) x (0, b)` holds two or more points.
    pub crowded: f64,
}

/// Separation diagnostic for the cloud in `(-a, a) x (0, b)`.
pub fn separation_check(
    params: &EnvParams,
    n: usize,
    a: f64,
    b: f64,
    deltas: &[f64],
    replicas: usize,
) -> Result<Vec<SeparationRow>> {
    let rect = Rectangle::new(-a, a, 0.0, b)?;
    let window = cloud_window(params, n, &[rect]);
    let ys: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let env = replica_env(params, TAG_POISSON ^ 0x5e9, r, window)?;
            let cloud = rescale_cloud(&env, n, 0.0)?;
            let mut ys: Vec<f64> = cloud
                .points
                .iter()
                .filter(|&&(x, y)| x > -a && x < a && y > 0.0 && y < b)
                .map(|p| p.1)
                .collect();
            ys.sort_by(f64::total_cmp);
            Ok(ys)
        })
        .collect::<Result<_>>()?;
    Ok(deltas
        .iter()
        .map(|&delta| {
            let crowded = ys
                .iter()
                .filter(|ys| {
                    ys.windows(2).any(|w| {
                        // some centre y in [delta, b - delta] with both points inside
                        let lo = (w[1] - delta).max(delta);
                        let hi = (w[0] + delta).min(b - delta);
                        lo < hi
                    })
                })
                .count();
            SeparationRow {
                delta,
                crowded: crowded as f64 / replicas as f64,
            }
        })
        .collect())
}

/// Pooled correlation between the indicators `Z_k = 1{n^(1-zeta) d(k) in
/// [b1, b2)}` and `Z_(k + lag)` over the sites of `[-a n^zeta, a n^zeta)`.
/// Returns the correlation and the number of pairs.
pub fn lag_correlation(
    params: &EnvParams,
    n: usize,
    a: f64,
    band: (f64, f64),
    lag: usize,
    replicas: usize,
) -> Result<(f64, usize)> {
    let rect = Rectangle::new(-a, a, band.0, band.1)?;
    let window = cloud_window(params, n, &[rect]);
    let window = (window.0, window.1 + lag as i64);
    // sums: pairs, sum x, sum y, sum xy, sum x^2 (= sum x), sum y^2
    let sums = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<[f64; 5]> {
            let env = replica_env(params, TAG_POISSON ^ 0x1a6, r, window)?;
            let cloud = rescale_cloud(&env, n, 0.0)?;
            let z: Vec<f64> = cloud
                .points
                .iter()
                .map(|&(_, y)| f64::from(u8::from(y >= band.0 && y < band.1)))
                .collect();
            let mut s = [0.0; 5];
            let first = cloud.points.iter().position(|p| p.0 >= -a).unwrap_or(0);
            let mut k = first;
            while k + lag < z.len() && cloud.points[k].0 < a {
                s[0] += 1.0;
                s[1] += z[k];
                s[2] += z[k + lag];
                s[3] += z[k] * z[k + lag];
                s[4] += z[k + lag] * z[k + lag];
                k += 1;
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold([0.0; 5], |mut acc, s| {
            acc.iter_mut().zip(s).for_each(|(a, b)| *a += b);
            acc
        });
    let [m, sx, sy, sxy, syy] = sums;
    let cov = sxy / m - (sx / m) * (sy / m);
    let vx = sx / m - (sx / m).powi(2);
    let vy = syy / m - (sy / m).powi(2);
    Ok((cov / (vx * vy).sqrt(), m as usize))
}

/// `d*(x) = 2c - f(x) + min(f(x - 1), f(x), f(x + 1))`.
pub fn modified_discrepancy(env: &Environment, x: i64) -> Result<f64> {
    if !env.contains(x - 1) || !env.contains(x + 1) {
        return range(format!("d* at {x} needs sites {} and {}", x - 1, x + 1));
    }
    Ok(modified_discrepancy_of(env.field(), env.x_min(), env.c(), x))
}

/// `d*` on an explicit field slice (`field[j] = f(x_min + j)`).
#[inline]
pub fn modified_discrepancy_of(field: &[f64], x_min: i64, c: f64, x: i64) -> f64 {
    let i = (x - x_min) as usize;
    let m = field[i - 1].min(field[i]).min(field[i + 1]);
    2.0 * c - field[i] + m
}

/// `2 kappa^-2 (1 + kappa)^-2 h^(2 (kappa + 1))`, the tail bound for `d*`
/// under `rho(u) <= kappa^-1 (c - u)^kappa` with `kappa > 0`.
pub fn modified_discrepancy_tail_bound(kappa: f64, h: f64) -> f64 {
    2.0 / (kappa * kappa * (1.0 + kappa) * (1.0 + kappa)) * h.powf(2.0 * (kappa + 1.0))
}

/// Running minima of `d` over `x = 0, 1, ...`: `(x_i, d_i)` with
/// `d_i < d(x)` for all `0 <= x < x_i`.
pub fn record_edges(env: &Environment) -> Result<Vec<(i64, f64)>> {
    if env.x_min() > 0 || env.x_max() < 1 {
        return param("record edges need a window starting at or before 0 and reaching 1");
    }
    let field = discrepancy_field(env)?;
    let mut out: Vec<(i64, f64)> = Vec::new();
    for x in 0..=field.x_max() {
        let d = field.get(x).unwrap();
        if out.last().is_none_or(|&(_, best)| d < best) {
            out.push((x, d));
        }
    }
    Ok(out)
}
