//! Lazy walks, their actions, and the explicit paths used in the bounds:
//! edge-stay paths `eta_x`, ballistic approaches, and the detour walk that
//! beats the ballistic action away from slope zero.

use serde::{Deserialize, Serialize};

use crate::env::{cdf, EnvParams, Potential};
use crate::error::{param, range, Error, Result};

/// Integer path with steps in `{-1, 0, 1}`, stored by absolute time.
///
/// `positions[j]` is `gamma(start_time + j)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PathRepr", into = "PathRepr")]
pub struct LazyPath {
    start_time: usize,
    positions: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
struct PathRepr {
    t0: usize,
    x: Vec<i64>,
}

impl TryFrom<PathRepr> for LazyPath {
    type Error = Error;
    fn try_from(r: PathRepr) -> Result<Self> {
        LazyPath::new(r.t0, r.x)
    }
}

impl From<LazyPath> for PathRepr {
    fn from(p: LazyPath) -> Self {
        PathRepr {
            t0: p.start_time,
            x: p.positions,
        }
    }
}

impl LazyPath {
    pub fn new(start_time: usize, positions: Vec<i64>) -> Result<Self> {
        if positions.is_empty() {
            return param("a path needs at least its starting position");
        }
        if let Some(w) = positions.windows(2).find(|w| (w[1] - w[0]).abs() > 1) {
            return param(format!("non-lazy step {} -> {}", w[0], w[1]));
        }
        Ok(Self {
            start_time,
            positions,
        })
    }

    /// Builds a path from its start and a sequence of steps in `{-1, 0, 1}`.
    pub fn from_steps(start_time: usize, start: i64, steps: &[i8]) -> Result<Self> {
        let mut positions = Vec::with_capacity(steps.len() + 1);
        positions.push(start);
        let mut x = start;
        for &s in steps {
            if !(-1..=1).contains(&s) {
                return param(format!("step {s} is not lazy"));
            }
            x += i64::from(s);
            positions.push(x);
        }
        Ok(Self {
            start_time,
            positions,
        })
    }

    pub(crate) fn from_positions_unchecked(start_time: usize, positions: Vec<i64>) -> Self {
        debug_assert!(positions.windows(2).all(|w| (w[1] - w[0]).abs() <= 1));
        Self {
            start_time,
            positions,
        }
    }

    pub fn start_time(&self) -> usize {
        self.start_time
    }
    pub fn end_time(&self) -> usize {
        self.start_time + self.positions.len() - 1
    }
    /// Number of steps `t2 - t1`.
    pub fn len(&self) -> usize {
        self.positions.len() - 1
    }
    pub fn is_empty(&self) -> bool {
        self.positions.len() == 1
    }
    pub fn positions(&self) -> &[i64] {
        &self.positions
    }
    pub fn start(&self) -> i64 {
        self.positions[0]
    }
    pub fn end(&self) -> i64 {
        *self.positions.last().unwrap()
    }

    /// Position at absolute time `t`, if the path is defined there.
    pub fn at(&self, t: usize) -> Option<i64> {
        t.checked_sub(self.start_time)
            .and_then(|j| self.positions.get(j).copied())
    }

    /// `(min, max)` of the visited sites.
    pub fn range(&self) -> (i64, i64) {
        let lo = *self.positions.iter().min().unwrap();
        let hi = *self.positions.iter().max().unwrap();
        (lo, hi)
    }

    /// Iterator over `(t, gamma(t))`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, i64)> + '_ {
        self.positions
            .iter()
            .enumerate()
            .map(move |(j, &x)| (self.start_time + j, x))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x\n");
        for (t, x) in self.iter() {
            s.push_str(&format!("{t},{x}\n"));
        }
        s
    }

    /// Parses the `t,x` format written by [`LazyPath::to_csv`]. Times must be
    /// consecutive.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut start = None;
        let mut positions = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line == "t,x" {
                continue;
            }
            let (t, x) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected t,x", lineno + 1)))?;
            let t: usize = t
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad time", lineno + 1)))?;
            let x: i64 = x
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad site", lineno + 1)))?;
            let t0 = *start.get_or_insert(t);
            if t != t0 + positions.len() {
                return Err(Error::Parse(format!("line {}: times not consecutive", lineno + 1)));
            }
            positions.push(x);
        }
        let t0 = start.ok_or_else(|| Error::Parse("empty path".into()))?;
        Self::new(t0, positions)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("path serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// `sum_{i = t1 + 1}^{t2} b(i) f(gamma(i))`; the starting position does not
/// contribute.
pub fn action(pot: Potential<'_>, path: &LazyPath) -> Result<f64> {
    if path.end_time() > pot.horizon() {
        return range(format!(
            "path ends at time {} beyond horizon {}",
            path.end_time(),
            pot.horizon()
        ));
    }
    let (lo, hi) = path.range();
    if !pot.contains(lo) || !pot.contains(hi) {
        return range(format!(
            "path range [{lo}, {hi}] leaves window [{}, {}]",
            pot.x_min(),
            pot.x_max()
        ));
    }
    Ok(path
        .iter()
        .skip(1)
        .map(|(t, x)| pot.weight(t, x))
        .sum())
}

/// `d(x) = 2c - |f(x + 1) - f(x)|`.
#[inline]
pub fn discrepancy_at(pot: Potential<'_>, c: f64, x: i64) -> f64 {
    2.0 * c - (pot.f(x + 1) - pot.f(x)).abs()
}

/// Edge-stay path on `{x, x + 1}` following the pointwise best endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeStayPath {
    pub x: i64,
    pub path: LazyPath,
}

/// `eta_x` on `(a, b]`, started at `x` at time `a`.
///
/// At each time the endpoint with the smaller `b(t) f(.)` is chosen; the
/// tie `f(x) = f(x + 1)` goes to `x`.
pub fn eta_path(pot: Potential<'_>, x: i64, a: usize, b: usize) -> Result<EdgeStayPath> {
    if a >= b {
        return param(format!("eta path needs a < b, got a = {a}, b = {b}"));
    }
    if b > pot.horizon() {
        return range(format!("time {b} beyond horizon {}", pot.horizon()));
    }
    if !pot.contains(x) || !pot.contains(x + 1) {
        return range(format!("edge {{{x}, {}}} outside the window", x + 1));
    }
    let mut positions = Vec::with_capacity(b - a + 1);
    positions.push(x);
    positions.extend((a + 1..=b).map(|t| eta_choice(pot, x, t)));
    Ok(EdgeStayPath {
        x,
        path: LazyPath::from_positions_unchecked(a, positions),
    })
}

#[inline]
fn eta_choice(pot: Potential<'_>, x: i64, t: usize) -> i64 {
    let (f0, f1) = (pot.f(x), pot.f(x + 1));
    let plus = pot.b(t) > 0;
    if (f0 <= f1 && plus) || (f0 >= f1 && !plus) {
        x
    } else {
        x + 1
    }
}

/// Closed form of the `eta_x` action on `(a, b]`,
/// `len (d/2 - c) + (n_+ - len/2)(f(x) + f(x + 1))`.
///
/// Evaluated as `n_+ min f - n_- max f`, which is the same number without
/// the cancellation between the two terms.
pub fn eta_action_closed_form(pot: Potential<'_>, c: f64, x: i64, a: usize, b: usize) -> f64 {
    let len = (b - a) as f64;
    let np = n_plus(pot, a, b) as f64;
    let (f0, f1) = (pot.f(x), pot.f(x + 1));
    let value = np * f0.min(f1) - (len - np) * f0.max(f1);
    debug_assert!({
        let d_form = len * (0.5 * discrepancy_at(pot, c, x) - c) + (np - 0.5 * len) * (f0 + f1);
        (d_form - value).abs() <= 1e-9 * (len * (c + f0.abs() + f1.abs())).max(1.0)
    });
    value
}

/// Number of `+1` signs among `b(a + 1), ..., b(b)`.
pub fn n_plus(pot: Potential<'_>, a: usize, b: usize) -> usize {
    if b <= a {
        return 0;
    }
    pot.signs()[a..b].iter().filter(|&&s| s > 0).count()
}

/// Moves straight to `x` in `|x|` steps, then follows `eta_x` up to time `n`.
pub fn ballistic_then_edge(pot: Potential<'_>, x: i64, n: usize) -> Result<LazyPath> {
    if x.unsigned_abs() as usize >= n {
        return param(format!("|x| = {} must be below n = {n}", x.abs()));
    }
    let k = x.unsigned_abs() as usize;
    let step = x.signum();
    let mut positions: Vec<i64> = (0..=k as i64).map(|j| j * step).collect();
    let eta = eta_path(pot, x, k, n)?;
    positions.extend_from_slice(&eta.path.positions()[1..]);
    Ok(LazyPath::from_positions_unchecked(0, positions))
}

/// Walk from 0 to `n` that waits one step at `i - 1` before entering `i`
/// when `f(i - 1) < -3c/4`, `f(i) > 3c/4` and the next sign is `+1`.
///
/// Returns the walk and its duration.
pub fn nonlinearity_walk(pot: Potential<'_>, c: f64, n: i64) -> Result<(LazyPath, usize)> {
    if n < 0 || !pot.contains(0) || !pot.contains(n) {
        return range(format!("sites 0..={n} must lie in the window"));
    }
    if pot.horizon() < 2 * n as usize {
        return range(format!("horizon {} below 2n = {}", pot.horizon(), 2 * n));
    }
    let mut positions = vec![0i64];
    let mut t = 0usize;
    for i in 1..=n {
        if pot.f(i - 1) < -0.75 * c && pot.f(i) > 0.75 * c && pot.b(t + 1) == 1 {
            positions.push(i - 1);
            positions.push(i);
            t += 2;
        } else {
            positions.push(i);
            t += 1;
        }
    }
    Ok((LazyPath::from_positions_unchecked(0, positions), t))
}

/// Probability that a given site pair triggers the detour in
/// [`nonlinearity_walk`]: `P(F < -3c/4) P(F > 3c/4)`.
pub fn detour_probability(params: &EnvParams) -> f64 {
    let c = params.c();
    cdf(params, -0.75 * c) * (1.0 - cdf(params, 0.75 * c))
}

/// Lower bound on the action of `path` from the smallest discrepancy on its
/// range: `-c (t2 - t1) + sum over even i in (t1, t2) of
/// 1{b(i) != b(i + 1)} min_{x in range} d(x)`.
pub fn min_discrepancy_action_bound(pot: Potential<'_>, c: f64, path: &LazyPath) -> Result<f64> {
    let (t1, t2) = (path.start_time(), path.end_time());
    if t2 > pot.horizon() {
        return range(format!("time {t2} beyond horizon {}", pot.horizon()));
    }
    let (lo, hi) = path.range();
    if !pot.contains(lo) || !pot.contains(hi + 1) {
        return range("discrepancy on the path range needs the window to cover it".to_string());
    }
    let dmin = (lo..=hi)
        .map(|x| discrepancy_at(pot, c, x))
        .fold(f64::INFINITY, f64::min);
    let first_even = (t1 + 1).next_multiple_of(2);
    let changes = (first_even..t2)
        .step_by(2)
        .filter(|&i| pot.b(i) != pot.b(i + 1))
        .count();
    Ok(-c * (t2 - t1) as f64 + changes as f64 * dmin)
}
