//! Exact minimal actions over lazy walks by dynamic programming.
//!
//! `A(t, x) = min_{x' in {x-1, x, x+1}} A(t-1, x') + b(t) f(x)`, rooted at an
//! origin `(t0, x0)` with `A(t0, x0) = 0`. Unreachable cells hold `+inf`.
//!
//! Three storage modes are provided: a rolling row ([`RowSweep`]), a full
//! triangular table ([`ActionTable`]) and a checkpointed sweep that recovers
//! optimal paths at several horizons from one forward pass
//! ([`free_endpoint_paths`]).

use std::io::{Read, Write};

use crate::env::Potential;
use crate::error::{param, range, Error, Result};
use crate::paths::LazyPath;

/// Relaxes one row: `next[i] = min(prev[i], prev[i + 1], prev[i + 2]) + w[i]`.
///
/// `prev` is offset one site to the left of `next`. Written so that the loop
/// vectorizes.
#[inline]
fn relax(prev: &[f64], next: &mut [f64], w: &[f64]) {
    let m = next.len();
    let (p0, p1, p2) = (&prev[..m], &prev[1..m + 1], &prev[2..m + 2]);
    let w = &w[..m];
    for i in 0..m {
        let a = p0[i];
        let b = p1[i];
        let c = p2[i];
        let ab = if a < b { a } else { b };
        let abc = if ab < c { ab } else { c };
        next[i] = abc + w[i];
    }
}

/// Per-time weights `b(t) f(x)` for both signs, restricted to `[lo, hi]`.
struct Weights {
    pos: Vec<f64>,
    neg: Vec<f64>,
}

impl Weights {
    fn new(pot: Potential<'_>, lo: i64, hi: i64) -> Self {
        let a = (lo - pot.x_min()) as usize;
        let b = (hi - pot.x_min()) as usize;
        let pos = pot.field()[a..=b].to_vec();
        let neg = pos.iter().map(|v| -v).collect();
        Self { pos, neg }
    }

    #[inline]
    fn for_sign(&self, s: i8) -> &[f64] {
        if s > 0 {
            &self.pos
        } else {
            &self.neg
        }
    }
}

/// Rolling-row DP rooted at `(t0, x0)` and confined to sites `[lo, hi]`.
///
/// Paths leaving `[lo, hi]` are excluded, so values agree with the
/// unconstrained minimum only while the cone fits inside the strip.
pub struct RowSweep<'a> {
    pot: Potential<'a>,
    t0: usize,
    x0: i64,
    lo: i64,
    hi: i64,
    t: usize,
    weights: Weights,
    // padded: index = x - lo + 1; entries 0 and len - 1 stay +inf
    cur: Vec<f64>,
    next: Vec<f64>,
    active: (i64, i64),
    cells: u64,
}

impl<'a> RowSweep<'a> {
    pub fn new(pot: Potential<'a>, origin: (usize, i64), lo: i64, hi: i64) -> Result<Self> {
        let (t0, x0) = origin;
        if lo > hi || !pot.contains(lo) || !pot.contains(hi) {
            return range(format!(
                "strip [{lo}, {hi}] not inside window [{}, {}]",
                pot.x_min(),
                pot.x_max()
            ));
        }
        if x0 < lo || x0 > hi {
            return param(format!("origin site {x0} outside strip [{lo}, {hi}]"));
        }
        if t0 > pot.horizon() {
            return range(format!("origin time {t0} beyond horizon {}", pot.horizon()));
        }
        let width = (hi - lo + 3) as usize;
        let mut cur = vec![f64::INFINITY; width];
        cur[(x0 - lo + 1) as usize] = 0.0;
        Ok(Self {
            pot,
            t0,
            x0,
            lo,
            hi,
            t: t0,
            weights: Weights::new(pot, lo, hi),
            cur,
            next: vec![f64::INFINITY; width],
            active: (x0, x0),
            cells: 0,
        })
    }

    /// Restarts from an explicit row at time `t` covering `[a, a + len)`.
    fn from_row(pot: Potential<'a>, t: usize, lo: i64, hi: i64, a: i64, row: &[f64]) -> Self {
        let width = (hi - lo + 3) as usize;
        let mut cur = vec![f64::INFINITY; width];
        let off = (a - lo + 1) as usize;
        cur[off..off + row.len()].copy_from_slice(row);
        let b = a + row.len() as i64 - 1;
        Self {
            pot,
            t0: t,
            x0: a,
            lo,
            hi,
            t,
            weights: Weights::new(pot, lo, hi),
            cur,
            next: vec![f64::INFINITY; width],
            active: (a, b),
            cells: 0,
        }
    }

    pub fn time(&self) -> usize {
        self.t
    }
    pub fn origin(&self) -> (usize, i64) {
        (self.t0, self.x0)
    }
    pub fn strip(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }
    /// Sites that may hold finite values at the current time.
    pub fn active(&self) -> (i64, i64) {
        self.active
    }
    /// Cells relaxed so far.
    pub fn cells(&self) -> u64 {
        self.cells
    }

    /// Advances one time step. Fails past the horizon.
    pub fn step(&mut self) -> Result<()> {
        self.step_within(self.lo, self.hi)
    }

    /// Advances one step computing only sites in `[a, b]` (clipped to the
    /// reachable range); other sites of the new row are left stale, so
    /// callers must only read inside the ranges they requested.
    fn step_within(&mut self, a: i64, b: i64) -> Result<()> {
        let t = self.t + 1;
        if t > self.pot.horizon() {
            return range(format!("time {t} beyond horizon {}", self.pot.horizon()));
        }
        let a = a.max(self.active.0 - 1).max(self.lo);
        let b = b.min(self.active.1 + 1).min(self.hi);
        if a <= b {
            let i0 = (a - self.lo) as usize;
            let i1 = (b - self.lo) as usize;
            let w = &self.weights.for_sign(self.pot.b(t))[i0..=i1];
            relax(&self.cur[i0..=i1 + 2], &mut self.next[i0 + 1..=i1 + 1], w);
            // the next step may read up to two sites beyond [a, b]; stale
            // values from earlier rows must not leak in
            let len = self.next.len();
            for i in [i0.wrapping_sub(1), i0, i1 + 2, i1 + 3] {
                if i < len {
                    self.next[i] = f64::INFINITY;
                }
            }
            self.cells += (b - a + 1) as u64;
        }
        std::mem::swap(&mut self.cur, &mut self.next);
        self.active = (a, b);
        self.t = t;
        Ok(())
    }

    /// `A(t, x)` at the current time; `+inf` outside the active range.
    #[inline]
    pub fn value(&self, x: i64) -> f64 {
        if x < self.active.0 || x > self.active.1 {
            f64::INFINITY
        } else {
            self.cur[(x - self.lo + 1) as usize]
        }
    }

    /// Current row over [`RowSweep::active`].
    pub fn row(&self) -> &[f64] {
        let a = (self.active.0 - self.lo + 1) as usize;
        let b = (self.active.1 - self.lo + 1) as usize;
        &self.cur[a..=b]
    }

    /// Free-endpoint minimum of the current row with the smallest-`|k|`,
    /// then negative-first tie-break.
    pub fn argmin(&self) -> (f64, i64) {
        let (a, _) = self.active;
        let mut best = (f64::INFINITY, i64::MAX);
        for (j, &v) in self.row().iter().enumerate() {
            let x = a + j as i64;
            if v < best.0 || (v == best.0 && prefer_endpoint(x - self.x0, best.1 - self.x0)) {
                best = (v, x);
            }
        }
        best
    }
}

/// Whether displacement `k` beats `other` under the endpoint tie-break.
#[inline]
fn prefer_endpoint(k: i64, other: i64) -> bool {
    (k.abs(), k > 0) < (other.abs(), other > 0)
}

/// Source of DP values for backtracking.
trait Rows {
    fn value(&self, t: usize, x: i64) -> f64;
}

/// Follows argmin predecessors from `(t_end, x_end)` back to `t_start`,
/// preferring stay, then left, then right. Positions are pushed in reverse.
fn backtrack_into<R: Rows>(
    rows: &R,
    pot: Potential<'_>,
    t_start: usize,
    t_end: usize,
    x_end: i64,
    rev: &mut Vec<i64>,
    unique: &mut bool,
) -> i64 {
    let mut x = x_end;
    for t in (t_start + 1..=t_end).rev() {
        let target = rows.value(t, x) - pot.weight(t, x);
        let cands = [x, x - 1, x + 1];
        let vals = cands.map(|y| rows.value(t - 1, y));
        let mut k = 0;
        for j in 1..3 {
            if vals[j] < vals[k] {
                k = j;
            }
        }
        if vals.iter().filter(|&&v| v == vals[k]).count() > 1 {
            *unique = false;
        }
        debug_assert!(vals[k] == target || (vals[k] - target).abs() <= 1e-9 * target.abs().max(1.0));
        x = cands[k];
        rev.push(x);
    }
    x
}

/// Full triangular table `A(t, x)` for `t0 <= t <= t0 + n`, `|x - x0| <= t - t0`.
#[derive(Debug, Clone)]
pub struct ActionTable {
    t0: usize,
    x0: i64,
    n: usize,
    // row j holds x0 - j ..= x0 + j
    rows: Vec<Vec<f64>>,
}

/// Result of a backtrack: one optimal path and whether ties were met.
#[derive(Debug, Clone)]
pub struct OptimalPathResult {
    pub path: LazyPath,
    pub action: f64,
    pub unique: bool,
}

/// Builds the full table from `origin` over `n` steps. The whole cone must
/// lie inside the window.
pub fn build_table(pot: Potential<'_>, n: usize, origin: (usize, i64)) -> Result<ActionTable> {
    let (t0, x0) = origin;
    let reach = n as i64;
    if !pot.contains(x0 - reach) || !pot.contains(x0 + reach) {
        return range(format!(
            "cone [{}, {}] does not fit window [{}, {}]",
            x0 - reach,
            x0 + reach,
            pot.x_min(),
            pot.x_max()
        ));
    }
    if t0 + n > pot.horizon() {
        return range(format!("time {} beyond horizon {}", t0 + n, pot.horizon()));
    }
    let mut sweep = RowSweep::new(pot, origin, x0 - reach, x0 + reach)?;
    let mut rows = Vec::with_capacity(n + 1);
    rows.push(vec![0.0]);
    for _ in 0..n {
        sweep.step()?;
        rows.push(sweep.row().to_vec());
    }
    Ok(ActionTable { t0, x0, n, rows })
}

impl Rows for ActionTable {
    fn value(&self, t: usize, x: i64) -> f64 {
        self.get(t, x)
    }
}

impl ActionTable {
    pub fn origin(&self) -> (usize, i64) {
        (self.t0, self.x0)
    }
    pub fn horizon(&self) -> usize {
        self.n
    }

    /// `A(t, x)` at absolute time `t`; `+inf` outside the cone.
    pub fn get(&self, t: usize, x: i64) -> f64 {
        if t < self.t0 || t > self.t0 + self.n {
            return f64::INFINITY;
        }
        let j = t - self.t0;
        let d = x - self.x0;
        if d.unsigned_abs() as usize > j {
            return f64::INFINITY;
        }
        self.rows[j][(d + j as i64) as usize]
    }

    /// Row at relative time `j`, covering `x0 - j ..= x0 + j`.
    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j]
    }

    /// Recovers one optimal path from the origin to `endpoint`.
    pub fn backtrack(&self, pot: Potential<'_>, endpoint: (usize, i64)) -> Result<OptimalPathResult> {
        let (t, x) = endpoint;
        let value = self.get(t, x);
        if !value.is_finite() {
            return range(format!("endpoint ({t}, {x}) is not reachable from the origin"));
        }
        let mut rev = vec![x];
        let mut unique = true;
        backtrack_into(self, pot, self.t0, t, x, &mut rev, &mut unique);
        rev.reverse();
        Ok(OptimalPathResult {
            path: LazyPath::from_positions_unchecked(self.t0, rev),
            action: value,
            unique,
        })
    }

    /// Writes the table as little-endian binary: 8-byte magic `LPPTABLE`,
    /// `n` as u64, then rows `t = 0..=n` of length `2t + 1` as f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(TABLE_MAGIC)?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        for row in &self.rows {
            for v in row {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a dump written by [`ActionTable::write_binary`]; the origin is
    /// not stored and is set to `(0, 0)`.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 16];
        r.read_exact(&mut head)
            .map_err(|e| Error::Parse(format!("table header: {e}")))?;
        if &head[..8] != TABLE_MAGIC {
            return Err(Error::Parse("bad table magic".into()));
        }
        let n = u64::from_le_bytes(head[8..].try_into().unwrap()) as usize;
        let mut rows = Vec::with_capacity(n + 1);
        let mut buf = [0u8; 8];
        for j in 0..=n {
            let mut row = Vec::with_capacity(2 * j + 1);
            for _ in 0..2 * j + 1 {
                r.read_exact(&mut buf)
                    .map_err(|e| Error::Parse(format!("table body: {e}")))?;
                row.push(f64::from_le_bytes(buf));
            }
            rows.push(row);
        }
        Ok(Self {
            t0: 0,
            x0: 0,
            n,
            rows,
        })
    }
}

pub const TABLE_MAGIC: &[u8; 8] = b"LPPTABLE";

fn check_cone(pot: Potential<'_>, n: usize) -> Result<()> {
    let r = n as i64;
    if !pot.contains(-r) || !pot.contains(r) {
        return range(format!(
            "cone [-{n}, {n}] does not fit window [{}, {}]",
            pot.x_min(),
            pot.x_max()
        ));
    }
    if n > pot.horizon() {
        return range(format!("n = {n} beyond horizon {}", pot.horizon()));
    }
    Ok(())
}

fn sweep_to(pot: Potential<'_>, n: usize) -> Result<RowSweep<'_>> {
    check_cone(pot, n)?;
    let r = n as i64;
    let mut sweep = RowSweep::new(pot, (0, 0), -r, r)?;
    for _ in 0..n {
        sweep.step()?;
    }
    Ok(sweep)
}

/// `A(n, k)`: minimal action from `(0, 0)` to `(n, k)`.
pub fn min_action_point(pot: Potential<'_>, n: usize, k: i64) -> Result<f64> {
    if k.unsigned_abs() as usize > n {
        return param(format!("|k| = {} exceeds n = {n}", k.abs()));
    }
    Ok(sweep_to(pot, n)?.value(k))
}

/// `min_k A(n, k)` and its argmin (smallest `|k|`, then negative, on ties).
pub fn min_action_free(pot: Potential<'_>, n: usize) -> Result<(f64, i64)> {
    if n == 0 {
        return param("n must be at least 1");
    }
    Ok(sweep_to(pot, n)?.argmin())
}

/// Row `A(n, .)` over `-n..=n`.
pub fn action_row(pot: Potential<'_>, n: usize) -> Result<Vec<f64>> {
    Ok(sweep_to(pot, n)?.row().to_vec())
}

/// Minimal action over lazy walks from `(t1, x1)` to `(t2, x2)`.
pub fn two_point_action(pot: Potential<'_>, from: (usize, i64), to: (usize, i64)) -> Result<f64> {
    let ((t1, x1), (t2, x2)) = (from, to);
    if t2 < t1 || ((x2 - x1).unsigned_abs() as usize) > t2 - t1 {
        return param(format!("({t2}, {x2}) is not reachable from ({t1}, {x1})"));
    }
    let span = (t2 - t1) as i64;
    // every walk between the two points stays in this range
    let lo = (x1 + x2 - span).div_euclid(2) + i64::from((x1 + x2 - span).rem_euclid(2) != 0);
    let hi = (x1 + x2 + span).div_euclid(2);
    if !pot.contains(lo) || !pot.contains(hi) {
        return range(format!("walks may reach [{lo}, {hi}], outside the window"));
    }
    if t2 > pot.horizon() {
        return range(format!("time {t2} beyond horizon {}", pot.horizon()));
    }
    let mut sweep = RowSweep::new(pot, from, lo, hi)?;
    for t in t1 + 1..=t2 {
        // only sites that can still reach x2 matter
        let left = (t2 - t) as i64;
        sweep.step_within(x2 - left, x2 + left)?;
    }
    Ok(sweep.value(x2))
}

/// One optimal path from `(0, 0)` to `(n, k)`.
pub fn optimal_path_point(pot: Potential<'_>, n: usize, k: i64) -> Result<OptimalPathResult> {
    if k.unsigned_abs() as usize > n {
        return param(format!("|k| = {} exceeds n = {n}", k.abs()));
    }
    check_cone(pot, n)?;
    build_table(pot, n, (0, 0))?.backtrack(pot, (n, k))
}

/// Endpoint constraint for [`brute_force_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Free,
    Fixed(i64),
}

pub const BRUTE_FORCE_LIMIT: usize = 14;

/// Minimal action by enumerating all `3^n` lazy walks from `(0, 0)`.
pub fn brute_force_oracle(pot: Potential<'_>, n: usize, end: Endpoint) -> Result<f64> {
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::Guard {
            n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    if n == 0 {
        return Ok(match end {
            Endpoint::Free | Endpoint::Fixed(0) => 0.0,
            Endpoint::Fixed(_) => f64::INFINITY,
        });
    }
    check_cone(pot, n)?;
    fn go(pot: Potential<'_>, n: usize, end: Endpoint, t: usize, x: i64, acc: f64, best: &mut f64) {
        if t == n {
            if end == Endpoint::Free || end == Endpoint::Fixed(x) {
                *best = best.min(acc);
            }
            return;
        }
        for y in [x - 1, x, x + 1] {
            go(pot, n, end, t + 1, y, acc + pot.weight(t + 1, y), best);
        }
    }
    let mut best = f64::INFINITY;
    go(pot, n, end, 0, 0, 0.0, &mut best);
    Ok(best)
}

/// Optimal free-endpoint path at one horizon of a checkpointed sweep.
#[derive(Debug, Clone)]
pub struct FreeEndpointRun {
    pub n: usize,
    pub value: f64,
    pub endpoint: i64,
    pub path: LazyPath,
    pub unique: bool,
}

struct Checkpoint {
    t: usize,
    start: i64,
    row: Vec<f64>,
}

/// Rows recomputed inside a backward light cone, for segment backtracking.
struct Diamond {
    t_base: usize,
    // rows[j] covers starts[j] ..
    starts: Vec<i64>,
    rows: Vec<Vec<f64>>,
}

impl Rows for Diamond {
    fn value(&self, t: usize, x: i64) -> f64 {
        let j = t - self.t_base;
        let row = &self.rows[j];
        let i = x - self.starts[j];
        if i < 0 || i as usize >= row.len() {
            f64::INFINITY
        } else {
            row[i as usize]
        }
    }
}

/// Free-endpoint optimal paths from `(0, 0)` at every horizon in `ns`, with
/// walks confined to `[lo, hi]`.
///
/// One forward pass stores a checkpoint row every `spacing` steps; each path
/// is then recovered segment by segment, recomputing only the backward cone
/// of the current endpoint. Results agree exactly with a full table.
pub fn free_endpoint_paths(
    pot: Potential<'_>,
    lo: i64,
    hi: i64,
    ns: &[usize],
    spacing: usize,
) -> Result<Vec<FreeEndpointRun>> {
    if spacing == 0 {
        return param("checkpoint spacing must be positive");
    }
    let Some(&n_max) = ns.iter().max() else {
        return Ok(Vec::new());
    };
    if ns.contains(&0) {
        return param("horizons must be at least 1");
    }
    let mut sweep = RowSweep::new(pot, (0, 0), lo, hi)?;
    let mut checkpoints = vec![Checkpoint {
        t: 0,
        start: 0,
        row: vec![0.0],
    }];
    let mut ends = Vec::new();
    for t in 1..=n_max {
        sweep.step()?;
        if t % spacing == 0 {
            checkpoints.push(Checkpoint {
                t,
                start: sweep.active().0,
                row: sweep.row().to_vec(),
            });
        }
        if ns.contains(&t) {
            ends.push((t, sweep.argmin()));
        }
    }
    let mut out = Vec::with_capacity(ns.len());
    for &n in ns {
        let &(_, (value, endpoint)) = ends.iter().find(|(t, _)| *t == n).unwrap();
        let mut rev = vec![endpoint];
        let mut unique = true;
        let mut t_end = n;
        let mut x = endpoint;
        while t_end > 0 {
            let cp = checkpoints
                .iter()
                .rev()
                .find(|c| c.t < t_end)
                .expect("checkpoint at time zero");
            let diamond = recompute_cone(pot, lo, hi, cp, t_end, x);
            x = backtrack_into(&diamond, pot, cp.t, t_end, x, &mut rev, &mut unique);
            t_end = cp.t;
        }
        rev.reverse();
        out.push(FreeEndpointRun {
            n,
            value,
            endpoint,
            path: LazyPath::from_positions_unchecked(0, rev),
            unique,
        });
    }
    Ok(out)
}

/// Rows `cp.t ..= t_end` restricted to the backward cone of `(t_end, x_end)`.
fn recompute_cone(
    pot: Potential<'_>,
    lo: i64,
    hi: i64,
    cp: &Checkpoint,
    t_end: usize,
    x_end: i64,
) -> Diamond {
    let span = (t_end - cp.t) as i64;
    let cone = |j: i64| ((x_end - (span - j)).max(lo), (x_end + (span - j)).min(hi));
    let (a0, b0) = cone(0);
    let row0: Vec<f64> = (a0..=b0)
        .map(|x| {
            let i = x - cp.start;
            if i < 0 || i as usize >= cp.row.len() {
                f64::INFINITY
            } else {
                cp.row[i as usize]
            }
        })
        .collect();
    let mut sweep = RowSweep::from_row(pot, cp.t, lo, hi, a0, &row0);
    let mut starts = vec![a0];
    let mut rows = vec![row0];
    for j in 1..=span {
        let (a, b) = cone(j);
        sweep.step_within(a, b).expect("segment lies within the forward pass");
        starts.push(a);
        rows.push((a..=b).map(|x| sweep.value(x)).collect());
    }
    Diamond {
        t_base: cp.t,
        starts,
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvParams, Environment};
    use crate::paths::action;

    fn env(seed: u64, kappa: f64, half: i64, horizon: usize) -> Environment {
        let p = EnvParams::edge_power(kappa, 1.0)
            .unwrap()
            .with_seed(seed)
            .with_window(-half, half)
            .unwrap()
            .with_horizon(horizon)
            .unwrap();
        Environment::sample(&p).unwrap()
    }

    #[test]
    fn relax_kernel() {
        let prev = [f64::INFINITY, 1.0, 0.0, 2.0, f64::INFINITY];
        let mut next = [0.0; 3];
        relax(&prev, &mut next, &[1.0, 1.0, 1.0]);
        assert_eq!(next, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn one_step_table() {
        let e = env(2, 0.0, 3, 3);
        let pot = e.potential();
        let table = build_table(pot, 1, (0, 0)).unwrap();
        for x in -1..=1 {
            assert_eq!(table.get(1, x), pot.weight(1, x));
        }
        assert_eq!(table.get(1, 2), f64::INFINITY);
    }

    #[test]
    fn maximal_slope_is_a_plain_sum() {
        let e = env(3, 1.0, 20, 20);
        let pot = e.potential();
        let direct: f64 = (1..=20).map(|i| pot.weight(i, i as i64)).sum();
        assert_eq!(min_action_point(pot, 20, 20).unwrap(), direct);
        let r = optimal_path_point(pot, 20, 20).unwrap();
        assert_eq!(r.path.positions(), (0..=20).collect::<Vec<i64>>().as_slice());
    }

    #[test]
    fn matches_brute_force_small() {
        for seed in 0..20 {
            let e = env(seed, 0.0, 8, 8);
            let pot = e.potential();
            let row = action_row(pot, 8).unwrap();
            for k in -8..=8i64 {
                let bf = brute_force_oracle(pot, 8, Endpoint::Fixed(k)).unwrap();
                assert_eq!(row[(k + 8) as usize], bf);
            }
            let (v, _) = min_action_free(pot, 8).unwrap();
            assert_eq!(v, brute_force_oracle(pot, 8, Endpoint::Free).unwrap());
        }
    }

    #[test]
    fn guard_and_errors() {
        let e = env(1, 0.0, 20, 20);
        let pot = e.potential();
        assert!(matches!(
            brute_force_oracle(pot, 15, Endpoint::Free),
            Err(Error::Guard { .. })
        ));
        assert_eq!(brute_force_oracle(pot, 0, Endpoint::Free).unwrap(), 0.0);
        assert!(min_action_point(pot, 5, 6).is_err());
        assert!(min_action_point(pot, 21, 0).is_err());
        assert!(two_point_action(pot, (0, 0), (3, 4)).is_err());
        let table = build_table(pot, 5, (0, 0)).unwrap();
        assert!(table.backtrack(pot, (5, 6)).is_err());
    }

    #[test]
    fn backtracked_action_matches_value() {
        let e = env(5, -0.5, 60, 60);
        let pot = e.potential();
        let table = build_table(pot, 60, (0, 0)).unwrap();
        for k in [-60, -13, 0, 7, 59] {
            let r = table.backtrack(pot, (60, k)).unwrap();
            assert_eq!(r.path.end(), k);
            assert_eq!(action(pot, &r.path).unwrap(), r.action);
        }
    }

    #[test]
    fn two_point_matches_table() {
        let e = env(8, 0.0, 40, 40);
        let pot = e.potential();
        let table = build_table(pot, 15, (10, 3)).unwrap();
        for x in [-12, -1, 3, 9, 18] {
            assert_eq!(two_point_action(pot, (10, 3), (25, x)).unwrap(), table.get(25, x));
        }
    }

    #[test]
    fn checkpointed_paths_match_full_table() {
        let e = env(11, 0.0, 80, 300);
        let pot = e.potential();
        let runs = free_endpoint_paths(pot, -80, 80, &[37, 150, 300], 16).unwrap();
        for run in runs {
            let table = build_table(pot, run.n.min(80), (0, 0));
            if run.n <= 80 {
                let table = table.unwrap();
                let reference = table.backtrack(pot, (run.n, run.endpoint)).unwrap();
                assert_eq!(reference.path, run.path);
            }
            assert_eq!(action(pot, &run.path).unwrap(), run.value);
            assert_eq!(run.path.len(), run.n);
        }
    }

    #[test]
    fn checkpointed_paths_match_backtrack_in_clipped_window() {
        // compare against a full sweep that keeps every row
        let e = env(12, 1.0, 30, 200);
        let pot = e.potential();
        let runs = free_endpoint_paths(pot, -30, 30, &[200], 7).unwrap();
        let mut sweep = RowSweep::new(pot, (0, 0), -30, 30).unwrap();
        let mut starts = vec![0];
        let mut rows = vec![vec![0.0]];
        for _ in 0..200 {
            sweep.step().unwrap();
            starts.push(sweep.active().0);
            rows.push(sweep.row().to_vec());
        }
        let full = Diamond {
            t_base: 0,
            starts,
            rows,
        };
        let mut rev = vec![runs[0].endpoint];
        let mut unique = true;
        backtrack_into(&full, pot, 0, 200, runs[0].endpoint, &mut rev, &mut unique);
        rev.reverse();
        assert_eq!(rev, runs[0].path.positions());
    }

    #[test]
    fn binary_dump_roundtrip() {
        let e = env(4, 0.0, 10, 10);
        let table = build_table(e.potential(), 10, (0, 0)).unwrap();
        let mut buf = Vec::new();
        table.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8 * 121);
        let back = ActionTable::read_binary(buf.as_slice()).unwrap();
        for t in 0..=10 {
            assert_eq!(back.row(t), table.row(t));
        }
        assert!(ActionTable::read_binary(&b"NOTATABLE......."[..]).is_err());
    }

    #[test]
    fn endpoint_tie_break() {
        assert!(prefer_endpoint(0, 1));
        assert!(prefer_endpoint(-1, 1));
        assert!(!prefer_endpoint(2, -1));
    }
}
