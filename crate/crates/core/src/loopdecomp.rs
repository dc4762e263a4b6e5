//! Loop decomposition of an optimal walk from `0` to `n` of length `T > n`.
//!
//! Sites `0, n, v_2, ..., v_n` are processed in order (the interior sites by
//! increasing modified discrepancy `d*`). At each step the loop of the
//! current walk between its first and last visit to the site is cut out.
//! [`validate`] re-checks every combinatorial claim about the result from
//! the stored intervals alone, and recomputes the projected minimal actions
//! with the DP.

use std::collections::BTreeMap;

use crate::discrepancy::modified_discrepancy_of;
use crate::dp::two_point_action;
use crate::env::{Environment, EnvParams, Potential};
use crate::error::{param, Error, Result};
use crate::paths::{action, LazyPath};
use crate::rng::derive_seed;

pub const TAG_LOOPS: u64 = 0x4c4f_4f50;

/// Data for one index `i` of the decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopStep {
    pub site: i64,
    /// `d*(site)`; NaN for the two endpoints.
    pub dstar: f64,
    pub a: usize,
    pub z: usize,
    /// Removed times as inclusive runs, increasing.
    pub removed: Vec<(usize, usize)>,
    pub e: usize,
    pub s: f64,
}

impl LoopStep {
    pub fn len(&self) -> usize {
        self.removed.iter().map(|&(s, e)| e - s + 1).sum()
    }
    pub fn is_empty(&self) -> bool {
        self.removed.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopDecomposition {
    pub n: i64,
    pub horizon: usize,
    pub steps: Vec<LoopStep>,
    /// `U_n`, increasing.
    pub survivors: Vec<usize>,
}

impl LoopDecomposition {
    pub fn order(&self) -> Vec<i64> {
        self.steps.iter().map(|s| s.site).collect()
    }

    /// `|U_i|` for `i = 0..=n`.
    pub fn surviving_sizes(&self) -> Vec<usize> {
        let mut left = self.horizon;
        self.steps
            .iter()
            .map(|s| {
                left -= s.len();
                left
            })
            .collect()
    }
}

/// Removed runs, keyed by start, merged when they touch.
#[derive(Default)]
struct Gaps(BTreeMap<usize, usize>);

impl Gaps {
    fn contains(&self, t: usize) -> bool {
        self.0.range(..=t).next_back().is_some_and(|(_, &e)| e >= t)
    }

    /// Surviving runs of `lo..=hi`.
    fn survivors_in(&self, lo: usize, hi: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut cur = lo;
        if let Some((_, &e)) = self.0.range(..lo).next_back() {
            cur = cur.max(e + 1);
        }
        for (&s, &e) in self.0.range(lo..=hi) {
            if s > cur {
                out.push((cur, s - 1));
            }
            cur = cur.max(e + 1);
        }
        if cur <= hi {
            out.push((cur, hi));
        }
        out
    }

    fn remove(&mut self, lo: usize, hi: usize) {
        let (mut s, mut e) = (lo, hi);
        if let Some((&ps, &pe)) = self.0.range(..=lo).next_back() {
            if pe + 1 >= lo {
                s = ps;
                e = e.max(pe);
            }
        }
        let inside: Vec<usize> = self.0.range(s..=hi.saturating_add(1)).map(|(&k, _)| k).collect();
        for k in inside {
            e = e.max(self.0.remove(&k).unwrap());
        }
        self.0.insert(s, e);
    }
}

fn count_minus_plus(pot: Potential<'_>, lo: usize, hi: usize) -> usize {
    (lo..hi).filter(|&j| pot.b(j) < 0 && pot.b(j + 1) > 0).count()
}

fn check_input(pot: Potential<'_>, path: &LazyPath, n: i64) -> Result<usize> {
    if n < 1 {
        return param("n must be at least 1");
    }
    if path.start_time() != 0 || path.start() != 0 || path.end() != n {
        return param(format!("path must run from (0, 0) to (T, {n})"));
    }
    let t = path.end_time();
    if t > pot.horizon() {
        return param(format!("path length {t} exceeds horizon {}", pot.horizon()));
    }
    let (lo, hi) = path.range();
    if !pot.contains(lo.min(0)) || !pot.contains(hi.max(n)) {
        return param(format!("field must cover [{}, {}]", lo.min(0), hi.max(n)));
    }
    Ok(t)
}

/// `(site, d*)` for `0, n` and then `1..n` by increasing `d*` (ties by site).
pub fn site_order(pot: Potential<'_>, c: f64, n: i64) -> Vec<(i64, f64)> {
    let mut inner: Vec<(i64, f64)> = (1..n)
        .map(|x| (x, modified_discrepancy_of(pot.field(), pot.x_min(), c, x)))
        .collect();
    inner.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut out = vec![(0, f64::NAN), (n, f64::NAN)];
    out.extend(inner);
    out
}

/// Decomposes `path`, a walk from `(0, 0)` to `(T, n)`.
pub fn decompose(pot: Potential<'_>, c: f64, path: &LazyPath, n: i64) -> Result<LoopDecomposition> {
    let horizon = check_input(pot, path, n)?;
    let pos = path.positions();
    let mut visits: Vec<Vec<usize>> = vec![Vec::new(); n as usize + 1];
    for (t, &x) in pos.iter().enumerate() {
        if (0..=n).contains(&x) {
            visits[x as usize].push(t);
        }
    }
    let mut gaps = Gaps::default();
    let mut steps = Vec::with_capacity(n as usize + 1);
    for (site, dstar) in site_order(pot, c, n) {
        let alive = |t: &&usize| **t == 0 || !gaps.contains(**t);
        let vs = &visits[site as usize];
        let a = *vs.iter().find(alive).ok_or_else(|| {
            Error::Structural(format!("site {site} is not visited by the remaining walk"))
        })?;
        let z = *vs.iter().rev().find(alive).unwrap();
        let removed = if z > a { gaps.survivors_in(a + 1, z) } else { Vec::new() };
        let mut e = 0;
        let mut s = 0.0;
        for &(lo, hi) in &removed {
            e += count_minus_plus(pot, lo, hi);
            s += (lo..=hi).map(|j| pot.weight(j, pos[j])).sum::<f64>();
        }
        if z > a {
            gaps.remove(a + 1, z);
        }
        steps.push(LoopStep {
            site,
            dstar,
            a,
            z,
            removed,
            e,
            s,
        });
    }
    let survivors = gaps.survivors_in(1, horizon).into_iter().flat_map(|(s, e)| s..=e).collect();
    Ok(LoopDecomposition {
        n,
        horizon,
        steps,
        survivors,
    })
}

/// Outcome of one item of the validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemCheck {
    pub item: u8,
    pub checked: usize,
    pub failed: usize,
    /// The first few failures.
    pub examples: Vec<String>,
}

impl ItemCheck {
    fn new(item: u8) -> Self {
        Self {
            item,
            checked: 0,
            failed: 0,
            examples: Vec::new(),
        }
    }
    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failed += 1;
            if self.examples.len() < 5 {
                self.examples.push(msg());
            }
        }
    }
    pub fn passed(&self) -> bool {
        self.failed == 0 && self.checked > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopReport {
    /// Items 1 to 11 in order.
    pub items: Vec<ItemCheck>,
    /// Indices `m` where the recomputed minimal action on the projected
    /// signs equals the action of the projected walk.
    pub dp_equalities: usize,
    pub dp_checks: usize,
}

impl LoopReport {
    pub fn item(&self, k: u8) -> &ItemCheck {
        &self.items[k as usize - 1]
    }
    pub fn passed(&self) -> bool {
        self.items.iter().all(ItemCheck::passed)
    }
}

struct Survivors {
    prev: Vec<u32>,
    next: Vec<u32>,
    alive: Vec<bool>,
}

const NIL: u32 = u32::MAX;

/// Checks the eleven claims of the decomposition lemma for `dec`.
///
/// `U_i` is taken to be the complement of the stored `L_0, ..., L_i`, so a
/// tampered decomposition is judged on what it actually claims. Item 11
/// reruns the DP on the projected signs; `path` must be a minimizer for
/// that item to pass.
pub fn validate(
    dec: &LoopDecomposition,
    pot: Potential<'_>,
    c: f64,
    path: &LazyPath,
) -> Result<LoopReport> {
    let horizon = check_input(pot, path, dec.n)?;
    if horizon != dec.horizon || dec.steps.len() != dec.n as usize + 1 {
        return param("decomposition does not match the path");
    }
    let n = dec.n;
    let pos = path.positions();
    let tol = 1e-9 * c * horizon as f64;
    let mut items: Vec<ItemCheck> = (1..=11).map(ItemCheck::new).collect();
    let last = dec.steps.len() as u32;

    // (1) ownership of every time
    let mut owner = vec![NIL; horizon + 1];
    let mut claim = |t: usize, who: u32, items: &mut Vec<ItemCheck>| {
        let ok = (1..=horizon).contains(&t) && owner[t] == NIL;
        items[0].check(ok, || format!("time {t} claimed twice or out of range (index {who})"));
        if ok {
            owner[t] = who;
        }
    };
    for (i, st) in dec.steps.iter().enumerate() {
        for &(lo, hi) in &st.removed {
            for t in lo..=hi {
                claim(t, i as u32, &mut items);
            }
        }
    }
    for &t in &dec.survivors {
        claim(t, last, &mut items);
    }
    let unclaimed = owner[1..].iter().filter(|&&o| o == NIL).count();
    items[0].check(unclaimed == 0, || format!("{unclaimed} times not covered"));
    if items[0].failed > 0 {
        for it in items.iter_mut().skip(1) {
            it.check(false, || "partition broken".into());
        }
        return Ok(LoopReport {
            items,
            dp_equalities: 0,
            dp_checks: 0,
        });
    }

    let rank: BTreeMap<i64, usize> = dec.steps.iter().enumerate().map(|(i, s)| (s.site, i)).collect();
    let expected = site_order(pot, c, n);
    let order_ok = expected.iter().zip(&dec.steps).all(|(e, s)| e.0 == s.site);
    items[6].check(order_ok && rank.len() == dec.steps.len(), || "site order is not by increasing d*".into());
    let dstar = |x: i64| modified_discrepancy_of(pot.field(), pot.x_min(), c, x);
    let full_action = action(pot, path)?;

    // survivors as a linked list headed by time 0
    let mut sv = Survivors {
        prev: (0..=horizon as u32).map(|t| t.wrapping_sub(1)).collect(),
        next: (1..=horizon as u32 + 1).collect(),
        alive: vec![true; horizon + 1],
    };
    sv.next[horizon] = NIL;
    let jump = |a: u32, b: u32| b != NIL && (pos[a as usize] - pos[b as usize]).abs() > 1;
    let mut bad = (0..horizon as u32).filter(|&t| jump(t, t + 1)).count();
    let mut tail = horizon as u32;
    let mut size = horizon;
    let x_lo = pos.iter().copied().min().unwrap().min(0);
    let mut cnt = vec![0usize; (pos.iter().copied().max().unwrap().max(n) - x_lo + 1) as usize];
    for &x in pos {
        cnt[(x - x_lo) as usize] += 1;
    }
    let outside = |x: i64| !(0..=n).contains(&x);
    let mut off_sites = pos.iter().filter(|&&x| outside(x)).count();
    let mut gap_runs = 0usize;
    let mut wrong_count = 0usize; // activated sites not visited exactly once
    let mut sum_s = 0.0;
    let mut sum_ed = 0.0;
    let mut total_e = 0usize;
    let mut last_dp: Option<(usize, f64)> = None;
    let (mut dp_equalities, mut dp_checks) = (0, 0);

    let ref_action = two_point_action(pot, (0, 0), (horizon, n))?;
    items[10].check((ref_action - full_action).abs() <= tol, || {
        format!("path action {full_action} is not minimal ({ref_action})")
    });

    for (i, st) in dec.steps.iter().enumerate() {
        let site = st.site;
        // (3) before removal: endpoints live in U_{i-1} plus time 0
        let live = |t: usize| t == 0 || (t <= horizon && owner[t] >= i as u32);
        let contiguous = st.removed.is_empty()
            || (st.removed.len() == 1 && st.removed[0] == (st.a + 1, st.z));
        let ends_ok = st.a <= st.z
            && st.z <= horizon
            && pos[st.a] == site
            && pos[st.z] == site
            && live(st.a)
            && live(st.z)
            && (st.a == st.z) == st.removed.is_empty();
        items[2].check(contiguous && ends_ok, || {
            format!("L_{i} = {:?} is not (a, z] = ({}, {}] at site {site}", st.removed, st.a, st.z)
        });

        // recomputed loop statistics
        let mut e = 0;
        let mut s = 0.0;
        let mut len = 0;
        for &(lo, hi) in &st.removed {
            len += hi - lo + 1;
            e += count_minus_plus(pot, lo, hi);
            s += (lo..=hi).map(|j| pot.weight(j, pos[j])).sum::<f64>();
        }
        // pairs straddling two runs of the same L_i
        for w in st.removed.windows(2) {
            if w[0].1 + 1 == w[1].0 && pot.b(w[0].1) < 0 && pot.b(w[1].0) > 0 {
                e += 1;
            }
        }
        let stats_ok = e == st.e && (s - st.s).abs() <= tol;
        items[7].check(stats_ok && s >= -c * len as f64 - tol, || {
            format!("s_{i} = {s} (stored {}) below -c|L| = {}", st.s, -c * len as f64)
        });
        if i >= 2 {
            let ds = dstar(site);
            let mut all_later = true;
            let mut all_above = true;
            for &(lo, hi) in &st.removed {
                for &x in &pos[lo..=hi] {
                    all_later &= rank.get(&x).is_some_and(|&r| r >= i);
                    all_above &= (0..=n).contains(&x) && x > 0 && x < n && dstar(x) >= ds;
                }
            }
            items[5].check(all_later, || format!("L_{i} visits a site ranked before {site}"));
            items[6].check(all_above, || format!("L_{i} visits a site with d* below d*({site}) = {ds}"));
            let floor = -c * len as f64 + e as f64 * ds;
            items[8].check(s >= floor - tol, || format!("s_{i} = {s} < {floor}"));
            sum_ed += e as f64 * ds;
        }
        total_e += e;
        sum_s += s;

        // remove L_i from the survivors
        for &(lo, hi) in &st.removed {
            for t in lo..=hi {
                let t32 = t as u32;
                if !sv.alive[t] {
                    continue;
                }
                let (p, q) = (sv.prev[t], sv.next[t]);
                bad -= usize::from(jump(p, t32)) + usize::from(jump(t32, q));
                bad += usize::from(jump(p, q));
                sv.next[p as usize] = q;
                if q == NIL {
                    tail = p;
                } else {
                    sv.prev[q as usize] = p;
                }
                sv.alive[t] = false;
                size -= 1;
                let x = pos[t];
                let k = (x - x_lo) as usize;
                if let Some(&r) = rank.get(&x) {
                    if r < i {
                        let before = cnt[k] == 1;
                        let after = cnt[k] - 1 == 1;
                        if before && !after {
                            wrong_count += 1;
                        } else if !before && after {
                            wrong_count -= 1;
                        }
                    }
                }
                cnt[k] -= 1;
                off_sites -= usize::from(outside(x));
                let left = t > 1 && !sv.alive[t - 1];
                let right = t < horizon && !sv.alive[t + 1];
                gap_runs = gap_runs + 1 - usize::from(left) - usize::from(right);
            }
        }
        let k = (site - x_lo) as usize;
        wrong_count += usize::from(cnt[k] != 1);

        // (2) P_{U_i} gamma is a lazy walk from 0 to n visiting v_0..v_i once
        let walk_ok = bad == 0 && pos[tail as usize] == n && size >= n as usize;
        items[1].check(walk_ok && wrong_count == 0, || {
            format!("U_{i}: {bad} bad steps, ends at {}, |U| = {size}, {wrong_count} sites not visited once", pos[tail as usize])
        });
        // (4) U_i is in the family with at most i + 1 removed intervals
        items[3].check(size >= n as usize && gap_runs <= i + 1, || {
            format!("U_{i}: {gap_runs} removed intervals, |U| = {size}")
        });
        // (5)
        if i >= 1 {
            items[4].check(off_sites == 0, || format!("U_{i} still visits {off_sites} times outside [0, n]"));
        }

        // (11) projected walk and projected signs
        let mut signs = Vec::with_capacity(size);
        let mut proj = 0.0;
        let mut t = sv.next[0];
        while t != NIL {
            let b = pot.b(t as usize);
            signs.push(b);
            proj += f64::from(b) * pot.f(pos[t as usize]);
            t = sv.next[t as usize];
        }
        let telescoped = full_action - sum_s;
        let dp = match last_dp {
            Some((sz, v)) if sz == size => v,
            _ => {
                let p = Potential::new(pot.field(), pot.x_min(), &signs);
                let v = two_point_action(p, (0, 0), (size, n))?;
                last_dp = Some((size, v));
                v
            }
        };
        let bound = full_action + (horizon - size) as f64 * c - sum_ed;
        dp_checks += 1;
        dp_equalities += usize::from((dp - proj).abs() <= tol);
        items[10].check(
            (proj - telescoped).abs() <= tol && dp <= proj + tol && proj <= bound + tol,
            || format!("m = {i}: DP {dp}, projected {proj}, telescoped {telescoped}, bound {bound}"),
        );
    }

    // (10)
    let pairs = count_minus_plus(pot, 1, horizon);
    let floor = pairs as i64 - 2 * (n + 1);
    items[9].check(total_e as i64 >= floor, || format!("sum e = {total_e} < {floor}"));

    Ok(LoopReport {
        items,
        dp_equalities,
        dp_checks,
    })
}

/// A seeded environment on `[-T, T]` with `T = ell n` and a minimizer from
/// `(0, 0)` to `(T, n)`.
pub fn random_instance(params: &EnvParams, n: i64, ell: usize, index: u64) -> Result<(Environment, LazyPath)> {
    if n < 1 || ell < 2 {
        return param("need n >= 1 and ell >= 2");
    }
    let t = ell * n as usize;
    let p = params
        .clone()
        .with_seed(derive_seed(params.seed(), TAG_LOOPS, index))
        .with_window(-(t as i64) - 1, t as i64 + 1)?
        .with_horizon(t)?;
    let env = Environment::sample(&p)?;
    let best = crate::dp::optimal_path_point(env.potential(), t, n)?;
    Ok((env, best.path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_env() -> (Vec<f64>, Vec<i8>) {
        // f(-1..=4)
        let f = vec![0.1, 0.5, -0.3, 0.2, -0.9, 0.0];
        let b = vec![-1, 1, -1, 1, 1, -1, 1, -1, 1];
        (f, b)
    }

    #[test]
    fn hand_built_loop() {
        let (f, b) = hand_env();
        let pot = Potential::new(&f, -1, &b);
        let path = LazyPath::new(0, vec![0, 1, 0, 1, 2, 3, 2, 3, 3, 3]).unwrap();
        let dec = decompose(pot, 1.0, &path, 3).unwrap();
        assert_eq!(dec.order(), vec![0, 3, 2, 1]);
        let s = &dec.steps;
        assert_eq!((s[0].a, s[0].z, s[0].removed.clone()), (0, 2, vec![(1, 2)]));
        assert_eq!((s[1].a, s[1].z, s[1].removed.clone()), (5, 9, vec![(6, 9)]));
        assert!(s[2].is_empty() && s[3].is_empty());
        assert_eq!((s[0].e, s[1].e), (1, 2));
        assert!((s[0].s - 0.8).abs() < 1e-12);
        assert!((s[1].s + 1.1).abs() < 1e-12);
        assert!((s[2].dstar - 0.9).abs() < 1e-12 && (s[3].dstar - 2.0).abs() < 1e-12);
        assert_eq!(dec.survivors, vec![3, 4, 5]);
        assert_eq!(dec.surviving_sizes(), vec![7, 3, 3, 3]);
    }

    #[test]
    fn ballistic_path_is_trivial() {
        let f = vec![0.3, -0.2, 0.7, 0.1, -0.5, 0.4];
        let b = vec![1, -1, 1, 1];
        let pot = Potential::new(&f, -1, &b);
        let path = LazyPath::new(0, vec![0, 1, 2, 3, 4]).unwrap();
        let dec = decompose(pot, 1.0, &path, 4).unwrap();
        assert!(dec.steps.iter().all(LoopStep::is_empty));
        assert_eq!(dec.survivors, vec![1, 2, 3, 4]);
        let rep = validate(&dec, pot, 1.0, &path).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn gaps_merge_and_split() {
        let mut g = Gaps::default();
        g.remove(3, 5);
        g.remove(9, 10);
        assert_eq!(g.survivors_in(1, 12), vec![(1, 2), (6, 8), (11, 12)]);
        g.remove(6, 8);
        assert_eq!(g.0.len(), 1);
        assert!(g.contains(3) && g.contains(10) && !g.contains(11));
        assert_eq!(g.survivors_in(4, 12), vec![(11, 12)]);
    }

    #[test]
    fn optimal_paths_pass_all_items() {
        for (k, kappa) in [0.0, 1.0, -0.5].into_iter().enumerate() {
            let p = EnvParams::edge_power(kappa, 1.0).unwrap().with_seed(11);
            let (env, path) = random_instance(&p, 30, 3, k as u64).unwrap();
            let dec = decompose(env.potential(), 1.0, &path, 30).unwrap();
            let rep = validate(&dec, env.potential(), 1.0, &path).unwrap();
            assert!(rep.passed(), "{rep:#?}");
            assert_eq!(rep.dp_checks, 31);
        }
    }

    #[test]
    fn swapped_intervals_fail() {
        let p = EnvParams::edge_power(0.0, 1.0).unwrap().with_seed(4);
        let (env, path) = random_instance(&p, 30, 3, 0).unwrap();
        let mut dec = decompose(env.potential(), 1.0, &path, 30).unwrap();
        let (i, j) = (0, 1);
        assert!(!dec.steps[i].is_empty() || !dec.steps[j].is_empty());
        let tmp = dec.steps[i].removed.clone();
        dec.steps[i].removed = dec.steps[j].removed.clone();
        dec.steps[j].removed = tmp;
        let rep = validate(&dec, env.potential(), 1.0, &path).unwrap();
        assert!(!rep.passed());
    }
}
