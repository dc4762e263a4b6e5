//! Random environment: the spatial field `F` on a lattice window and the
//! temporal signs `B` on `1..=horizon`.
//!
//! `F(x)` is i.i.d. with a symmetric density on `(-c, c)` behaving like
//! `q (c - |x|)^kappa` at the edges of the support; `B(i)` is a fair sign.

use serde::{Deserialize, Serialize};

use crate::error::{param, range, Error, Result};
use crate::rng::{StreamReader, STREAM_B, STREAM_F_NEG, STREAM_F_POS};

/// Tabulated density on `|x| in [0, c]`, linear between equispaced knots.
///
/// Values are an unnormalized profile: knot `j` sits at `|x| = j c / m`
/// where `m = values.len() - 1`. The density is the symmetric extension
/// normalized to total mass one.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    values: Vec<f64>,
    /// Cumulative trapezoid integrals of the profile, `cum[j] = int_0^{u_j}`.
    cum: Vec<f64>,
}

impl DensityTable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return param("density table needs at least two knots");
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return param("density table values must be finite and nonnegative");
        }
        if values[..values.len() - 1].iter().any(|v| *v <= 0.0) {
            return param("density table must be positive on the open support");
        }
        let mut cum = Vec::with_capacity(values.len());
        cum.push(0.0);
        for w in values.windows(2) {
            let last = *cum.last().unwrap();
            cum.push(last + 0.5 * (w[0] + w[1]));
        }
        Ok(Self { values, cum })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn segments(&self) -> usize {
        self.values.len() - 1
    }

    /// Profile integral over `[0, c]` in knot units (spacing one).
    fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn pdf(&self, c: f64, x: f64) -> f64 {
        let m = self.segments() as f64;
        let s = x.abs() / c * m;
        let j = (s.floor() as usize).min(self.segments() - 1);
        let frac = s - j as f64;
        let g = self.values[j] + (self.values[j + 1] - self.values[j]) * frac;
        // profile integral in x units is total * c / m; both halves give 2x that
        g / (2.0 * self.total() * c / m)
    }

    /// Mass of `[0, |x|]` as a fraction of the half-mass (in `[0, 1]`).
    fn half_cdf(&self, c: f64, x: f64) -> f64 {
        let m = self.segments() as f64;
        let s = (x.abs() / c * m).min(m);
        let j = (s.floor() as usize).min(self.segments() - 1);
        let t = s - j as f64;
        let (g0, g1) = (self.values[j], self.values[j + 1]);
        (self.cum[j] + g0 * t + 0.5 * (g1 - g0) * t * t) / self.total()
    }

    /// Inverse of [`Self::half_cdf`] for a fraction `p` in `[0, 1]`.
    fn half_quantile(&self, c: f64, p: f64) -> f64 {
        let target = p * self.total();
        let j = match self
            .cum
            .binary_search_by(|v| v.partial_cmp(&target).unwrap())
        {
            Ok(j) => j.min(self.segments() - 1),
            Err(j) => j.saturating_sub(1).min(self.segments() - 1),
        };
        let r = target - self.cum[j];
        let (g0, g1) = (self.values[j], self.values[j + 1]);
        let a = 0.5 * (g1 - g0);
        let disc = (g0 * g0 + 4.0 * a * r).max(0.0);
        let denom = g0 + disc.sqrt();
        let t = if denom > 0.0 { (2.0 * r / denom).min(1.0) } else { 0.0 };
        (j as f64 + t) * c / self.segments() as f64
    }

    fn mean_abs(&self, c: f64) -> f64 {
        // exact integral of u * g(u) over each linear segment
        let h = 1.0;
        let mut acc = 0.0;
        for j in 0..self.segments() {
            let u0 = j as f64;
            let g0 = self.values[j];
            let k = self.values[j + 1] - g0;
            acc += u0 * g0 * h + (u0 * k + g0) * h * h / 2.0 + k * h * h * h / 3.0;
        }
        acc / self.total() * c / self.segments() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DensityFamily {
    /// `rho(x) = Z^-1 (c - |x|)^kappa` on `(-c, c)`.
    EdgePower,
    /// `rho = 1 / (2c)`; the `kappa = 0` member of the edge-power family.
    Uniform,
    /// User table with user-supplied edge exponent and edge constant.
    CustomTable(DensityTable),
}

impl DensityFamily {
    pub fn name(&self) -> &'static str {
        match self {
            DensityFamily::EdgePower => "edge_power",
            DensityFamily::Uniform => "uniform",
            DensityFamily::CustomTable(_) => "custom_table",
        }
    }
}

/// Parameters of the disorder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnvSpec", into = "EnvSpec")]
pub struct EnvParams {
    kappa: f64,
    c: f64,
    family: DensityFamily,
    seed: u64,
    window: (i64, i64),
    horizon: usize,
    q: f64,
}

impl EnvParams {
    pub fn edge_power(kappa: f64, c: f64) -> Result<Self> {
        check_kappa_c(kappa, c)?;
        let q = (kappa + 1.0) / (2.0 * c.powf(kappa + 1.0));
        Ok(Self::raw(kappa, c, DensityFamily::EdgePower, q))
    }

    pub fn uniform(c: f64) -> Result<Self> {
        check_kappa_c(0.0, c)?;
        Ok(Self::raw(0.0, c, DensityFamily::Uniform, 1.0 / (2.0 * c)))
    }

    pub fn custom(table: DensityTable, kappa: f64, q: f64, c: f64) -> Result<Self> {
        check_kappa_c(kappa, c)?;
        if !(q > 0.0 && q.is_finite()) {
            return param(format!("edge constant q must be positive, got {q}"));
        }
        Ok(Self::raw(kappa, c, DensityFamily::CustomTable(table), q))
    }

    fn raw(kappa: f64, c: f64, family: DensityFamily, q: f64) -> Self {
        Self {
            kappa,
            c,
            family,
            seed: 0,
            window: (-1, 1),
            horizon: 1,
            q,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_window(mut self, x_min: i64, x_max: i64) -> Result<Self> {
        if x_min > 0 || x_max < 0 {
            return param(format!("window [{x_min}, {x_max}] must contain 0"));
        }
        self.window = (x_min, x_max);
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return param("horizon must be at least 1");
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    /// Edge constant `q = lim rho(x) / (c - |x|)^kappa`.
    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn family(&self) -> &DensityFamily {
        &self.family
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn window(&self) -> (i64, i64) {
        self.window
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Renders the `key=value` block understood by [`EnvParams::from_kv`].
    pub fn to_kv(&self) -> String {
        let mut s = format!(
            "kappa={}\nc={}\nfamily={}\nseed={}\nwindow={},{}\nhorizon={}\n",
            self.kappa,
            self.c,
            self.family.name(),
            self.seed,
            self.window.0,
            self.window.1,
            self.horizon
        );
        if let DensityFamily::CustomTable(t) = &self.family {
            let vals: Vec<String> = t.values().iter().map(|v| v.to_string()).collect();
            s.push_str(&format!("q={}\ntable={}\n", self.q, vals.join(",")));
        }
        s
    }

    /// Parses `key=value` lines; blank lines, `#` comments and an optional
    /// `[env]` header are ignored.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut spec = EnvSpec::default();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() || line.starts_with('[') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{line}`")))?;
            spec.set(k.trim(), v.trim())?;
        }
        Self::try_from(spec)
    }
}

fn check_kappa_c(kappa: f64, c: f64) -> Result<()> {
    if !(kappa > -1.0) || !kappa.is_finite() {
        return param(format!("kappa must exceed -1, got {kappa}"));
    }
    if !(c > 0.0) || !c.is_finite() {
        return param(format!("c must be positive, got {c}"));
    }
    Ok(())
}

/// Serialized form of [`EnvParams`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kappa: f64,
    pub c: f64,
    pub family: String,
    pub seed: u64,
    pub window: [i64; 2],
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<f64>>,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            kappa: 0.0,
            c: 1.0,
            family: "edge_power".into(),
            seed: 0,
            window: [-1, 1],
            horizon: 1,
            q: None,
            table: None,
        }
    }
}

impl EnvSpec {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Parse(format!("bad value for {what}: `{value}`"));
        match key {
            "kappa" => self.kappa = value.parse().map_err(|_| bad(key))?,
            "c" => self.c = value.parse().map_err(|_| bad(key))?,
            "family" => self.family = value.to_string(),
            "seed" => self.seed = value.parse().map_err(|_| bad(key))?,
            "horizon" => self.horizon = value.parse().map_err(|_| bad(key))?,
            "q" => self.q = Some(value.parse().map_err(|_| bad(key))?),
            "window" => {
                let (a, b) = value.split_once(',').ok_or_else(|| bad(key))?;
                self.window = [
                    a.trim().parse().map_err(|_| bad(key))?,
                    b.trim().parse().map_err(|_| bad(key))?,
                ];
            }
            "table" => {
                let vals: std::result::Result<Vec<f64>, _> =
                    value.split(',').map(|v| v.trim().parse()).collect();
                self.table = Some(vals.map_err(|_| bad(key))?);
            }
            _ => return Err(Error::Parse(format!("unknown env key `{key}`"))),
        }
        Ok(())
    }
}

impl TryFrom<EnvSpec> for EnvParams {
    type Error = Error;

    fn try_from(s: EnvSpec) -> Result<Self> {
        let base = match s.family.as_str() {
            "edge_power" => EnvParams::edge_power(s.kappa, s.c)?,
            "uniform" => {
                if s.kappa != 0.0 {
                    return param("uniform family has kappa = 0");
                }
                EnvParams::uniform(s.c)?
            }
            "custom_table" => {
                let table = DensityTable::new(
                    s.table
                        .ok_or_else(|| Error::Param("custom_table needs `table`".into()))?,
                )?;
                let q = s
                    .q
                    .ok_or_else(|| Error::Param("custom_table needs `q`".into()))?;
                EnvParams::custom(table, s.kappa, q, s.c)?
            }
            other => return param(format!("unknown density family `{other}`")),
        };
        base.with_seed(s.seed)
            .with_window(s.window[0], s.window[1])?
            .with_horizon(s.horizon)
    }
}

impl From<EnvParams> for EnvSpec {
    fn from(p: EnvParams) -> Self {
        let (q, table) = match &p.family {
            DensityFamily::CustomTable(t) => (Some(p.q), Some(t.values().to_vec())),
            _ => (None, None),
        };
        EnvSpec {
            kappa: p.kappa,
            c: p.c,
            family: p.family.name().to_string(),
            seed: p.seed,
            window: [p.window.0, p.window.1],
            horizon: p.horizon,
            q,
            table,
        }
    }
}

/// Density of `F(0)`; zero outside `(-c, c)`.
pub fn density_pdf(params: &EnvParams, x: f64) -> f64 {
    let c = params.c;
    if !(x.abs() < c) {
        return 0.0;
    }
    match &params.family {
        DensityFamily::EdgePower | DensityFamily::Uniform => {
            params.q * (c - x.abs()).powf(params.kappa)
        }
        DensityFamily::CustomTable(t) => t.pdf(c, x),
    }
}

/// Distribution function of `F(0)`.
pub fn cdf(params: &EnvParams, x: f64) -> f64 {
    let c = params.c;
    if x <= -c {
        return 0.0;
    }
    if x >= c {
        return 1.0;
    }
    let half = match &params.family {
        DensityFamily::EdgePower | DensityFamily::Uniform => {
            1.0 - ((c - x.abs()) / c).powf(params.kappa + 1.0)
        }
        DensityFamily::CustomTable(t) => t.half_cdf(c, x),
    };
    if x >= 0.0 {
        0.5 + 0.5 * half
    } else {
        0.5 - 0.5 * half
    }
}

/// Quantile function of `F(0)`, exact for every `kappa > -1`.
pub fn inverse_cdf(params: &EnvParams, u: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return range(format!("quantile level {u} outside [0, 1]"));
    }
    Ok(quantile(params, u))
}

#[inline]
fn quantile(params: &EnvParams, u: f64) -> f64 {
    let c = params.c;
    // mass of the tail beyond |x|, as a fraction of one half
    let (sign, tail) = if u <= 0.5 { (-1.0, 2.0 * u) } else { (1.0, 2.0 * (1.0 - u)) };
    let abs_x = match &params.family {
        DensityFamily::Uniform => c * (1.0 - tail),
        DensityFamily::EdgePower => {
            if params.kappa == 0.0 {
                c * (1.0 - tail)
            } else {
                c - c * tail.powf(1.0 / (params.kappa + 1.0))
            }
        }
        DensityFamily::CustomTable(t) => t.half_quantile(c, 1.0 - tail),
    };
    sign * abs_x
}

/// Keeps a sample strictly inside `(-c, c)`.
#[inline]
fn clamp_interior(x: f64, c: f64) -> f64 {
    if x >= c {
        c.next_down()
    } else if x <= -c {
        (-c).next_up()
    } else {
        x
    }
}

/// `D = E|F(0)|`.
pub fn mean_abs_f(params: &EnvParams) -> f64 {
    match &params.family {
        DensityFamily::EdgePower | DensityFamily::Uniform => params.c / (params.kappa + 2.0),
        DensityFamily::CustomTable(t) => t.mean_abs(params.c),
    }
}

/// Draws one `F` value from a uniform variate in `(0, 1)`.
#[inline]
pub fn sample_f(params: &EnvParams, u: f64) -> f64 {
    clamp_interior(quantile(params, u), params.c)
}

/// Borrowed view of a spatial field and a sign sequence.
///
/// `field[j]` is `f(x_min + j)`; `signs[i - 1]` is `b(i)` for time `i >= 1`.
#[derive(Debug, Clone, Copy)]
pub struct Potential<'a> {
    field: &'a [f64],
    x_min: i64,
    signs: &'a [i8],
}

impl<'a> Potential<'a> {
    pub fn new(field: &'a [f64], x_min: i64, signs: &'a [i8]) -> Self {
        Self {
            field,
            x_min,
            signs,
        }
    }

    pub fn field(&self) -> &'a [f64] {
        self.field
    }
    pub fn signs(&self) -> &'a [i8] {
        self.signs
    }
    pub fn x_min(&self) -> i64 {
        self.x_min
    }
    pub fn x_max(&self) -> i64 {
        self.x_min + self.field.len() as i64 - 1
    }
    pub fn horizon(&self) -> usize {
        self.signs.len()
    }
    pub fn contains(&self, x: i64) -> bool {
        x >= self.x_min && x <= self.x_max()
    }

    /// `f(x)`; panics outside the window.
    #[inline]
    pub fn f(&self, x: i64) -> f64 {
        self.field[(x - self.x_min) as usize]
    }

    /// `b(i)` for `1 <= i <= horizon`; panics otherwise.
    #[inline]
    pub fn b(&self, i: usize) -> i8 {
        self.signs[i - 1]
    }

    /// `b(i) f(x)`.
    #[inline]
    pub fn weight(&self, i: usize, x: i64) -> f64 {
        f64::from(self.b(i)) * self.f(x)
    }
}

/// One realization of `(F, B)` on a window and horizon.
#[derive(Debug, Clone)]
pub struct Environment {
    params: EnvParams,
    sign_seed: u64,
    f: Vec<f64>,
    b: Vec<i8>,
}

/// Samples `F` on the window and `B` on `1..=horizon` from `params.seed`.
pub fn sample_environment(params: &EnvParams) -> Result<Environment> {
    Environment::sample(params)
}

impl Environment {
    pub fn sample(params: &EnvParams) -> Result<Self> {
        Self::sample_with_signs(params, params.seed)
    }

    /// Same field as [`Environment::sample`] but signs drawn under `sign_seed`.
    pub fn sample_with_signs(params: &EnvParams, sign_seed: u64) -> Result<Self> {
        let (x_min, x_max) = params.window;
        if x_min > x_max {
            return param("empty window");
        }
        let f = sample_field(params, x_min, x_max);
        let mut b = Vec::with_capacity(params.horizon);
        let mut reader = StreamReader::new(sign_seed, STREAM_B, 0);
        for _ in 0..params.horizon {
            b.push(reader.sign());
        }
        Ok(Self {
            params: params.clone(),
            sign_seed,
            f,
            b,
        })
    }

    /// Regenerates on a new window and horizon; values at common addresses
    /// are unchanged.
    pub fn resized(&self, x_min: i64, x_max: i64, horizon: usize) -> Result<Self> {
        let params = self
            .params
            .clone()
            .with_window(x_min, x_max)?
            .with_horizon(horizon)?;
        Self::sample_with_signs(&params, self.sign_seed)
    }

    /// Builds an environment from explicit arrays (tests, custom studies).
    pub fn from_parts(params: &EnvParams, f: Vec<f64>, b: Vec<i8>) -> Result<Self> {
        let (x_min, x_max) = params.window;
        if f.len() as i64 != x_max - x_min + 1 {
            return param("field length does not match the window");
        }
        if b.len() != params.horizon {
            return param("sign sequence length does not match the horizon");
        }
        if f.iter().any(|v| !(v.abs() < params.c)) {
            return param("field values must lie in (-c, c)");
        }
        if b.iter().any(|s| *s != 1 && *s != -1) {
            return param("signs must be +1 or -1");
        }
        Ok(Self {
            params: params.clone(),
            sign_seed: params.seed,
            f,
            b,
        })
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }
    pub fn c(&self) -> f64 {
        self.params.c
    }
    pub fn x_min(&self) -> i64 {
        self.params.window.0
    }
    pub fn x_max(&self) -> i64 {
        self.params.window.1
    }
    pub fn horizon(&self) -> usize {
        self.params.horizon
    }
    pub fn field(&self) -> &[f64] {
        &self.f
    }
    pub fn signs(&self) -> &[i8] {
        &self.b
    }
    pub fn contains(&self, x: i64) -> bool {
        x >= self.x_min() && x <= self.x_max()
    }

    #[inline]
    pub fn f(&self, x: i64) -> f64 {
        self.f[(x - self.x_min()) as usize]
    }

    #[inline]
    pub fn b(&self, i: usize) -> i8 {
        self.b[i - 1]
    }

    pub fn potential(&self) -> Potential<'_> {
        Potential::new(&self.f, self.x_min(), &self.b)
    }
}

fn sample_field(params: &EnvParams, x_min: i64, x_max: i64) -> Vec<f64> {
    let mut f = Vec::with_capacity((x_max - x_min + 1) as usize);
    if x_min < 0 {
        // negative sites read their stream at index -x - 1, i.e. backwards in x
        let hi_neg = x_max.min(-1);
        let mut reader = StreamReader::new(params.seed, STREAM_F_NEG, (-hi_neg - 1) as u64);
        let mut neg: Vec<f64> = (x_min..=hi_neg)
            .map(|_| sample_f(params, reader.open01()))
            .collect();
        neg.reverse();
        f.extend(neg);
    }
    if x_max >= 0 {
        let lo = x_min.max(0);
        let mut reader = StreamReader::new(params.seed, STREAM_F_POS, lo as u64);
        f.extend((lo..=x_max).map(|_| sample_f(params, reader.open01())));
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ep(kappa: f64, c: f64) -> EnvParams {
        EnvParams::edge_power(kappa, c).unwrap()
    }

    #[test]
    fn rejects_bad_params() {
        assert!(EnvParams::edge_power(-1.0, 1.0).is_err());
        assert!(EnvParams::edge_power(0.5, 0.0).is_err());
        assert!(ep(0.0, 1.0).with_window(1, 5).is_err());
        assert!(ep(0.0, 1.0).with_horizon(0).is_err());
    }

    #[test]
    fn edge_constant_closed_form() {
        assert!((ep(0.0, 1.0).q() - 0.5).abs() < 1e-15);
        assert!((ep(1.0, 1.0).q() - 1.0).abs() < 1e-15);
        assert!((ep(2.0, 2.0).q() - 3.0 / 16.0).abs() < 1e-15);
        assert!((EnvParams::uniform(2.0).unwrap().q() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn pdf_examples() {
        assert_eq!(density_pdf(&ep(0.0, 1.0), 0.0), 0.5);
        assert_eq!(density_pdf(&ep(1.0, 1.0), 1.0), 0.0);
        assert_eq!(density_pdf(&ep(2.5, 1.0), -1.0), 0.0);
        assert!((density_pdf(&ep(1.0, 1.0), 0.5) - 0.5).abs() < 1e-15);
        let p = ep(0.7, 1.3);
        for x in [0.1, 0.4, 1.2] {
            assert_eq!(density_pdf(&p, x), density_pdf(&p, -x));
        }
    }

    #[test]
    fn quantile_examples() {
        for k in [-0.5, 0.0, 1.0, 3.0] {
            assert_eq!(inverse_cdf(&ep(k, 1.0), 0.5).unwrap(), 0.0);
        }
        assert!((inverse_cdf(&ep(0.0, 1.0), 0.75).unwrap() - 0.5).abs() < 1e-15);
        assert!(inverse_cdf(&ep(0.0, 1.0), 1.5).is_err());
        assert!(inverse_cdf(&ep(0.0, 1.0), -0.1).is_err());
        assert!(inverse_cdf(&ep(1.0, 1.0), 1.0 - 1e-12).unwrap() > 0.999);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for k in [-0.5, 0.0, 0.5, 1.0, 2.0] {
            let p = ep(k, 1.7);
            for i in 1..100 {
                let u = i as f64 / 100.0;
                let x = inverse_cdf(&p, u).unwrap();
                assert!((cdf(&p, x) - u).abs() < 1e-12, "kappa {k} u {u}");
            }
        }
    }

    #[test]
    fn mean_abs_examples() {
        assert!((mean_abs_f(&ep(0.0, 1.0)) - 0.5).abs() < 1e-15);
        assert!((mean_abs_f(&ep(1.0, 1.0)) - 1.0 / 3.0).abs() < 1e-15);
        assert!((mean_abs_f(&ep(2.0, 2.0)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn custom_table_matches_closed_form_for_linear_profile() {
        // profile 1 - u on [0, 1] is the kappa = 1 edge-power density
        let t = DensityTable::new(vec![1.0, 0.5, 0.0]).unwrap();
        let custom = EnvParams::custom(t, 1.0, 1.0, 1.0).unwrap();
        let reference = ep(1.0, 1.0);
        for x in [-0.9, -0.3, 0.0, 0.2, 0.75] {
            assert!((density_pdf(&custom, x) - density_pdf(&reference, x)).abs() < 1e-12);
            assert!((cdf(&custom, x) - cdf(&reference, x)).abs() < 1e-12);
        }
        for u in [0.01, 0.3, 0.5, 0.77, 0.999] {
            let a = inverse_cdf(&custom, u).unwrap();
            let b = inverse_cdf(&reference, u).unwrap();
            assert!((a - b).abs() < 1e-9, "u {u}: {a} vs {b}");
        }
        assert!((mean_abs_f(&custom) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn custom_table_validation() {
        assert!(DensityTable::new(vec![1.0]).is_err());
        assert!(DensityTable::new(vec![1.0, 0.0, 1.0]).is_err());
        assert!(DensityTable::new(vec![1.0, -1.0]).is_err());
        let t = DensityTable::new(vec![1.0, 1.0]).unwrap();
        assert!(EnvParams::custom(t, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn window_growth_keeps_values() {
        let p = ep(0.5, 1.0).with_seed(99).with_window(-10, 10).unwrap().with_horizon(30).unwrap();
        let small = Environment::sample(&p).unwrap();
        let big = small.resized(-20, 20, 60).unwrap();
        for x in -10..=10 {
            assert_eq!(small.f(x), big.f(x));
        }
        for i in 1..=30 {
            assert_eq!(small.b(i), big.b(i));
        }
        let again = Environment::sample(&p).unwrap();
        assert_eq!(small.field(), again.field());
        assert_eq!(small.signs(), again.signs());
    }

    #[test]
    fn one_sided_windows() {
        let p = ep(0.0, 1.0).with_seed(5).with_window(-20, 20).unwrap();
        let full = Environment::sample(&p).unwrap();
        let right = full.resized(0, 20, 1).unwrap();
        let left = full.resized(-20, 0, 1).unwrap();
        for x in 0..=20 {
            assert_eq!(right.f(x), full.f(x));
            assert_eq!(left.f(-x), full.f(-x));
        }
    }

    #[test]
    fn kv_and_json_roundtrip() {
        let t = DensityTable::new(vec![2.0, 1.0, 0.5]).unwrap();
        for p in [
            ep(0.25, 1.5).with_seed(11).with_window(-3, 8).unwrap().with_horizon(40).unwrap(),
            EnvParams::custom(t, 0.0, 0.3, 1.0).unwrap(),
            EnvParams::uniform(2.0).unwrap(),
        ] {
            assert_eq!(EnvParams::from_kv(&p.to_kv()).unwrap(), p);
            let js = serde_json::to_string(&p).unwrap();
            assert_eq!(serde_json::from_str::<EnvParams>(&js).unwrap(), p);
        }
        assert!(EnvParams::from_kv("kappa=-2\nc=1").is_err());
        assert!(EnvParams::from_kv("colour=blue").is_err());
    }
}
