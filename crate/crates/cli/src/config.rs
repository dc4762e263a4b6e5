//! Experiment configuration: `key=value` text, overridable from the command
//! line.

use std::collections::BTreeMap;
use std::path::PathBuf;

use lpp_core::env::{EnvParams, EnvSpec};
use lpp_core::error::{Error, Result};
use lpp_core::shape::default_alphas;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Shape,
    PointProcess,
    FreePath,
    LimitLaw,
    Loops,
    Variance,
    MinAction,
    DumpPath,
}

impl Kind {
    pub const ALL: [Kind; 8] = [
        Kind::Shape,
        Kind::PointProcess,
        Kind::FreePath,
        Kind::LimitLaw,
        Kind::Loops,
        Kind::Variance,
        Kind::MinAction,
        Kind::DumpPath,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Shape => "shape",
            Kind::PointProcess => "pointprocess",
            Kind::FreePath => "freepath",
            Kind::LimitLaw => "limitlaw",
            Kind::Loops => "loops",
            Kind::Variance => "variance",
            Kind::MinAction => "min-action",
            Kind::DumpPath => "dump-path",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown experiment kind `{s}`")))
    }
}

/// Source of the right slope `s` for the limit law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlopeChoice {
    /// Estimated from a shape run.
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndpointChoice {
    Free,
    Fixed(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub env: EnvParams,
    pub replicas: usize,
    pub n: usize,
    pub n_grid: Vec<usize>,
    pub alphas: Vec<f64>,
    pub ell: usize,
    pub count: usize,
    pub records: usize,
    pub x_limit: i64,
    pub s: SlopeChoice,
    pub s_ladder: Vec<usize>,
    pub s_replicas: usize,
    pub endpoint: EndpointChoice,
    pub format: Format,
    pub validate: bool,
    pub path: bool,
    pub budget: Option<u128>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

const ENV_KEYS: [&str; 5] = ["kappa", "c", "family", "q", "table"];
const KEYS: [&str; 20] = [
    "kind", "seed", "replicas", "n", "n_grid", "n_ladder", "alphas", "ell", "count", "records",
    "x_limit", "s", "s_ladder", "s_replicas", "endpoint", "format", "validate", "path", "budget",
    "threads",
];
const PATH_KEYS: [&str; 2] = ["out", "svg"];

/// Reads `key=value` lines. `#` starts a comment; `[section]` headers are
/// ignored. Keys use `_`; `-` is accepted as a synonym.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() || line.starts_with('[') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected key=value, got `{line}`")))?;
        map.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(map)
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::Parse(format!("bad entry in {key}: `{s}`"))))
        .collect()
}

fn scalar<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse(format!("bad value for {key}: `{v}`")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Parse(format!("bad value for {key}: `{v}`"))),
    }
}

impl ExperimentConfig {
    /// Builds a validated configuration; unspecified keys take the defaults
    /// of `kind`.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        for k in map.keys() {
            let known = ENV_KEYS.contains(&k.as_str())
                || KEYS.contains(&k.as_str())
                || PATH_KEYS.contains(&k.as_str());
            if !known {
                return Err(Error::Parse(format!("unknown config key `{k}`")));
            }
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let kind = Kind::parse(get("kind").ok_or_else(|| Error::Parse("missing `kind`".into()))?)?;

        let mut spec = EnvSpec::default();
        for k in ENV_KEYS {
            if let Some(v) = get(k) {
                spec.set(k, v)?;
            }
        }
        if let Some(v) = get("seed") {
            spec.set("seed", v)?;
        }
        let env = EnvParams::try_from(spec)?;

        let (def_n, def_reps, def_grid): (usize, usize, &[usize]) = match kind {
            Kind::Shape => (4000, 20, &[1000, 4000]),
            Kind::PointProcess => (100_000, 200, &[]),
            Kind::FreePath => (10_000, 20, &[1000, 3000, 10_000]),
            Kind::LimitLaw => (10_000, 50, &[]),
            Kind::Loops => (200, 10, &[]),
            Kind::Variance => (0, 100, &[]),
            Kind::MinAction | Kind::DumpPath => (100, 1, &[]),
        };
        let grid_key = if kind == Kind::Shape { "n_ladder" } else { "n_grid" };
        let other = if kind == Kind::Shape { "n_grid" } else { "n_ladder" };
        if map.contains_key(other) {
            return Err(Error::Parse(format!("`{other}` does not apply to {}", kind.name())));
        }

        let cfg = Self {
            kind,
            env,
            replicas: get("replicas").map_or(Ok(def_reps), |v| scalar("replicas", v))?,
            n: get("n").map_or(Ok(def_n), |v| scalar("n", v))?,
            n_grid: get(grid_key).map_or(Ok(def_grid.to_vec()), |v| list(grid_key, v))?,
            alphas: get("alphas").map_or(Ok(default_alphas()), |v| list("alphas", v))?,
            ell: get("ell").map_or(Ok(3), |v| scalar("ell", v))?,
            count: get("count").map_or(Ok(10), |v| scalar("count", v))?,
            records: get("records").map_or(Ok(10), |v| scalar("records", v))?,
            x_limit: get("x_limit").map_or(Ok(20_000), |v| scalar("x_limit", v))?,
            s: match get("s") {
                None | Some("auto") => SlopeChoice::Auto,
                Some(v) => SlopeChoice::Value(scalar("s", v)?),
            },
            s_ladder: get("s_ladder").map_or(Ok(vec![1000, 4000]), |v| list("s_ladder", v))?,
            s_replicas: get("s_replicas").map_or(Ok(50), |v| scalar("s_replicas", v))?,
            endpoint: match get("endpoint") {
                None | Some("free") => EndpointChoice::Free,
                Some(v) => EndpointChoice::Fixed(scalar("endpoint", v)?),
            },
            format: match get("format") {
                None | Some("csv") => Format::Csv,
                Some("json") => Format::Json,
                Some(v) => return Err(Error::Parse(format!("unknown format `{v}`"))),
            },
            validate: get("validate").map_or(Ok(false), |v| flag("validate", v))?,
            path: get("path").map_or(Ok(false), |v| flag("path", v))?,
            budget: get("budget").map(|v| scalar("budget", v)).transpose()?,
            threads: get("threads").map(|v| scalar("threads", v)).transpose()?,
            out: get("out").map(PathBuf::from),
            svg: get("svg").map(PathBuf::from),
        };
        cfg.validate_ranges()?;
        Ok(cfg)
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        Self::from_map(&parse_kv(text)?)
    }

    fn validate_ranges(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Param(m.to_string()));
        if self.replicas == 0 {
            return bad("replicas must be at least 1");
        }
        if self.budget == Some(0) {
            return bad("budget must be positive");
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1");
        }
        match self.kind {
            Kind::Shape | Kind::FreePath => {
                if self.n_grid.is_empty() || self.n_grid.contains(&0) {
                    return bad("the n grid needs positive entries");
                }
                if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("the n grid must be increasing");
                }
            }
            Kind::Loops if self.ell < 2 => return bad("ell must be at least 2"),
            Kind::Variance if self.replicas < 2 => return bad("variance needs at least 2 replicas"),
            _ => {}
        }
        if self.kind == Kind::Shape && self.alphas.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
            return bad("alphas must lie in [0, 1]");
        }
        if matches!(self.kind, Kind::LimitLaw | Kind::PointProcess | Kind::Loops | Kind::MinAction | Kind::DumpPath)
            && self.n == 0
        {
            return bad("n must be positive");
        }
        Ok(())
    }
}
