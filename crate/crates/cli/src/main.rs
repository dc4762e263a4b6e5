use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lpp_cli::config::{parse_kv, ExperimentConfig};
use lpp_cli::run::run;

#[derive(Parser)]
#[command(name = "lpp", version, about = "Simulations of last passage percolation in the potential F(x)B(i)")]
struct Cli {
    /// Master seed; every experiment is a pure function of config and seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Maximum DP cell updates.
    #[arg(long, global = true)]
    budget: Option<u128>,
    /// Output file for the main artifact (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// key=value configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Lambda(alpha) estimates on a slope grid (CSV, optional SVG).
    Shape(Exp),
    /// Rescaled small-discrepancy counts against the Poisson limit (JSON).
    Pointprocess(Exp),
    /// Free-endpoint path statistics per replica (CSV).
    Freepath(Exp),
    /// Rescaled excess action against the limit law (JSON).
    Limitlaw(Exp),
    /// Loop decompositions of optimal paths, optionally validated.
    Loops(Exp),
    /// Sign variance of the action to settle on record edges (CSV).
    Variance(Exp),
    /// Minimal action from the origin (JSON).
    MinAction(Exp),
    /// One optimal path (CSV or JSON).
    DumpPath(Exp),
}

#[derive(Args, Default)]
struct Exp {
    #[arg(long, allow_hyphen_values = true)]
    kappa: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    /// edge_power, uniform or custom_table.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    q: Option<f64>,
    /// Comma-separated density profile for custom_table.
    #[arg(long)]
    table: Option<String>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated horizons (freepath).
    #[arg(long)]
    n_grid: Option<String>,
    /// Comma-separated horizons (shape).
    #[arg(long)]
    n_ladder: Option<String>,
    #[arg(long)]
    alphas: Option<String>,
    #[arg(long)]
    ell: Option<usize>,
    /// Number of paths (loops).
    #[arg(long)]
    count: Option<usize>,
    /// Number of record edges (variance).
    #[arg(long)]
    records: Option<usize>,
    #[arg(long)]
    x_limit: Option<i64>,
    /// `auto` or a value.
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    s_ladder: Option<String>,
    #[arg(long)]
    s_replicas: Option<usize>,
    /// `free` or a site.
    #[arg(long, allow_hyphen_values = true)]
    endpoint: Option<String>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    validate: bool,
    /// Include the optimal path (min-action).
    #[arg(long)]
    path: bool,
    /// Also write an SVG chart (shape).
    #[arg(long)]
    svg: Option<PathBuf>,
}

impl Exp {
    fn insert_into(self, m: &mut BTreeMap<String, String>) {
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("kappa", self.kappa.map(|v| v.to_string()));
        put("c", self.c.map(|v| v.to_string()));
        put("family", self.family);
        put("q", self.q.map(|v| v.to_string()));
        put("table", self.table);
        put("replicas", self.replicas.map(|v| v.to_string()));
        put("n", self.n.map(|v| v.to_string()));
        put("n_grid", self.n_grid);
        put("n_ladder", self.n_ladder);
        put("alphas", self.alphas);
        put("ell", self.ell.map(|v| v.to_string()));
        put("count", self.count.map(|v| v.to_string()));
        put("records", self.records.map(|v| v.to_string()));
        put("x_limit", self.x_limit.map(|v| v.to_string()));
        put("s", self.s);
        put("s_ladder", self.s_ladder);
        put("s_replicas", self.s_replicas.map(|v| v.to_string()));
        put("endpoint", self.endpoint);
        put("format", self.format);
        put("validate", self.validate.then(|| "true".to_string()));
        put("path", self.path.then(|| "true".to_string()));
        put("svg", self.svg.map(|p| p.display().to_string()));
    }
}

fn build_config(cli: Cli) -> Result<ExperimentConfig, String> {
    let mut map = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            parse_kv(&text).map_err(|e| e.to_string())?
        }
        None => BTreeMap::new(),
    };
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            map.insert(k.to_string(), v);
        }
    };
    put("seed", cli.seed.map(|v| v.to_string()));
    put("threads", cli.threads.map(|v| v.to_string()));
    put("budget", cli.budget.map(|v| v.to_string()));
    put("out", cli.out.map(|p| p.display().to_string()));
    if let Some(cmd) = cli.command {
        let (kind, exp) = match cmd {
            Command::Shape(e) => ("shape", e),
            Command::Pointprocess(e) => ("pointprocess", e),
            Command::Freepath(e) => ("freepath", e),
            Command::Limitlaw(e) => ("limitlaw", e),
            Command::Loops(e) => ("loops", e),
            Command::Variance(e) => ("variance", e),
            Command::MinAction(e) => ("min-action", e),
            Command::DumpPath(e) => ("dump-path", e),
        };
        map.insert("kind".into(), kind.into());
        exp.insert_into(&mut map);
    } else if !map.contains_key("kind") {
        return Err("no experiment given: pass a subcommand or set `kind` in --config".into());
    }
    ExperimentConfig::from_map(&map).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(t) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let out = match run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let write = |path: &PathBuf, text: &str| {
        std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
    };
    let result = match &cfg.out {
        Some(p) => write(p, &out.artifact),
        None => {
            print!("{}", out.artifact);
            Ok(())
        }
    }
    .and_then(|_| match (&cfg.svg, &out.svg) {
        (Some(p), Some(svg)) => write(p, svg),
        _ => Ok(()),
    });
    if let Err(e) = result {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    eprint!("{}", out.summary);
    ExitCode::SUCCESS
}
