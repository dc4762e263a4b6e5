//! Dispatch from a configuration to the owning module, producing the output
//! artifact and a short text summary.

use std::fmt::Write as _;

use lpp_core::discrepancy::{default_rectangles, poisson_compare, zeta};
use lpp_core::dp::{min_action_free, min_action_point, optimal_path_point};
use lpp_core::env::{mean_abs_f, EnvParams, Environment};
use lpp_core::error::{Error, Result};
use lpp_core::freepath::{initial_half_width, limit_law_test, run_free_paths, scaling_regression};
use lpp_core::loopdecomp::{decompose, random_instance, validate};
use lpp_core::paths::LazyPath;
use lpp_core::shape::{
    check_bounds, check_concavity, check_corner, check_nonlinearity, detect_flat_edge, estimate_s,
    estimate_shape, ShapeCurve, ShapeEstimate, ShapeRun,
};
use serde_json::json;

use crate::config::{EndpointChoice, ExperimentConfig, Format, Kind, SlopeChoice};
use crate::svg::{line_chart, Series};
use crate::variance::variance_study;

/// Primary artifact plus optional SVG and a summary for the terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub artifact: String,
    pub svg: Option<String>,
    pub summary: String,
}

/// Largest replica count not above `requested` that fits the budget.
pub fn fit_replicas(requested: usize, per_replica: u128, budget: Option<u128>) -> Result<usize> {
    match budget {
        None => Ok(requested),
        Some(b) => {
            let fit = (b / per_replica.max(1)).min(requested as u128) as usize;
            if fit == 0 {
                Err(Error::Budget {
                    needed: per_replica,
                    budget: b,
                })
            } else {
                Ok(fit)
            }
        }
    }
}

fn truncation_note(fit: usize, requested: usize) -> Option<String> {
    (fit < requested).then(|| format!("truncated: {fit} of {requested} replicas fit the budget"))
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    match cfg.kind {
        Kind::Shape => shape(cfg),
        Kind::PointProcess => point_process(cfg),
        Kind::FreePath => free_path(cfg),
        Kind::LimitLaw => limit_law(cfg),
        Kind::Loops => loops(cfg),
        Kind::Variance => variance(cfg),
        Kind::MinAction => min_action(cfg),
        Kind::DumpPath => dump_path(cfg),
    }
}

fn correction_exponent(p: &EnvParams) -> f64 {
    zeta(p.kappa()) - 1.0
}

fn shape_run(p: &EnvParams, ladder: &[usize], alphas: &[f64], replicas: usize, budget: Option<u128>) -> Result<(ShapeEstimate, usize)> {
    let n = *ladder.last().unwrap() as u128;
    let fit = fit_replicas(replicas, n * (n + 2), budget)?;
    let run = ShapeRun {
        alphas: alphas.to_vec(),
        n_ladder: ladder.to_vec(),
        replicas: fit,
        budget,
    };
    Ok((estimate_shape(p, &run)?, fit))
}

/// The extrapolated curve from the top two rungs, or the raw top rung.
fn best_curve(est: &ShapeEstimate, p: &EnvParams) -> Result<(ShapeCurve, &'static str)> {
    let k = est.n_values.len();
    if k >= 2 {
        Ok((est.extrapolated(k - 2, k - 1, correction_exponent(p))?, "extrapolated"))
    } else {
        Ok((est.curve(0), "raw"))
    }
}

fn shape(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let p = &cfg.env;
    let (est, fit) = shape_run(p, &cfg.n_grid, &cfg.alphas, cfg.replicas, cfg.budget)?;
    let mut csv = String::new();
    if let Some(note) = truncation_note(fit, cfg.replicas) {
        let _ = writeln!(csv, "# {note}");
    }
    csv.push_str(&est.to_csv());

    let (curve, which) = best_curve(&est, p)?;
    let c = p.c();
    let mut s = String::new();
    let top = est.n_values.len() - 1;
    let _ = writeln!(s, "shape: kappa={} c={} replicas={} ladder={:?}", p.kappa(), c, fit, est.n_values);
    if let Some(a0) = est.alpha_index(0.0) {
        let (l, se) = est.lambda_hat(a0, top);
        let _ = writeln!(s, "raw lambda_hat(0) at n={}: {l:.5} +- {se:.5}", est.n_values[top]);
    }
    let bounds = check_bounds(&curve, c, mean_abs_f(p));
    let ok = bounds.iter().filter(|b| b.lower_ok && b.upper_ok).count();
    let _ = writeln!(s, "{which} curve: bounds hold at {ok}/{} slopes", bounds.len());
    let corner = check_corner(&curve, p);
    if let Some(sl) = &corner.right_slope {
        let _ = writeln!(s, "right slope s = {:.4} +- {:.4}", sl.s, sl.stderr);
    }
    let nl = check_nonlinearity(&curve, c);
    let _ = writeln!(s, "nonlinearity failures at {:?}", nl.failures);
    let conc = check_concavity(&est.curve(top));
    let _ = writeln!(s, "concavity violations (raw): {}", conc.iter().filter(|r| !r.ok).count());
    let flat = detect_flat_edge(&curve, c);
    let _ = writeln!(
        s,
        "flat edge: alpha0_hat={} k_hat={:.4}{}",
        flat.alpha0_hat,
        flat.k_hat,
        if flat.inconclusive { " (inconclusive)" } else { "" }
    );

    let svg = cfg.svg.as_ref().map(|_| {
        let mut series: Vec<Series> = (0..est.n_values.len())
            .map(|i| {
                let cv = est.curve(i);
                Series {
                    label: format!("n = {}", est.n_values[i]),
                    points: cv.alphas.iter().copied().zip(cv.lambda.iter().copied()).collect(),
                }
            })
            .collect();
        if which == "extrapolated" {
            series.push(Series {
                label: "extrapolated".into(),
                points: curve.alphas.iter().copied().zip(curve.lambda.iter().copied()).collect(),
            });
        }
        line_chart("Lambda estimates", "alpha", "lambda", &series)
    });
    Ok(RunOutput {
        artifact: csv,
        svg,
        summary: s,
    })
}

fn point_process(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let p = &cfg.env;
    let rects = default_rectangles(p);
    let cmp = poisson_compare(p, cfg.n, &rects, cfg.replicas)?;
    let mut s = format!("pointprocess: n={} replicas={}\n", cfg.n, cfg.replicas);
    for r in &cmp.rows {
        let _ = writeln!(
            s,
            "rect {:?}: lambda={:.3} mean={:.3} var/mean={:.3} avoid={:.3} (theory {:.3})",
            r.rectangle,
            r.lambda,
            r.mean,
            r.var_ratio(),
            r.avoid_emp,
            r.avoid_theory
        );
    }
    let artifact = serde_json::to_string_pretty(&cmp)? + "\n";
    Ok(RunOutput {
        artifact,
        svg: None,
        summary: s,
    })
}

fn free_path_cost(p: &EnvParams, n: usize) -> u128 {
    n as u128 * (2 * initial_half_width(p.kappa(), n) as u128 + 2)
}

fn free_path(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let p = &cfg.env;
    let n_max = *cfg.n_grid.last().unwrap();
    let fit = fit_replicas(cfg.replicas, free_path_cost(p, n_max), cfg.budget)?;
    let run = run_free_paths(p, &cfg.n_grid, fit)?;
    let mut csv = String::new();
    if let Some(note) = truncation_note(fit, cfg.replicas) {
        let _ = writeln!(csv, "# {note}");
    }
    csv.push_str(&run.to_csv());
    let mut s = format!("freepath: kappa={} replicas={fit} grid={:?}\n", p.kappa(), cfg.n_grid);
    for (j, n) in cfg.n_grid.iter().enumerate() {
        let _ = writeln!(s, "n={n}: settled fraction {:.3}", run.settled_fraction(j));
    }
    if let Ok(rep) = scaling_regression(&run, 200, p.seed()) {
        let _ = writeln!(
            s,
            "slopes: |ell| {:.3}, d {:.3}, cn+A {:.3} (zeta = {:.4})",
            rep.ell.slope, rep.d.slope, rep.action.slope, rep.zeta
        );
    }
    Ok(RunOutput {
        artifact: csv,
        svg: None,
        summary: s,
    })
}

fn limit_law(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let p = &cfg.env;
    let (s_val, s_se, source) = match cfg.s {
        SlopeChoice::Value(v) => (v, 0.0, "given".to_string()),
        SlopeChoice::Auto => {
            let (est, fit) = shape_run(p, &cfg.s_ladder, &lpp_core::shape::default_alphas(), cfg.s_replicas, cfg.budget)?;
            let (curve, which) = best_curve(&est, p)?;
            let e = estimate_s(&curve, p.c(), 0.2)?;
            (e.s, e.stderr, format!("{which} shape curve, ladder {:?}, {fit} replicas", est.n_values))
        }
    };
    let fit = fit_replicas(cfg.replicas, free_path_cost(p, cfg.n), cfg.budget)?;
    let run = run_free_paths(p, &[cfg.n], fit)?;
    let stats: Vec<_> = run.column(0).cloned().collect();
    let rep = limit_law_test(p, &stats, s_val, s_se)?;
    let summary = format!(
        "limitlaw: n={} replicas={fit} s={s_val:.4} ({source}) h={:.4} KS={:.4} band {:?}\n",
        cfg.n, rep.h, rep.ks, rep.ks_band
    );
    let artifact = serde_json::to_string_pretty(&json!({
        "s_source": source,
        "s_stderr": s_se,
        "truncated": truncation_note(fit, cfg.replicas),
        "report": rep,
    }))? + "\n";
    Ok(RunOutput {
        artifact,
        svg: None,
        summary,
    })
}

fn loops(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let p = &cfg.env;
    let n = cfg.n as i64;
    let t = (cfg.ell * cfg.n) as u128;
    let fit = fit_replicas(cfg.count, t * t * (cfg.n as u128 + 2), cfg.budget)?;
    let mut out = String::new();
    if let Some(note) = truncation_note(fit, cfg.count) {
        let _ = writeln!(out, "# {note}");
    }
    let mut totals = vec![(0usize, 0usize); 11];
    let (mut eq, mut checks) = (0, 0);
    if !cfg.validate {
        out.push_str("path,index,site,dstar,a,z,len,e,s\n");
    }
    for k in 0..fit {
        let (env, path) = random_instance(p, n, cfg.ell, k as u64)?;
        let dec = decompose(env.potential(), p.c(), &path, n)?;
        if cfg.validate {
            let rep = validate(&dec, env.potential(), p.c(), &path)?;
            for (tot, it) in totals.iter_mut().zip(&rep.items) {
                tot.0 += it.checked;
                tot.1 += it.failed;
            }
            eq += rep.dp_equalities;
            checks += rep.dp_checks;
        } else {
            for (i, st) in dec.steps.iter().enumerate().filter(|(_, st)| !st.is_empty()) {
                let _ = writeln!(
                    out,
                    "{k},{i},{},{:.10},{},{},{},{},{:.10}",
                    st.site,
                    st.dstar,
                    st.a,
                    st.z,
                    st.len(),
                    st.e,
                    st.s
                );
            }
        }
    }
    let mut summary = format!("loops: n={} ell={} paths={fit}\n", cfg.n, cfg.ell);
    if cfg.validate {
        out.push_str("item,checked,failed,status\n");
        for (i, (c, f)) in totals.iter().enumerate() {
            let status = if *f == 0 && *c > 0 { "pass" } else { "FAIL" };
            let _ = writeln!(out, "{},{c},{f},{status}", i + 1);
        }
        let _ = writeln!(out, "# projected DP equal to projected walk at {eq} of {checks} indices");
        let failed = totals.iter().filter(|(c, f)| *f > 0 || *c == 0).count();
        let _ = writeln!(summary, "{} of 11 items pass", 11 - failed);
    }
    Ok(RunOutput {
        artifact: out,
        svg: None,
        summary,
    })
}

fn variance(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let st = variance_study(&cfg.env, cfg.records, cfg.x_limit, cfg.replicas, cfg.budget)?;
    let mut csv = String::new();
    if st.truncated > 0 {
        let _ = writeln!(csv, "# truncated: {} record edges dropped to fit the budget", st.truncated);
    }
    csv.push_str("record,x,d,horizon,mean,variance,variance_stderr,excess_mean,excess_variance,excess_variance_stderr,replicas\n");
    for r in &st.rows {
        let _ = writeln!(
            csv,
            "{},{},{:.10},{},{:.10},{:.10},{:.10},{:.10},{:.10},{:.10},{}",
            r.record,
            r.x,
            r.d,
            r.horizon,
            r.mean,
            r.variance,
            r.variance_stderr,
            r.excess_mean,
            r.excess_variance,
            r.excess_variance_stderr,
            r.replicas
        );
    }
    let summary = format!(
        "variance: seed={} records={} last x={}\n",
        st.seed,
        st.rows.len(),
        st.rows.last().map_or(0, |r| r.x)
    );
    Ok(RunOutput {
        artifact: csv,
        svg: None,
        summary,
    })
}

fn point_env(cfg: &ExperimentConfig) -> Result<Environment> {
    let n = cfg.n as i64;
    let p = cfg.env.clone().with_window(-n, n)?.with_horizon(cfg.n)?;
    Environment::sample(&p)
}

fn optimal(cfg: &ExperimentConfig, env: &Environment) -> Result<(f64, i64, Option<LazyPath>)> {
    let pot = env.potential();
    let (value, end) = match cfg.endpoint {
        EndpointChoice::Free => min_action_free(pot, cfg.n)?,
        EndpointChoice::Fixed(k) => (min_action_point(pot, cfg.n, k)?, k),
    };
    let path = if cfg.path || cfg.kind == Kind::DumpPath {
        Some(optimal_path_point(pot, cfg.n, end)?.path)
    } else {
        None
    };
    Ok((value, end, path))
}

fn min_action(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let env = point_env(cfg)?;
    let (value, endpoint, path) = optimal(cfg, &env)?;
    let mut v = json!({ "n": cfg.n, "value": value, "endpoint": endpoint });
    if let Some(p) = path {
        v["path"] = json!(p.positions());
    }
    Ok(RunOutput {
        artifact: serde_json::to_string_pretty(&v)? + "\n",
        svg: None,
        summary: format!("min-action: n={} value={value} endpoint={endpoint}\n", cfg.n),
    })
}

fn dump_path(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let env = point_env(cfg)?;
    let (value, endpoint, path) = optimal(cfg, &env)?;
    let path = path.expect("dump-path always backtracks");
    let artifact = match cfg.format {
        Format::Csv => path.to_csv(),
        Format::Json => path.to_json() + "\n",
    };
    Ok(RunOutput {
        artifact,
        svg: None,
        summary: format!("dump-path: n={} value={value} endpoint={endpoint}\n", cfg.n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_fitting() {
        assert_eq!(fit_replicas(10, 100, None).unwrap(), 10);
        assert_eq!(fit_replicas(10, 100, Some(350)).unwrap(), 3);
        assert_eq!(fit_replicas(2, 100, Some(10_000)).unwrap(), 2);
        assert!(matches!(fit_replicas(2, 100, Some(50)), Err(Error::Budget { .. })));
    }

    #[test]
    fn tiny_shape_has_all_rows() {
        let cfg = ExperimentConfig::from_kv("kind=shape\nn_ladder=20,40\nalphas=0,0.5,1\nreplicas=3\nsvg=x.svg").unwrap();
        let out = run(&cfg).unwrap();
        // header + (5 signed slopes) x (2 horizons)
        assert_eq!(out.artifact.lines().count(), 1 + 5 * 2);
        assert!(out.svg.unwrap().contains("extrapolated"));
    }

    #[test]
    fn min_action_and_path_agree() {
        let cfg = ExperimentConfig::from_kv("kind=min-action\nn=30\npath=true\nseed=4").unwrap();
        let out = run(&cfg).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.artifact).unwrap();
        let cfg = ExperimentConfig::from_kv("kind=dump-path\nn=30\nseed=4\nformat=json").unwrap();
        let p = LazyPath::from_json(&run(&cfg).unwrap().artifact).unwrap();
        let xs: Vec<i64> = v["path"].as_array().unwrap().iter().map(|x| x.as_i64().unwrap()).collect();
        assert_eq!(xs, p.positions());
        assert_eq!(v["endpoint"].as_i64().unwrap(), p.end());
    }
}
