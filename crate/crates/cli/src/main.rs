//! `bcf`: fit causal forest and BART models, generate synthetic datasets,
//! run replication benchmarks, analyze linear shrinkage bias, and summarize
//! posterior effect draws.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 I/O error.

mod config;
mod manifest;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bcf_core::bart::{fit_bart, fit_bart_f0f1, fit_probit_bart, fit_ps_bart, BartConfig};
use bcf_core::bcf::{fit_bcf, BcfConfig, PropensitySource};
use bcf_core::bench::{render_table, run_grid, BenchConfig, DgpSpec, Method};
use bcf_core::data::{load_csv, Dataset};
use bcf_core::dgp::{gen_example1, gen_sim_study, DgpSample, Effect, Surface};
use bcf_core::ric;
use bcf_core::stats;
use bcf_core::summarize::{default_min_leaf, fit_summary_tree, subgroup_contrast};
use bcf_core::{Error, Result};

use config::FileConfig;
use manifest::{write_atomic, RunManifest};

#[derive(Parser)]
#[command(name = "bcf", version, about = "Causal forest estimation toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a CSV dataset and write posterior draws + summary.
    Fit(FitArgs),
    /// Generate a synthetic dataset with stored ground truth.
    Simulate(SimulateArgs),
    /// Run a method x replication benchmark grid and tabulate metrics.
    Bench(BenchArgs),
    /// Closed-form and Monte-Carlo shrinkage-bias report for the linear model.
    Ric(RicArgs),
    /// Fit-the-fit tree and subgroup contrasts over posterior effect draws.
    Summarize(SummarizeArgs),
    /// Estimate treatment propensities with probit BART.
    Propensity(PropensityArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Output directory (created if missing); all artifacts land here.
    #[arg(long)]
    out: PathBuf,
    /// Flat key=value config file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    data: PathBuf,
    /// Outcome column name.
    #[arg(long)]
    outcome: Option<String>,
    /// Treatment column name (values must be 0/1).
    #[arg(long)]
    treatment: Option<String>,
    /// Column holding externally estimated propensities.
    #[arg(long)]
    propensity_column: Option<String>,
    /// Propensity source when no column is given: probit-bart | logistic.
    #[arg(long)]
    propensity_source: Option<String>,
    /// Model: bcf | bart | ps-bart | bart-f0f1.
    #[arg(long)]
    model: Option<String>,
    /// Total MCMC iterations per chain (including burn-in).
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Design family: example1 | sim61.
    #[arg(long)]
    dgp: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// sim61 effect: homogeneous | heterogeneous | zero.
    #[arg(long)]
    effect: Option<String>,
    /// sim61 prognostic surface: linear | nonlinear.
    #[arg(long)]
    surface: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated subset of bcf,ps-bart,bart,bart-f0f1.
    #[arg(long)]
    methods: Option<String>,
    /// Design family (example1 | sim61) or a compact label like
    /// sim-het-nonlin-n250; may be a comma-separated list of labels.
    #[arg(long)]
    dgp: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    effect: Option<String>,
    #[arg(long)]
    surface: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    /// Worker-pool width for replication jobs.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
}

#[derive(Args)]
struct RicArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Sample size of the randomized instance.
    #[arg(long)]
    n: Option<usize>,
    /// Number of control covariates.
    #[arg(long)]
    p: Option<usize>,
    /// Monte-Carlo outcome draws.
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Args)]
struct SummarizeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Posterior draw CSV produced by `fit` (tau_* columns).
    #[arg(long)]
    draws: PathBuf,
    /// The dataset the fit was run on (for covariates).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long)]
    treatment: Option<String>,
    #[arg(long)]
    max_depth: Option<usize>,
    /// Minimum rows per leaf; defaults to max(25, n/40).
    #[arg(long)]
    min_leaf: Option<usize>,
    /// Subgroup predicate like 'x1<=0.5' (design-column name).
    #[arg(long)]
    group1: Option<String>,
    /// Second subgroup predicate; with --group1, emits a contrast report.
    #[arg(long)]
    group2: Option<String>,
}

#[derive(Args)]
struct PropensityArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long)]
    treatment: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        let code = match err {
            Error::Io(_) | Error::Csv(_) => 2,
            _ => 1,
        };
        std::process::exit(code);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Ric(a) => cmd_ric(a),
        Command::Summarize(a) => cmd_summarize(a),
        Command::Propensity(a) => cmd_propensity(a),
    }
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

#[derive(Serialize)]
struct VectorStats {
    mean: f64,
    p2_5: f64,
    p50: f64,
    p97_5: f64,
}

fn vector_stats(v: &[f64]) -> VectorStats {
    VectorStats {
        mean: stats::mean(v),
        p2_5: stats::percentile(v, 0.025),
        p50: stats::percentile(v, 0.5),
        p97_5: stats::percentile(v, 0.975),
    }
}

#[derive(Serialize)]
struct UnitSummary {
    mean: f64,
    lower95: f64,
    upper95: f64,
}

#[derive(Serialize)]
struct FitSummary {
    model: String,
    n: usize,
    kept_draws: usize,
    seed: u64,
    ate: VectorStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<VectorStats>,
    units: Vec<UnitSummary>,
}

fn unit_summaries(tau: &[Vec<f64>]) -> Vec<UnitSummary> {
    let n = tau[0].len();
    let mut out = Vec::with_capacity(n);
    let mut buf = Vec::with_capacity(tau.len());
    for i in 0..n {
        buf.clear();
        buf.extend(tau.iter().map(|t| t[i]));
        out.push(UnitSummary {
            mean: stats::mean(&buf),
            lower95: stats::percentile(&buf, 0.025),
            upper95: stats::percentile(&buf, 0.975),
        });
    }
    out
}

/// Writes the posterior draw table: one row per kept draw with iteration,
/// optional chain/sigma/scale columns, then tau_1..tau_n.
fn write_draws_csv(
    path: &Path,
    chain: Option<&[usize]>,
    sigma: Option<&[f64]>,
    extras: &[(&str, &[f64])],
    tau: &[Vec<f64>],
) -> Result<()> {
    let n = tau[0].len();
    let mut header = vec!["iteration".to_string()];
    if chain.is_some() {
        header.push("chain".into());
    }
    if sigma.is_some() {
        header.push("sigma".into());
    }
    for (name, _) in extras {
        header.push((*name).into());
    }
    for i in 0..n {
        header.push(format!("tau_{}", i + 1));
    }
    let mut body = header.join(",") + "\n";
    for (k, t) in tau.iter().enumerate() {
        let mut row = vec![k.to_string()];
        if let Some(c) = chain {
            row.push(c[k].to_string());
        }
        if let Some(s) = sigma {
            row.push(format!("{}", s[k]));
        }
        for (_, v) in extras {
            row.push(format!("{}", v[k]));
        }
        for &v in t {
            row.push(format!("{v}"));
        }
        body.push_str(&row.join(","));
        body.push('\n');
    }
    write_atomic(path, body.as_bytes())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let cfg = FileConfig::load(a.common.config.as_deref())?;
    let outcome = cfg.resolve(a.outcome, "outcome", "y".to_string())?;
    let treatment = cfg.resolve(a.treatment, "treatment", "z".to_string())?;
    let model = cfg.resolve(a.model, "model", "bcf".to_string())?;
    let iterations = cfg.resolve(a.iterations, "iterations", 2000usize)?;
    let burn_in = cfg.resolve(a.burn_in, "burn-in", 1000usize)?;
    let chains = cfg.resolve(a.chains, "chains", 1usize)?;
    let seed = cfg.resolve(a.common.seed, "seed", 0u64)?;
    let prop_col = cfg.resolve_opt(a.propensity_column, "propensity-column")?;
    let prop_source = cfg.resolve(
        a.propensity_source,
        "propensity-source",
        "probit-bart".to_string(),
    )?;

    ensure_out(&a.common.out)?;
    let mut manifest = RunManifest::new("fit", seed);
    manifest.digest_input(&a.data)?;
    manifest.set("data", a.data.display());
    manifest.set("outcome", &outcome);
    manifest.set("treatment", &treatment);
    manifest.set("model", &model);
    manifest.set("iterations", iterations);
    manifest.set("burn-in", burn_in);
    manifest.set("chains", chains);

    let ds = load_csv(&a.data, &outcome, &treatment, prop_col.as_deref(), &[])?;
    let n = ds.n();

    let summary = match model.as_str() {
        "bcf" => {
            let source = if prop_col.is_some() {
                PropensitySource::Provided
            } else {
                match prop_source.as_str() {
                    "probit-bart" => PropensitySource::ProbitBart,
                    "logistic" => PropensitySource::Logistic,
                    other => {
                        return Err(Error::validation(format!(
                            "unknown propensity source '{other}'"
                        )))
                    }
                }
            };
            manifest.set("propensity-source", format!("{source:?}"));
            let bcf_cfg = BcfConfig {
                iterations,
                burn_in,
                chains,
                seed,
                propensity: source,
                ..BcfConfig::default()
            };
            let draws = fit_bcf(&ds, &bcf_cfg)?;
            write_draws_csv(
                &a.common.out.join("draws.csv"),
                Some(&draws.chain),
                Some(&draws.sigma),
                &[("s_mu", &draws.s_mu), ("s_tau", &draws.s_tau)],
                &draws.tau,
            )?;
            let pi_body = "unit,pi_hat\n".to_string()
                + &draws
                    .pi_hat
                    .iter()
                    .enumerate()
                    .map(|(i, p)| format!("{},{}", i + 1, p))
                    .collect::<Vec<_>>()
                    .join("\n")
                + "\n";
            write_atomic(&a.common.out.join("pi_hat.csv"), pi_body.as_bytes())?;
            let ate: Vec<f64> = draws.tau.iter().map(|t| stats::mean(t)).collect();
            FitSummary {
                model,
                n,
                kept_draws: draws.tau.len(),
                seed,
                ate: vector_stats(&ate),
                sigma: Some(vector_stats(&draws.sigma)),
                units: unit_summaries(&draws.tau),
            }
        }
        "bart" | "ps-bart" => {
            let bart_cfg = BartConfig {
                iterations,
                burn_in,
                chains,
                seed,
                ..BartConfig::default()
            };
            let draws = if model == "bart" {
                fit_bart(&ds, &bart_cfg)?
            } else {
                fit_ps_bart(&ds, &bart_cfg)?
            };
            write_draws_csv(
                &a.common.out.join("draws.csv"),
                Some(&draws.chain),
                Some(&draws.sigma),
                &[],
                &draws.tau,
            )?;
            let ate: Vec<f64> = draws.tau.iter().map(|t| stats::mean(t)).collect();
            FitSummary {
                model,
                n,
                kept_draws: draws.tau.len(),
                seed,
                ate: vector_stats(&ate),
                sigma: Some(vector_stats(&draws.sigma)),
                units: unit_summaries(&draws.tau),
            }
        }
        "bart-f0f1" => {
            let bart_cfg = BartConfig {
                iterations,
                burn_in,
                chains,
                seed,
                ..BartConfig::default()
            };
            let tau = fit_bart_f0f1(&ds, &bart_cfg)?;
            write_draws_csv(&a.common.out.join("draws.csv"), None, None, &[], &tau)?;
            let ate: Vec<f64> = tau.iter().map(|t| stats::mean(t)).collect();
            FitSummary {
                model,
                n,
                kept_draws: tau.len(),
                seed,
                ate: vector_stats(&ate),
                sigma: None,
                units: unit_summaries(&tau),
            }
        }
        other => {
            return Err(Error::validation(format!(
                "unknown model '{other}' (expected bcf|bart|ps-bart|bart-f0f1)"
            )))
        }
    };

    write_atomic(
        &a.common.out.join("summary.json"),
        &serde_json::to_vec_pretty(&summary).expect("summary serializes"),
    )?;
    manifest.finish_and_write(&a.common.out)
}

fn write_truth_csv(path: &Path, s: &DgpSample) -> Result<()> {
    let mut body = "unit,true_mu,true_tau,true_pi\n".to_string();
    for i in 0..s.n() {
        body.push_str(&format!(
            "{},{},{},{}\n",
            i + 1,
            s.true_mu[i],
            s.true_tau[i],
            s.true_pi[i]
        ));
    }
    write_atomic(path, body.as_bytes())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let cfg = FileConfig::load(a.common.config.as_deref())?;
    let dgp = cfg.resolve(a.dgp, "dgp", "example1".to_string())?;
    let n = cfg.resolve(a.n, "n", 250usize)?;
    let effect = cfg.resolve(a.effect, "effect", "homogeneous".to_string())?;
    let surface = cfg.resolve(a.surface, "surface", "linear".to_string())?;
    let seed = cfg.resolve(a.common.seed, "seed", 0u64)?;

    let sample = match dgp.as_str() {
        "example1" => gen_example1(n, seed)?,
        "sim61" => gen_sim_study(n, Effect::from_str(&effect)?, Surface::from_str(&surface)?, seed)?,
        other => {
            return Err(Error::validation(format!(
                "unknown dgp '{other}' (expected example1|sim61)"
            )))
        }
    };

    ensure_out(&a.common.out)?;
    let mut manifest = RunManifest::new("simulate", seed);
    manifest.set("dgp", &dgp);
    manifest.set("n", n);
    if dgp == "sim61" {
        manifest.set("effect", &effect);
        manifest.set("surface", &surface);
    }

    let ds = sample.to_dataset()?;
    ds.write_csv(&a.common.out.join("data.csv"), "y", "z", None)?;
    write_truth_csv(&a.common.out.join("truth.csv"), &sample)?;
    manifest.finish_and_write(&a.common.out)
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let cfg = FileConfig::load(a.common.config.as_deref())?;
    let methods_str = cfg.resolve(a.methods, "methods", "bcf,ps-bart,bart,bart-f0f1".to_string())?;
    let dgp_str = cfg.resolve(a.dgp, "dgp", "example1".to_string())?;
    let n = cfg.resolve(a.n, "n", 250usize)?;
    let effect = cfg.resolve(a.effect, "effect", "homogeneous".to_string())?;
    let surface = cfg.resolve(a.surface, "surface", "linear".to_string())?;
    let reps = cfg.resolve(a.reps, "reps", 50usize)?;
    let jobs = cfg.resolve(a.jobs, "jobs", 1usize)?;
    let iterations = cfg.resolve(a.iterations, "iterations", 2000usize)?;
    let burn_in = cfg.resolve(a.burn_in, "burn-in", 1000usize)?;
    let seed = cfg.resolve(a.common.seed, "seed", 0u64)?;

    let methods = methods_str
        .split(',')
        .map(|t| Method::from_str(t.trim()))
        .collect::<Result<Vec<_>>>()?;
    let dgps = dgp_str
        .split(',')
        .map(|tok| match tok.trim() {
            "example1" => Ok(DgpSpec::Example1 { n }),
            "sim61" => Ok(DgpSpec::SimStudy {
                n,
                effect: Effect::from_str(&effect)?,
                surface: Surface::from_str(&surface)?,
            }),
            label => DgpSpec::parse_label(label),
        })
        .collect::<Result<Vec<_>>>()?;

    let bench_cfg = BenchConfig {
        methods,
        dgps,
        reps,
        seed,
        jobs,
        iterations,
        burn_in,
    };
    let report = run_grid(&bench_cfg)?;
    let (text, csv_body) = render_table(&report)?;

    ensure_out(&a.common.out)?;
    write_atomic(&a.common.out.join("table.txt"), text.as_bytes())?;
    write_atomic(&a.common.out.join("table.csv"), csv_body.as_bytes())?;

    let mut rep_body = String::from(
        "dgp,method,rep,ok,error,ate_est,ate_lower,ate_upper,ate_true,cate_rmse,cate_cover,cate_len\n",
    );
    for r in &report.per_rep {
        match &r.metrics {
            Some(m) => rep_body.push_str(&format!(
                "{},{},{},1,,{},{},{},{},{},{},{}\n",
                r.dgp,
                r.method,
                r.rep,
                m.ate_est,
                m.ate_lower,
                m.ate_upper,
                m.ate_true,
                m.cate_rmse,
                m.cate_cover,
                m.cate_len
            )),
            None => rep_body.push_str(&format!(
                "{},{},{},0,\"{}\",,,,,,,\n",
                r.dgp,
                r.method,
                r.rep,
                r.error.as_deref().unwrap_or("unknown").replace('"', "'")
            )),
        }
    }
    write_atomic(&a.common.out.join("reps.csv"), rep_body.as_bytes())?;

    let failures: usize = report.cells.iter().map(|c| c.failures).sum();
    if failures > 0 {
        eprintln!("warning: {failures} replication fit(s) failed; see reps.csv");
    }

    let mut manifest = RunManifest::new("bench", seed);
    manifest.set("methods", &methods_str);
    manifest.set("dgp", &dgp_str);
    manifest.set("n", n);
    manifest.set("reps", reps);
    manifest.set("jobs", jobs);
    manifest.set("iterations", iterations);
    manifest.set("burn-in", burn_in);
    manifest.finish_and_write(&a.common.out)?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct RicReport {
    n: usize,
    p: usize,
    seed: u64,
    mc_draws: usize,
    analytic_bias: Vec<f64>,
    mc_bias: Vec<f64>,
    mc_se: Vec<f64>,
    tau_bias_analytic: f64,
    tau_bias_mc: f64,
    debiased_first_row_max: f64,
    debiased_tau_bias: f64,
    b_shift_identity_residual: f64,
}

fn cmd_ric(a: RicArgs) -> Result<()> {
    let cfg = FileConfig::load(a.common.config.as_deref())?;
    let n = cfg.resolve(a.n, "n", 100usize)?;
    let p = cfg.resolve(a.p, "p", 5usize)?;
    let draws = cfg.resolve(a.draws, "draws", 100_000usize)?;
    let seed = cfg.resolve(a.common.seed, "seed", 0u64)?;

    let problem = ric::random_instance(n, p, seed);
    let analytic = ric::ridge_bias(&problem)?;
    let (design, theta) = problem.design();
    let mc = ric::monte_carlo_bias(&design, &problem.m, &theta, problem.sigma, draws, seed ^ 1)?;
    let z_hat = problem.z_hat()?;
    let deb = ric::debiased_design(&problem, &z_hat)?;
    let shift = ric::b_shift_decomposition(&problem, 1.0);

    let report = RicReport {
        n,
        p,
        seed,
        mc_draws: draws,
        analytic_bias: analytic.iter().cloned().collect(),
        mc_bias: mc.mc_bias.clone(),
        mc_se: mc.mc_se.clone(),
        tau_bias_analytic: analytic[0],
        tau_bias_mc: mc.mc_bias[0],
        debiased_first_row_max: deb
            .first_row_block
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v.abs())),
        debiased_tau_bias: deb.bias[0],
        b_shift_identity_residual: shift.identity_residual,
    };

    ensure_out(&a.common.out)?;
    write_atomic(
        &a.common.out.join("report.json"),
        &serde_json::to_vec_pretty(&report).expect("report serializes"),
    )?;
    let mut manifest = RunManifest::new("ric", seed);
    manifest.set("n", n);
    manifest.set("p", p);
    manifest.set("draws", draws);
    manifest.finish_and_write(&a.common.out)
}

enum Predicate {
    Le(String, f64),
    Gt(String, f64),
}

impl Predicate {
    fn parse(expr: &str) -> Result<Predicate> {
        if let Some((name, v)) = expr.split_once("<=") {
            let val = v.trim().parse().map_err(|_| {
                Error::validation(format!("bad predicate value in '{expr}'"))
            })?;
            return Ok(Predicate::Le(name.trim().to_string(), val));
        }
        if let Some((name, v)) = expr.split_once('>') {
            let val = v.trim().parse().map_err(|_| {
                Error::validation(format!("bad predicate value in '{expr}'"))
            })?;
            return Ok(Predicate::Gt(name.trim().to_string(), val));
        }
        Err(Error::validation(format!(
            "cannot parse subgroup predicate '{expr}' (use COL<=V or COL>V)"
        )))
    }

    fn rows(&self, ds: &Dataset) -> Result<Vec<usize>> {
        let design = ds.design();
        let (name, le, cut) = match self {
            Predicate::Le(n, v) => (n, true, *v),
            Predicate::Gt(n, v) => (n, false, *v),
        };
        let col = design
            .origin
            .iter()
            .position(|o| &o.name == name)
            .ok_or_else(|| Error::MissingColumn(name.clone()))?;
        Ok((0..design.n_rows())
            .filter(|&i| {
                let v = design.value(i, col);
                if le {
                    v <= cut
                } else {
                    v > cut
                }
            })
            .collect())
    }
}

/// Reads the tau_* columns of a draw CSV into draw-major rows.
fn read_tau_draws(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let tau_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("tau_"))
        .map(|(i, _)| i)
        .collect();
    if tau_cols.is_empty() {
        return Err(Error::validation("draw file has no tau_* columns"));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = tau_cols
            .iter()
            .map(|&i| {
                rec.get(i)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::validation("non-numeric tau draw"))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(row);
    }
    if out.is_empty() {
        return Err(Error::validation("draw file has no rows"));
    }
    Ok(out)
}

fn cmd_summarize(a: SummarizeArgs) -> Result<()> {
    let cfg = FileConfig::load(a.common.config.as_deref())?;
    let outcome = cfg.resolve(a.outcome, "outcome", "y".to_string())?;
    let treatment = cfg.resolve(a.treatment, "treatment", "z".to_string())?;
    let max_depth = cfg.resolve(a.max_depth, "max-depth", 3usize)?;
    let seed = cfg.resolve(a.common.seed, "seed", 0u64)?;

    let ds = load_csv(&a.data, &outcome, &treatment, None, &[])?;
    let tau_draws = read_tau_draws(&a.draws)?;
    if tau_draws[0].len() != ds.n() {
        return Err(Error::validation(format!(
            "draw file has {} units but dataset has {}",
            tau_draws[0].len(),
            ds.n()
        )));
    }
    let min_leaf = cfg.resolve(a.min_leaf, "min-leaf", default_min_leaf(ds.n()))?;

    let n = ds.n();
    let mut tau_hat = vec![0.0; n];
    for t in &tau_draws {
        for i in 0..n {
            tau_hat[i] += t[i];
        }
    }
    for v in &mut tau_hat {
        *v /= tau_draws.len() as f64;
    }

    let design = ds.design();
    let tree = fit_summary_tree(&design, &tau_hat, max_depth, min_leaf)?;

    ensure_out(&a.common.out)?;
    write_atomic(&a.common.out.join("tree.txt"), tree.to_text().as_bytes())?;
    write_atomic(
        &a.common.out.join("tree.json"),
        &serde_json::to_vec_pretty(&tree).expect("tree serializes"),
    )?;

    let mut manifest = RunManifest::new("summarize", seed);
    manifest.digest_input(&a.data)?;
    manifest.digest_input(&a.draws)?;
    manifest.set("max-depth", max_depth);
    manifest.set("min-leaf", min_leaf);

    match (&a.group1, &a.group2) {
        (Some(g1), Some(g2)) => {
            let s1 = Predicate::parse(g1)?.rows(&ds)?;
            let s2 = Predicate::parse(g2)?.rows(&ds)?;
            let contrast = subgroup_contrast(&tau_draws, &s1, &s2)?;
            let hist = "draw,diff\n".to_string()
                + &contrast
                    .draws
                    .iter()
                    .enumerate()
                    .map(|(k, d)| format!("{k},{d}"))
                    .collect::<Vec<_>>()
                    .join("\n")
                + "\n";
            write_atomic(&a.common.out.join("contrast_draws.csv"), hist.as_bytes())?;
            #[derive(Serialize)]
            struct ContrastSummary<'a> {
                group1: &'a str,
                group2: &'a str,
                n1: usize,
                n2: usize,
                mean: f64,
                lower95: f64,
                upper95: f64,
                prob_positive: f64,
            }
            let summary = ContrastSummary {
                group1: g1,
                group2: g2,
                n1: s1.len(),
                n2: s2.len(),
                mean: contrast.mean,
                lower95: contrast.lower95,
                upper95: contrast.upper95,
                prob_positive: contrast.prob_positive,
            };
            write_atomic(
                &a.common.out.join("contrast.json"),
                &serde_json::to_vec_pretty(&summary).expect("contrast serializes"),
            )?;
            manifest.set("group1", g1);
            manifest.set("group2", g2);
        }
        (None, None) => {}
        _ => {
            return Err(Error::validation(
                "--group1 and --group2 must be given together",
            ))
        }
    }
    manifest.finish_and_write(&a.common.out)
}

fn cmd_propensity(a: PropensityArgs) -> Result<()> {
    let cfg = FileConfig::load(a.common.config.as_deref())?;
    let outcome = cfg.resolve(a.outcome, "outcome", "y".to_string())?;
    let treatment = cfg.resolve(a.treatment, "treatment", "z".to_string())?;
    let iterations = cfg.resolve(a.iterations, "iterations", 2000usize)?;
    let burn_in = cfg.resolve(a.burn_in, "burn-in", 1000usize)?;
    let chains = cfg.resolve(a.chains, "chains", 1usize)?;
    let seed = cfg.resolve(a.common.seed, "seed", 0u64)?;

    let ds = load_csv(&a.data, &outcome, &treatment, None, &[])?;
    let design = ds.design();
    let bart_cfg = BartConfig {
        iterations,
        burn_in,
        chains,
        seed,
        ..BartConfig::default()
    };
    let fit = fit_probit_bart(&design, &ds.z, &bart_cfg)?;

    ensure_out(&a.common.out)?;
    let body = "unit,pi_hat\n".to_string()
        + &fit
            .pi_hat
            .iter()
            .enumerate()
            .map(|(i, p)| format!("{},{}", i + 1, p))
            .collect::<Vec<_>>()
            .join("\n")
        + "\n";
    write_atomic(&a.common.out.join("pi_hat.csv"), body.as_bytes())?;

    let mut draw_body = {
        let mut h = vec!["iteration".to_string()];
        for i in 0..ds.n() {
            h.push(format!("pi_{}", i + 1));
        }
        h.join(",") + "\n"
    };
    for (k, probs) in fit.pi_draws.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(probs.iter().map(|p| format!("{p}")));
        draw_body.push_str(&row.join(","));
        draw_body.push('\n');
    }
    write_atomic(&a.common.out.join("pi_draws.csv"), draw_body.as_bytes())?;

    let mut manifest = RunManifest::new("propensity", seed);
    manifest.digest_input(&a.data)?;
    manifest.set("iterations", iterations);
    manifest.set("burn-in", burn_in);
    manifest.set("chains", chains);
    manifest.finish_and_write(&a.common.out)
}
