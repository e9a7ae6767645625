//! Replication harness: runs method x design x replication grids, scores
//! average and per-unit effect estimates against stored truth, and renders
//! the aggregate table.

use rayon::prelude::*;
use serde::Serialize;
use std::str::FromStr;
use std::time::Instant;

use crate::bart::{
    self, derive_seed, fit_bart, fit_probit_bart, fit_ps_bart, BartConfig,
};
use crate::bcf::{fit_bcf, BcfConfig, PropensitySource};
use crate::dgp::{gen_example1, gen_sim_study, DgpSample, Effect, Surface};
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    Bcf,
    PsBart,
    Bart,
    /// Two independent surface fits on the treated and control subsamples;
    /// tau(x) = f1(x) - f0(x) with draws paired by iteration index.
    BartF0F1,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Bcf, Method::PsBart, Method::Bart, Method::BartF0F1];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Bcf => "bcf",
            Method::PsBart => "ps-bart",
            Method::Bart => "bart",
            Method::BartF0F1 => "bart-f0f1",
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Method> {
        match s {
            "bcf" => Ok(Method::Bcf),
            "ps-bart" => Ok(Method::PsBart),
            "bart" => Ok(Method::Bart),
            "bart-f0f1" => Ok(Method::BartF0F1),
            other => Err(Error::validation(format!(
                "unknown method '{other}' (expected bcf|ps-bart|bart|bart-f0f1)"
            ))),
        }
    }
}

/// A data-generating design for the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgpSpec {
    Example1 { n: usize },
    SimStudy { n: usize, effect: Effect, surface: Surface },
}

impl DgpSpec {
    pub fn label(&self) -> String {
        match self {
            DgpSpec::Example1 { n } => format!("example1-n{n}"),
            DgpSpec::SimStudy { n, effect, surface } => {
                let e = match effect {
                    Effect::Homogeneous => "hom",
                    Effect::Heterogeneous => "het",
                    Effect::Zero => "zero",
                };
                let s = match surface {
                    Surface::Linear => "lin",
                    Surface::Nonlinear => "nonlin",
                };
                format!("sim-{e}-{s}-n{n}")
            }
        }
    }

    /// Parses the compact label grammar produced by `label()`:
    /// `example1-n<N>` or `sim-<hom|het|zero>-<lin|nonlin>-n<N>`.
    pub fn parse_label(s: &str) -> Result<DgpSpec> {
        let bad = || Error::validation(format!("unknown DGP '{s}' (expected example1-n<N> or sim-<hom|het|zero>-<lin|nonlin>-n<N>)"));
        let parse_n = |tok: &str| -> Result<usize> {
            tok.strip_prefix('n')
                .and_then(|v| v.parse().ok())
                .ok_or_else(bad)
        };
        let parts: Vec<&str> = s.split('-').collect();
        match parts.as_slice() {
            ["example1", ntok] => Ok(DgpSpec::Example1 { n: parse_n(ntok)? }),
            ["sim", e, sf, ntok] => {
                let effect = match *e {
                    "hom" => Effect::Homogeneous,
                    "het" => Effect::Heterogeneous,
                    "zero" => Effect::Zero,
                    _ => return Err(bad()),
                };
                let surface = match *sf {
                    "lin" => Surface::Linear,
                    "nonlin" => Surface::Nonlinear,
                    _ => return Err(bad()),
                };
                Ok(DgpSpec::SimStudy {
                    n: parse_n(ntok)?,
                    effect,
                    surface,
                })
            }
            _ => Err(bad()),
        }
    }

    pub fn generate(&self, seed: u64) -> Result<DgpSample> {
        match *self {
            DgpSpec::Example1 { n } => gen_example1(n, seed),
            DgpSpec::SimStudy { n, effect, surface } => gen_sim_study(n, effect, surface, seed),
        }
    }
}

/// Shared chain budget for every fit in the grid.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub dgps: Vec<DgpSpec>,
    pub reps: usize,
    pub seed: u64,
    pub jobs: usize,
    pub iterations: usize,
    pub burn_in: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            methods: Method::ALL.to_vec(),
            dgps: vec![],
            reps: 50,
            seed: 0,
            jobs: 1,
            iterations: 2000,
            burn_in: 1000,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::validation("method set must be nonempty"));
        }
        if self.dgps.is_empty() {
            return Err(Error::validation("at least one DGP required"));
        }
        if self.reps == 0 {
            return Err(Error::validation("reps must be >= 1"));
        }
        if self.iterations <= self.burn_in {
            return Err(Error::validation("iterations must exceed burn_in"));
        }
        Ok(())
    }
}

/// Scores for one method on one replication.
#[derive(Debug, Clone, Serialize)]
pub struct MethodMetrics {
    pub ate_est: f64,
    pub ate_lower: f64,
    pub ate_upper: f64,
    pub ate_true: f64,
    pub cate_rmse: f64,
    pub cate_cover: f64,
    pub cate_len: f64,
    pub secs: f64,
}

/// One replication record (possibly failed).
#[derive(Debug, Clone, Serialize)]
pub struct RepRecord {
    pub dgp: String,
    pub method: &'static str,
    pub rep: usize,
    pub metrics: Option<MethodMetrics>,
    pub error: Option<String>,
}

/// Aggregate over successful replications for one method x DGP cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellMetrics {
    pub dgp: String,
    pub method: &'static str,
    pub reps_ok: usize,
    pub failures: usize,
    pub ate_rmse: f64,
    pub ate_bias: f64,
    pub ate_cover: f64,
    pub ate_len: f64,
    pub cate_rmse: f64,
    pub cate_cover: f64,
    pub cate_len: f64,
    pub total_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub cells: Vec<CellMetrics>,
    pub per_rep: Vec<RepRecord>,
}

impl MetricsReport {
    pub fn cell(&self, dgp_label: &str, method: Method) -> Option<&CellMetrics> {
        self.cells
            .iter()
            .find(|c| c.dgp == dgp_label && c.method == method.name())
    }
}

/// Scores tau draws (draws x n, raw units) against the truth.
pub fn score_draws(tau_draws: &[Vec<f64>], true_tau: &[f64], secs: f64) -> MethodMetrics {
    let n = true_tau.len();
    let ate_true = stats::mean(true_tau);
    let ate_draws: Vec<f64> = tau_draws.iter().map(|t| stats::mean(t)).collect();
    let ate_est = stats::mean(&ate_draws);
    let ate_lower = stats::percentile(&ate_draws, 0.025);
    let ate_upper = stats::percentile(&ate_draws, 0.975);

    let mut cate_sq = 0.0;
    let mut cover = 0.0;
    let mut len = 0.0;
    let mut unit = Vec::with_capacity(tau_draws.len());
    for i in 0..n {
        unit.clear();
        unit.extend(tau_draws.iter().map(|t| t[i]));
        let m = stats::mean(&unit);
        cate_sq += (m - true_tau[i]).powi(2);
        let lo = stats::percentile(&unit, 0.025);
        let hi = stats::percentile(&unit, 0.975);
        if lo <= true_tau[i] && true_tau[i] <= hi {
            cover += 1.0;
        }
        len += hi - lo;
    }
    MethodMetrics {
        ate_est,
        ate_lower,
        ate_upper,
        ate_true,
        cate_rmse: (cate_sq / n as f64).sqrt(),
        cate_cover: cover / n as f64,
        cate_len: len / n as f64,
        secs,
    }
}

fn bart_config(cfg: &BenchConfig, seed: u64) -> BartConfig {
    BartConfig {
        iterations: cfg.iterations,
        burn_in: cfg.burn_in,
        seed,
        ..BartConfig::default()
    }
}

fn run_method(
    method: Method,
    sample: &DgpSample,
    pi_hat: &[f64],
    cfg: &BenchConfig,
    seed: u64,
) -> Result<MethodMetrics> {
    let start = Instant::now();
    let tau_draws: Vec<Vec<f64>> = match method {
        Method::Bart => {
            let ds = sample.to_dataset()?;
            fit_bart(&ds, &bart_config(cfg, seed))?.tau
        }
        Method::PsBart => {
            let mut ds = sample.to_dataset()?;
            ds.pi_hat = Some(pi_hat.to_vec());
            fit_ps_bart(&ds, &bart_config(cfg, seed))?.tau
        }
        Method::Bcf => {
            let mut ds = sample.to_dataset()?;
            ds.pi_hat = Some(pi_hat.to_vec());
            let bcf_cfg = BcfConfig {
                iterations: cfg.iterations,
                burn_in: cfg.burn_in,
                seed,
                propensity: PropensitySource::Provided,
                ..BcfConfig::default()
            };
            fit_bcf(&ds, &bcf_cfg)?.tau
        }
        Method::BartF0F1 => {
            let ds = sample.to_dataset()?;
            bart::fit_bart_f0f1(&ds, &bart_config(cfg, seed))?
        }
    };
    Ok(score_draws(
        &tau_draws,
        &sample.true_tau,
        start.elapsed().as_secs_f64(),
    ))
}

/// Runs the full grid. Replications are independent jobs dispatched to a
/// worker pool of width `jobs`; results are merged in (dgp, rep, method)
/// order so the report is invariant to the pool width. Single-rep failures
/// are recorded, never silently dropped.
pub fn run_grid(cfg: &BenchConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::validation(format!("worker pool: {e}")))?;

    let jobs: Vec<(usize, usize)> = (0..cfg.dgps.len())
        .flat_map(|d| (0..cfg.reps).map(move |r| (d, r)))
        .collect();

    let records: Vec<Vec<RepRecord>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(d, rep)| {
                let dgp = cfg.dgps[d];
                let label = dgp.label();
                let job_key = ((d as u64) << 32) | rep as u64;
                let sample = match dgp.generate(derive_seed(cfg.seed, job_key)) {
                    Ok(s) => s,
                    Err(e) => {
                        return cfg
                            .methods
                            .iter()
                            .map(|m| RepRecord {
                                dgp: label.clone(),
                                method: m.name(),
                                rep,
                                metrics: None,
                                error: Some(e.to_string()),
                            })
                            .collect();
                    }
                };
                // one propensity fit per replication, shared by every
                // method that consumes it
                let pi_hat = if cfg
                    .methods
                    .iter()
                    .any(|m| matches!(m, Method::Bcf | Method::PsBart))
                {
                    let ds = match sample.to_dataset() {
                        Ok(ds) => ds,
                        Err(e) => {
                            return cfg
                                .methods
                                .iter()
                                .map(|m| RepRecord {
                                    dgp: label.clone(),
                                    method: m.name(),
                                    rep,
                                    metrics: None,
                                    error: Some(e.to_string()),
                                })
                                .collect();
                        }
                    };
                    let pcfg = BartConfig {
                        iterations: cfg.iterations,
                        burn_in: cfg.burn_in,
                        seed: derive_seed(cfg.seed, job_key ^ 0x70726f70),
                        ..BartConfig::default()
                    };
                    fit_probit_bart(&ds.design(), &ds.z, &pcfg)
                        .map(|f| f.pi_hat)
                        .unwrap_or_else(|_| vec![0.5; sample.n()])
                } else {
                    vec![]
                };

                cfg.methods
                    .iter()
                    .enumerate()
                    .map(|(mi, &m)| {
                        let seed = derive_seed(cfg.seed, job_key ^ ((mi as u64 + 1) << 48));
                        match run_method(m, &sample, &pi_hat, cfg, seed) {
                            Ok(metrics) => RepRecord {
                                dgp: label.clone(),
                                method: m.name(),
                                rep,
                                metrics: Some(metrics),
                                error: None,
                            },
                            Err(e) => RepRecord {
                                dgp: label.clone(),
                                method: m.name(),
                                rep,
                                metrics: None,
                                error: Some(e.to_string()),
                            },
                        }
                    })
                    .collect()
            })
            .collect()
    });

    let per_rep: Vec<RepRecord> = records.into_iter().flatten().collect();

    let mut cells = Vec::new();
    for dgp in &cfg.dgps {
        let label = dgp.label();
        for m in &cfg.methods {
            let ok: Vec<&MethodMetrics> = per_rep
                .iter()
                .filter(|r| r.dgp == label && r.method == m.name())
                .filter_map(|r| r.metrics.as_ref())
                .collect();
            let failures = per_rep
                .iter()
                .filter(|r| r.dgp == label && r.method == m.name() && r.metrics.is_none())
                .count();
            let k = ok.len();
            let kf = k as f64;
            let (mut sq, mut bias, mut cov, mut len) = (0.0, 0.0, 0.0, 0.0);
            let (mut crmse, mut ccov, mut clen, mut secs) = (0.0, 0.0, 0.0, 0.0);
            for mm in &ok {
                let err = mm.ate_est - mm.ate_true;
                sq += err * err;
                bias += err;
                if mm.ate_lower <= mm.ate_true && mm.ate_true <= mm.ate_upper {
                    cov += 1.0;
                }
                len += mm.ate_upper - mm.ate_lower;
                crmse += mm.cate_rmse;
                ccov += mm.cate_cover;
                clen += mm.cate_len;
                secs += mm.secs;
            }
            cells.push(CellMetrics {
                dgp: label.clone(),
                method: m.name(),
                reps_ok: k,
                failures,
                ate_rmse: if k > 0 { (sq / kf).sqrt() } else { f64::NAN },
                ate_bias: if k > 0 { bias / kf } else { f64::NAN },
                ate_cover: if k > 0 { cov / kf } else { f64::NAN },
                ate_len: if k > 0 { len / kf } else { f64::NAN },
                cate_rmse: if k > 0 { crmse / kf } else { f64::NAN },
                cate_cover: if k > 0 { ccov / kf } else { f64::NAN },
                cate_len: if k > 0 { clen / kf } else { f64::NAN },
                total_secs: secs,
            });
        }
    }
    Ok(MetricsReport { cells, per_rep })
}

/// Formats to two significant digits.
pub fn format_sig2(v: f64) -> String {
    if !v.is_finite() {
        return "nan".into();
    }
    if v == 0.0 {
        return "0.0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (1 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Renders the aggregate report as an aligned text table and a raw CSV.
pub fn render_table(report: &MetricsReport) -> Result<(String, String)> {
    if report.cells.is_empty() {
        return Err(Error::validation("empty report"));
    }
    let headers = [
        "dgp", "method", "reps", "fail", "ate_rmse", "ate_bias", "ate_cover", "ate_len",
        "cate_rmse", "cate_cover", "cate_len",
    ];
    let mut rows: Vec<Vec<String>> = vec![headers.iter().map(|s| s.to_string()).collect()];
    let mut csv = headers.join(",") + "\n";
    for c in &report.cells {
        rows.push(vec![
            c.dgp.clone(),
            c.method.to_string(),
            c.reps_ok.to_string(),
            c.failures.to_string(),
            format_sig2(c.ate_rmse),
            format_sig2(c.ate_bias),
            format_sig2(c.ate_cover),
            format_sig2(c.ate_len),
            format_sig2(c.cate_rmse),
            format_sig2(c.cate_cover),
            format_sig2(c.cate_len),
        ]);
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            c.dgp,
            c.method,
            c.reps_ok,
            c.failures,
            c.ate_rmse,
            c.ate_bias,
            c.ate_cover,
            c.ate_len,
            c.cate_rmse,
            c.cate_cover,
            c.cate_len
        ));
    }
    let widths: Vec<usize> = (0..headers.len())
        .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap())
        .collect();
    let mut text = String::new();
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(j, cell)| format!("{cell:>width$}", width = widths[j]))
            .collect();
        text.push_str(&line.join("  "));
        text.push('\n');
    }
    Ok((text, csv))
}
