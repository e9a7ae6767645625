//! End-to-end acceptance gate. Each test covers one release criterion and
//! prints a single PASS/FAIL line (run with `--nocapture` to see them on
//! success). The simulation-grid criteria run the full desk-scale
//! replication and take tens of minutes combined.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::Command;
use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bcf_core::bcf::{fit_bcf, BcfConfig};
use bcf_core::bench::{run_grid, BenchConfig, DgpSpec, Method};
use bcf_core::data::CutpointGrid;
use bcf_core::dgp::{gen_sim_study, Effect, Surface};
use bcf_core::forest::{
    leaf_suffstats, log_marginal_leaf, log_tree_prior, update_tree, Scratch, TreePrior,
    TreeUpdateCtx,
};
use bcf_core::ric;
use bcf_core::stats::{batch_means_se, chi2_pvalue, mean};
use bcf_core::summarize::{default_min_leaf, fit_summary_tree, subgroup_contrast};
use bcf_core::tree::{SplitRule, Tree};

/// Serializes the criteria so wall-clock budgets are measured without
/// contention from the harness's default parallelism.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Collects failed checks; the criterion passes iff none fail.
struct Criterion {
    num: u32,
    name: &'static str,
    failures: Vec<String>,
}

impl Criterion {
    fn new(num: u32, name: &'static str) -> Criterion {
        Criterion {
            num,
            name,
            failures: vec![],
        }
    }

    fn check(&mut self, ok: bool, msg: String) {
        if !ok {
            self.failures.push(msg);
        }
    }

    fn finish(self) {
        if self.failures.is_empty() {
            println!("acceptance {} ({}): PASS", self.num, self.name);
        } else {
            println!("acceptance {} ({}): FAIL", self.num, self.name);
            for f in &self.failures {
                println!("    - {f}");
            }
            panic!(
                "acceptance criterion {} ({}) failed:\n{}",
                self.num,
                self.name,
                self.failures.join("\n")
            );
        }
    }
}

// ---------------------------------------------------------------------------
// 1. Linear shrinkage bias: Monte Carlo agrees with the closed form, and the
//    fitted-treatment augmentation removes the treatment-coefficient bias.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_1_linear_bias_analysis() {
    let _guard = serial();
    let start = Instant::now();
    let mut c = Criterion::new(1, "linear shrinkage bias");
    for i in 0..20u64 {
        let p = [2usize, 5, 10][(i % 3) as usize];
        let problem = ric::random_instance(100, p, 1000 + i);
        let analytic = ric::ridge_bias(&problem).unwrap();
        let (design, theta) = problem.design();
        let mc = ric::monte_carlo_bias(&design, &problem.m, &theta, problem.sigma, 100_000, 50 + i)
            .unwrap();
        for j in 0..analytic.len() {
            let diff = (analytic[j] - mc.mc_bias[j]).abs();
            c.check(
                diff <= 3.0 * mc.mc_se[j] + 1e-12,
                format!(
                    "instance {i} coord {j}: |analytic - MC| = {diff:.3e} > 3 se = {:.3e}",
                    3.0 * mc.mc_se[j]
                ),
            );
        }
        let z_hat = problem.z_hat().unwrap();
        let report = ric::debiased_design(&problem, &z_hat).unwrap();
        let max_block = report
            .first_row_block
            .iter()
            .fold(0.0f64, |a, &b| a.max(b.abs()));
        c.check(
            max_block < 1e-10,
            format!("instance {i}: residual z-coefficient block {max_block:.3e} >= 1e-10"),
        );
        c.check(
            report.bias[0].abs() < 1e-10,
            format!(
                "instance {i}: treatment bias after augmentation {:.3e} >= 1e-10",
                report.bias[0]
            ),
        );
    }
    let secs = start.elapsed().as_secs_f64();
    c.check(secs < 60.0, format!("runtime {secs:.1}s >= 60s"));
    c.finish();
}

// ---------------------------------------------------------------------------
// Shared machinery for the small-tree-space criteria: exact enumeration of
// every structure reachable on a one-column, three-cutpoint grid.
// ---------------------------------------------------------------------------

fn one_col_design(xs: &[f64]) -> bcf_core::data::DesignMatrix {
    let mut dm = bcf_core::data::DesignMatrix {
        columns: vec![],
        origin: vec![],
    };
    dm.push_column("x1", xs.to_vec());
    dm
}

fn enumerate_trees(grid: &CutpointGrid) -> Vec<Tree> {
    fn expand(tree: &Tree, id: usize, bounds: &[(usize, usize)], grid: &CutpointGrid) -> Vec<Tree> {
        let mut out = vec![tree.clone()];
        for col in 0..grid.n_cols() {
            let (lo, hi) = bounds[col];
            for cut_idx in lo..hi {
                let mut grown = tree.clone();
                let (left, right) = grown.apply_grow(
                    id,
                    SplitRule {
                        column: col,
                        cut: grid.cuts[col][cut_idx],
                    },
                );
                let mut lb = bounds.to_vec();
                lb[col] = (lo, cut_idx);
                for with_left in expand(&grown, left, &lb, grid) {
                    let mut rb = bounds.to_vec();
                    rb[col] = (cut_idx + 1, hi);
                    out.extend(expand(&with_left, right, &rb, grid));
                }
            }
        }
        out
    }
    let bounds: Vec<(usize, usize)> = grid.cuts.iter().map(|c| (0, c.len())).collect();
    expand(&Tree::new(), 0, &bounds, grid)
}

fn normalized_weights(log_w: &[f64]) -> Vec<f64> {
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|lw| (lw - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

#[allow(clippy::too_many_arguments)]
fn structure_indicator_chains(
    trees: &[Tree],
    design: &bcf_core::data::DesignMatrix,
    grid: &CutpointGrid,
    y: &[f64],
    prior: &TreePrior,
    sigma: f64,
    likelihood_off: bool,
    burn_in: usize,
    kept: usize,
    thin: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let key_to_idx: HashMap<String, usize> = trees
        .iter()
        .enumerate()
        .map(|(i, t)| (t.topology_key(), i))
        .collect();
    let n = y.len();
    let mut tree = Tree::new();
    let mut fit = vec![0.0; n];
    let mut resid = y.to_vec();
    let ctx = TreeUpdateCtx {
        design,
        grid,
        prior,
        sigma,
        coeff: None,
        likelihood_off,
    };
    let mut scratch = Scratch::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..burn_in {
        update_tree(&mut tree, &mut fit, &mut resid, &ctx, &mut scratch, &mut rng);
    }
    let mut chains = vec![Vec::with_capacity(kept); trees.len()];
    for _ in 0..kept {
        for _ in 0..thin {
            update_tree(&mut tree, &mut fit, &mut resid, &ctx, &mut scratch, &mut rng);
        }
        let idx = *key_to_idx
            .get(&tree.topology_key())
            .expect("chain visited a structure missing from the enumeration");
        for (k, chain) in chains.iter_mut().enumerate() {
            chain.push(if k == idx { 1.0 } else { 0.0 });
        }
    }
    chains
}

// ---------------------------------------------------------------------------
// 2. The tree chain targets the exact posterior over structures.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_2_sampler_matches_enumerated_posterior() {
    let _guard = serial();
    let start = Instant::now();
    let mut c = Criterion::new(2, "tree sampler vs enumerated posterior");

    let design = one_col_design(&[1.0, 2.0, 3.0, 4.0]);
    let grid = CutpointGrid {
        cuts: vec![vec![1.5, 2.5, 3.5]],
    };
    let y = vec![-1.2, -0.4, 0.7, 1.5];
    let prior = TreePrior::new(0.95, 2.0, 1, 1.0);
    let sigma = 0.8;

    let trees = enumerate_trees(&grid);
    c.check(
        trees.len() == 15,
        format!("enumerated {} structures, expected 15", trees.len()),
    );

    let mut assign = Vec::new();
    let log_w: Vec<f64> = trees
        .iter()
        .map(|t| {
            let stats = leaf_suffstats(t, &design, &y, None, &mut assign);
            let marg: f64 = stats
                .iter()
                .map(|st| log_marginal_leaf(st.n, st.s, sigma, prior.leaf_scale))
                .sum();
            log_tree_prior(t, &prior, &grid) + marg
        })
        .collect();
    let exact = normalized_weights(&log_w);

    let chains = structure_indicator_chains(
        &trees, &design, &grid, &y, &prior, sigma, false, 2_000, 200_000, 1, 1776,
    );
    for (k, chain) in chains.iter().enumerate() {
        let freq = chain.iter().sum::<f64>() / chain.len() as f64;
        let se = batch_means_se(chain, 100);
        let tol = 3.0 * se + 5e-4;
        c.check(
            (freq - exact[k]).abs() <= tol,
            format!(
                "structure {k}: frequency {freq:.5} vs exact {:.5} (tol {tol:.5})",
                exact[k]
            ),
        );
    }
    let secs = start.elapsed().as_secs_f64();
    c.check(secs < 300.0, format!("runtime {secs:.1}s >= 300s"));
    c.finish();
}

// ---------------------------------------------------------------------------
// 3. With the likelihood switched off the chain recovers the structural
//    prior, for both the default and the treatment-forest settings.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_3_prior_recovery() {
    let _guard = serial();
    let mut c = Criterion::new(3, "structural prior recovery");
    let design = one_col_design(&[1.0, 2.0, 3.0, 4.0]);
    let grid = CutpointGrid {
        cuts: vec![vec![1.5, 2.5, 3.5]],
    };
    let y = vec![0.3, -0.6, 1.1, -0.2];
    let trees = enumerate_trees(&grid);
    let kept = 100_000usize;

    for (eta, beta, seed) in [(0.95, 2.0, 31u64), (0.25, 3.0, 32u64)] {
        let prior = TreePrior::new(eta, beta, 1, 1.0);
        let log_w: Vec<f64> = trees
            .iter()
            .map(|t| log_tree_prior(t, &prior, &grid))
            .collect();
        let exact = normalized_weights(&log_w);

        let chains = structure_indicator_chains(
            &trees, &design, &grid, &y, &prior, 1.0, true, 1_000, kept, 20, seed,
        );
        let mut stat = 0.0;
        let mut cells = 0usize;
        for (k, chain) in chains.iter().enumerate() {
            let expected = exact[k] * kept as f64;
            if expected < 5.0 {
                continue;
            }
            let observed: f64 = chain.iter().sum();
            stat += (observed - expected) * (observed - expected) / expected;
            cells += 1;
        }
        let p = chi2_pvalue(stat, (cells - 1) as f64);
        c.check(
            p > 0.01,
            format!("eta={eta} beta={beta}: goodness-of-fit p-value {p:.4} <= 0.01"),
        );

        // Depth-zero split probability is eta, so the share of no-split
        // draws must be 1 - eta up to binomial Monte Carlo error.
        let root_idx = trees.iter().position(|t| t.is_root_leaf()).unwrap();
        let share = chains[root_idx].iter().sum::<f64>() / kept as f64;
        let target = 1.0 - eta;
        let se = (target * (1.0 - target) / kept as f64).sqrt();
        c.check(
            (share - target).abs() <= 3.0 * se,
            format!(
                "eta={eta}: no-split share {share:.4} vs {target} (3 se = {:.4})",
                3.0 * se
            ),
        );
    }
    c.finish();
}

// ---------------------------------------------------------------------------
// 4. Targeted-selection design: the joint model beats plain BART on the
//    average effect, whose nominal intervals undercover.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_4_targeted_selection_grid() {
    let _guard = serial();
    let start = Instant::now();
    let mut c = Criterion::new(4, "targeted-selection average effect");
    let cfg = BenchConfig {
        methods: vec![Method::Bcf, Method::Bart],
        dgps: vec![DgpSpec::Example1 { n: 250 }],
        reps: 50,
        seed: 2026,
        jobs: 1,
        iterations: 2000,
        burn_in: 1000,
    };
    let report = run_grid(&cfg).unwrap();
    let label = "example1-n250";
    let bcf = report.cell(label, Method::Bcf).unwrap();
    let bart = report.cell(label, Method::Bart).unwrap();
    c.check(
        bcf.failures == 0 && bart.failures == 0,
        format!("failed reps: bcf {}, bart {}", bcf.failures, bart.failures),
    );
    c.check(
        bcf.ate_rmse < bart.ate_rmse,
        format!(
            "ATE rmse: bcf {:.3} not below bart {:.3}",
            bcf.ate_rmse, bart.ate_rmse
        ),
    );
    c.check(
        bart.ate_cover < 0.80,
        format!("bart ATE coverage {:.3} not below 0.80", bart.ate_cover),
    );
    c.check(
        bcf.ate_cover >= 0.85,
        format!("bcf ATE coverage {:.3} below 0.85", bcf.ate_cover),
    );
    c.check(
        bart.ate_bias.abs() - bcf.ate_bias.abs() >= 0.05,
        format!(
            "bias gap: |bart {:.3}| - |bcf {:.3}| < 0.05",
            bart.ate_bias, bcf.ate_bias
        ),
    );
    let secs = start.elapsed().as_secs_f64();
    c.check(secs < 1800.0, format!("runtime {secs:.0}s >= 1800s"));
    c.finish();
}

// ---------------------------------------------------------------------------
// 5. Nonlinear homogeneous grid: method ordering, interval widths, and
//    magnitudes near the reference study at both sample sizes.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_5_nonlinear_grid_comparison() {
    let _guard = serial();
    let mut c = Criterion::new(5, "nonlinear grid method comparison");
    let dgp250 = DgpSpec::SimStudy {
        n: 250,
        effect: Effect::Homogeneous,
        surface: Surface::Nonlinear,
    };
    let dgp500 = DgpSpec::SimStudy {
        n: 500,
        effect: Effect::Homogeneous,
        surface: Surface::Nonlinear,
    };
    let cfg = BenchConfig {
        methods: Method::ALL.to_vec(),
        dgps: vec![dgp250, dgp500],
        reps: 50,
        seed: 7,
        jobs: 1,
        iterations: 2000,
        burn_in: 1000,
    };
    let report = run_grid(&cfg).unwrap();
    let (l250, l500) = (dgp250.label(), dgp500.label());
    let order = [Method::Bcf, Method::PsBart, Method::Bart, Method::BartF0F1];
    let cate250: Vec<f64> = order
        .iter()
        .map(|&m| report.cell(&l250, m).unwrap().cate_rmse)
        .collect();
    for w in 0..3 {
        c.check(
            cate250[w] <= cate250[w + 1],
            format!(
                "CATE rmse ordering violated at n=250: {} {:.3} > {} {:.3}",
                order[w].name(),
                cate250[w],
                order[w + 1].name(),
                cate250[w + 1]
            ),
        );
    }
    let bcf_len = report.cell(&l250, Method::Bcf).unwrap().cate_len;
    let ps_len = report.cell(&l250, Method::PsBart).unwrap().cate_len;
    c.check(
        bcf_len < ps_len,
        format!("CATE interval length: bcf {bcf_len:.3} not below ps-bart {ps_len:.3}"),
    );
    for &m in &order {
        let a250 = report.cell(&l250, m).unwrap().ate_rmse;
        let a500 = report.cell(&l500, m).unwrap().ate_rmse;
        c.check(
            a500 < a250,
            format!(
                "{}: ATE rmse did not shrink with n ({a250:.3} -> {a500:.3})",
                m.name()
            ),
        );
    }
    // Reference CATE error magnitudes from the comparative study; allow
    // +/-50% at this replication count.
    let ref_cate250 = [0.63, 1.00, 1.20, 2.42];
    let ref_cate500 = [0.47, 0.62, 0.63, 2.11];
    for (k, &m) in order.iter().enumerate() {
        let checks = [
            ("CATE rmse n=250", cate250[k], ref_cate250[k]),
            (
                "CATE rmse n=500",
                report.cell(&l500, m).unwrap().cate_rmse,
                ref_cate500[k],
            ),
        ];
        for (what, got, expect) in checks {
            c.check(
                got >= 0.5 * expect && got <= 1.5 * expect,
                format!(
                    "{} {what}: {got:.3} outside [{:.3}, {:.3}]",
                    m.name(),
                    0.5 * expect,
                    1.5 * expect
                ),
            );
        }
    }
    c.finish();
}

// ---------------------------------------------------------------------------
// 6. Null effect: the 95% average-effect intervals cover zero.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_6_null_effect_coverage() {
    let _guard = serial();
    let mut c = Criterion::new(6, "null-effect interval coverage");
    let dgp = DgpSpec::SimStudy {
        n: 500,
        effect: Effect::Zero,
        surface: Surface::Nonlinear,
    };
    let cfg = BenchConfig {
        methods: vec![Method::Bcf],
        dgps: vec![dgp],
        reps: 50,
        seed: 11,
        jobs: 1,
        iterations: 2000,
        burn_in: 1000,
    };
    let report = run_grid(&cfg).unwrap();
    let cell = report.cell(&dgp.label(), Method::Bcf).unwrap();
    c.check(cell.reps_ok == 50, format!("reps_ok {}", cell.reps_ok));
    // True effect is identically zero, so interval coverage of the truth is
    // coverage of zero. Require at least 43 of 50.
    c.check(
        cell.ate_cover >= 43.0 / 50.0 - 1e-12,
        format!("coverage of zero {:.3} below 0.86", cell.ate_cover),
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// 7. Heterogeneous effects: the posterior-mean summary tree finds the true
//    moderators, and a subgroup contrasted with itself is exactly zero.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_7_moderator_discovery() {
    let _guard = serial();
    let mut c = Criterion::new(7, "moderator discovery");
    let reps = 25usize;
    let mut hits = 0usize;
    let mut last_draws: Vec<Vec<f64>> = vec![];
    for rep in 0..reps {
        let sample = gen_sim_study(500, Effect::Heterogeneous, Surface::Linear, 90_000 + rep as u64)
            .unwrap();
        let ds = sample.to_dataset().unwrap();
        let config = BcfConfig {
            seed: 70_000 + rep as u64,
            ..BcfConfig::default()
        };
        let draws = fit_bcf(&ds, &config).unwrap();
        let n = ds.n();
        let tau_hat: Vec<f64> = (0..n)
            .map(|i| mean(&draws.tau.iter().map(|d| d[i]).collect::<Vec<f64>>()))
            .collect();
        let design = ds.design();
        let tree = fit_summary_tree(&design, &tau_hat, 3, default_min_leaf(n)).unwrap();
        // The effect varies only through the second continuous covariate
        // (design column 1) and the binary flag (design column 3).
        if matches!(tree.first_split_column(), Some(1) | Some(3)) {
            hits += 1;
        }
        last_draws = draws.tau;
    }
    c.check(
        hits * 5 >= reps * 4,
        format!("first split found a true moderator in {hits}/{reps} reps (< 80%)"),
    );

    let subgroup: Vec<usize> = (0..50).collect();
    let contrast = subgroup_contrast(&last_draws, &subgroup, &subgroup).unwrap();
    c.check(
        contrast.draws.iter().all(|&d| d == 0.0) && contrast.mean == 0.0,
        "self-contrast is not exactly zero".to_string(),
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// 8. Command-line runs are bitwise reproducible under a fixed seed, and the
//    grid output does not depend on the worker count.
// ---------------------------------------------------------------------------

fn bcf_cmd(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_bcf"))
        .args(args)
        .status()
        .expect("failed to launch CLI");
    assert!(status.success(), "CLI failed: bcf {}", args.join(" "));
}

fn read_bytes(dir: &std::path::Path, file: &str) -> Vec<u8> {
    std::fs::read(dir.join(file)).unwrap_or_else(|e| panic!("reading {file}: {e}"))
}

#[test]
fn acceptance_8_cli_reproducibility() {
    let _guard = serial();
    let mut c = Criterion::new(8, "CLI reproducibility");
    let base = std::env::temp_dir().join(format!("bcf-acceptance-{}", std::process::id()));
    let dir = |name: &str| -> PathBuf { base.join(name) };
    let s = |p: &PathBuf| p.to_str().unwrap().to_string();

    // identical simulate runs
    let (sim_a, sim_b) = (dir("sim-a"), dir("sim-b"));
    for d in [&sim_a, &sim_b] {
        bcf_cmd(&[
            "simulate", "--dgp", "sim61", "--n", "120", "--effect", "heterogeneous", "--surface",
            "linear", "--seed", "5", "--out", &s(d),
        ]);
    }
    c.check(
        read_bytes(&sim_a, "data.csv") == read_bytes(&sim_b, "data.csv")
            && read_bytes(&sim_a, "truth.csv") == read_bytes(&sim_b, "truth.csv"),
        "simulate outputs differ between identical runs".to_string(),
    );

    // identical fit runs on the simulated data
    let data = sim_a.join("data.csv");
    let (fit_a, fit_b) = (dir("fit-a"), dir("fit-b"));
    for d in [&fit_a, &fit_b] {
        bcf_cmd(&[
            "fit", "--data", data.to_str().unwrap(), "--model", "bcf", "--iterations", "120",
            "--burn-in", "60", "--seed", "9", "--out", &s(d),
        ]);
    }
    for file in ["draws.csv", "summary.json", "pi_hat.csv"] {
        c.check(
            read_bytes(&fit_a, file) == read_bytes(&fit_b, file),
            format!("fit output {file} differs between identical runs"),
        );
    }

    // grid output is invariant to the worker count
    let (g1, g3) = (dir("grid-1"), dir("grid-3"));
    for (d, jobs) in [(&g1, "1"), (&g3, "3")] {
        bcf_cmd(&[
            "bench", "--methods", "bcf,bart", "--dgp", "sim-het-lin-n100", "--reps", "3",
            "--iterations", "80", "--burn-in", "40", "--seed", "17", "--jobs", jobs, "--out",
            &s(d),
        ]);
    }
    for file in ["table.csv", "reps.csv"] {
        c.check(
            read_bytes(&g1, file) == read_bytes(&g3, file),
            format!("grid output {file} differs between --jobs 1 and --jobs 3"),
        );
    }
    std::fs::remove_dir_all(&base).ok();
    c.finish();
}
