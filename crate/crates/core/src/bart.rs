//! BART model fits built on the backfitting engine: plain BART over (x, z),
//! the ps-BART variant with the estimated propensity appended as a
//! covariate, and probit BART for propensity estimation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{build_cutpoints, CutpointGrid, Dataset, DesignMatrix};
use crate::error::{Error, Result};
use crate::forest::{
    calibrate_sigma_prior, update_sigma, update_tree, ForestState, Scratch, TreePrior,
    TreeUpdateCtx,
};
use crate::stats;

pub const DEFAULT_MAX_CUTS: usize = 100;

/// Chain schedule and prior settings for a single-forest BART fit.
#[derive(Debug, Clone)]
pub struct BartConfig {
    pub num_trees: usize,
    pub eta: f64,
    pub beta: f64,
    /// Prior sd of the forest prediction at a point, standardized scale.
    /// `None` selects (max - min)/4 of the standardized outcome.
    pub sigma0: Option<f64>,
    /// Total iterations per chain (burn-in included).
    pub iterations: usize,
    pub burn_in: usize,
    pub chains: usize,
    pub seed: u64,
    pub max_cuts: usize,
}

impl Default for BartConfig {
    fn default() -> Self {
        BartConfig {
            num_trees: 200,
            eta: 0.95,
            beta: 2.0,
            sigma0: None,
            iterations: 2000,
            burn_in: 1000,
            chains: 1,
            seed: 0,
            max_cuts: DEFAULT_MAX_CUTS,
        }
    }
}

impl BartConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_trees == 0 {
            return Err(Error::validation("num_trees must be positive"));
        }
        if self.iterations <= self.burn_in {
            return Err(Error::validation("iterations must exceed burn_in"));
        }
        if self.chains == 0 {
            return Err(Error::validation("chains must be positive"));
        }
        Ok(())
    }

    pub fn kept(&self) -> usize {
        self.iterations - self.burn_in
    }
}

/// Posterior draws from a BART-style fit, mapped back to raw outcome units.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    /// Per kept draw, tau(x_i) = f(x_i, 1) - f(x_i, 0) for all i.
    pub tau: Vec<Vec<f64>>,
    /// Per kept draw, fitted values f(x_i, z_i).
    pub f: Vec<Vec<f64>>,
    /// Error sd per kept draw.
    pub sigma: Vec<f64>,
    /// Chain index per kept draw.
    pub chain: Vec<usize>,
}

/// All latent state of one running chain.
pub struct SamplerState {
    pub forest: ForestState,
    pub sigma: f64,
    pub resid: Vec<f64>,
    pub rng: ChaCha8Rng,
}

impl SamplerState {
    /// Max abs deviation between the cached residual and a from-scratch
    /// recomputation (must stay below 1e-10 at iteration boundaries).
    pub fn residual_drift(&self, y_std: &[f64], design: &DesignMatrix) -> f64 {
        let direct = self.forest.recompute_fit(design);
        y_std
            .iter()
            .zip(&direct)
            .zip(&self.resid)
            .map(|((y, f), r)| (y - f - r).abs())
            .fold(0.0, f64::max)
    }
}

/// Deterministic per-stream seed derivation (splitmix64 over seed + stream).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut x = seed
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(stream.wrapping_mul(0xbf58476d1ce4e5b9))
        .wrapping_add(0x94d049bb133111eb);
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58476d1ce4e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

pub(crate) fn default_sigma0(y_std: &[f64]) -> f64 {
    let max = y_std.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = y_std.iter().cloned().fold(f64::INFINITY, f64::min);
    ((max - min) / 4.0).max(0.25)
}

/// Output of one chain on the standardized scale.
pub(crate) struct ChainOutput {
    pub sigma: Vec<f64>,
    pub f: Vec<Vec<f64>>,
    pub tau: Vec<Vec<f64>>,
    /// Per eval design: per draw, predictions at its rows.
    pub evals: Vec<Vec<Vec<f64>>>,
}

/// Runs one BART chain against `y_std`. If `counterfactual_col` is set,
/// tau draws are produced by rerouting every row with that column forced to
/// 1 and then 0 (all other columns, including any propensity column, held
/// fixed). `eval_designs` produce extra per-draw prediction vectors.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_chain(
    design: &DesignMatrix,
    grid: &CutpointGrid,
    y_std: &[f64],
    prior: &TreePrior,
    nu: f64,
    lambda: f64,
    iterations: usize,
    burn_in: usize,
    counterfactual_col: Option<usize>,
    eval_designs: &[&DesignMatrix],
    seed: u64,
) -> ChainOutput {
    let n = y_std.len();
    let kept = iterations - burn_in;
    let mut state = SamplerState {
        forest: ForestState::new(prior.num_trees, n),
        sigma: 1.0,
        resid: y_std.to_vec(),
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut scratch = Scratch::default();
    let mut out = ChainOutput {
        sigma: Vec::with_capacity(kept),
        f: Vec::with_capacity(kept),
        tau: Vec::with_capacity(kept),
        evals: vec![Vec::with_capacity(kept); eval_designs.len()],
    };

    for it in 0..iterations {
        for l in 0..prior.num_trees {
            let ctx = TreeUpdateCtx {
                design,
                grid,
                prior,
                sigma: state.sigma,
                coeff: None,
                likelihood_off: false,
            };
            update_tree(
                &mut state.forest.trees[l],
                &mut state.forest.fit,
                &mut state.resid,
                &ctx,
                &mut scratch,
                &mut state.rng,
            );
        }
        state.sigma = update_sigma(&state.resid, nu, lambda, &mut state.rng);

        if it >= burn_in {
            out.sigma.push(state.sigma);
            out.f.push(state.forest.fit.clone());
            if let Some(zc) = counterfactual_col {
                let mut tau = vec![0.0; n];
                for tree in &state.forest.trees {
                    if !tree.uses_column(zc) {
                        continue;
                    }
                    for (i, t) in tau.iter_mut().enumerate() {
                        let p1 =
                            tree.predict(|c| if c == zc { 1.0 } else { design.value(i, c) });
                        let p0 =
                            tree.predict(|c| if c == zc { 0.0 } else { design.value(i, c) });
                        *t += p1 - p0;
                    }
                }
                out.tau.push(tau);
            }
            for (k, ed) in eval_designs.iter().enumerate() {
                let preds = (0..ed.n_rows())
                    .map(|i| state.forest.predict(|c| ed.value(i, c)))
                    .collect();
                out.evals[k].push(preds);
            }
        }
    }
    debug_assert!(state.residual_drift(y_std, design) < 1e-10);
    out
}

fn fit_bart_impl(ds: &Dataset, config: &BartConfig, with_propensity: bool) -> Result<PosteriorDraws> {
    config.validate()?;
    ds.require_both_arms()?;
    let mut design = ds.design();
    let z_col = design.push_column("z", ds.z.iter().map(|&z| z as f64).collect());
    if with_propensity {
        let pi = ds
            .pi_hat
            .as_ref()
            .ok_or_else(|| Error::validation("ps-BART requires propensity estimates"))?;
        design.push_column("pi_hat", pi.clone());
    }
    let grid = build_cutpoints(&design, config.max_cuts);
    let (y_std, inv) = ds.standardize();
    let sigma0 = config.sigma0.unwrap_or_else(|| default_sigma0(&y_std));
    let prior = TreePrior::new(config.eta, config.beta, config.num_trees, sigma0);
    let (nu, lambda) = calibrate_sigma_prior(&y_std, &design);

    let mut draws = PosteriorDraws {
        tau: Vec::new(),
        f: Vec::new(),
        sigma: Vec::new(),
        chain: Vec::new(),
    };
    for chain in 0..config.chains {
        let out = run_chain(
            &design,
            &grid,
            &y_std,
            &prior,
            nu,
            lambda,
            config.iterations,
            config.burn_in,
            Some(z_col),
            &[],
            derive_seed(config.seed, chain as u64),
        );
        for k in 0..out.sigma.len() {
            draws.sigma.push(out.sigma[k] * inv.scale);
            draws
                .f
                .push(out.f[k].iter().map(|&v| inv.apply(v)).collect());
            draws
                .tau
                .push(out.tau[k].iter().map(|&v| inv.apply_scale(v)).collect());
            draws.chain.push(chain);
        }
    }
    Ok(draws)
}

/// Plain BART over (x, z): the treatment indicator is appended to the design
/// matrix as just another column; tau draws come from toggling it.
pub fn fit_bart(ds: &Dataset, config: &BartConfig) -> Result<PosteriorDraws> {
    fit_bart_impl(ds, config, false)
}

/// ps-BART: plain BART with the estimated propensity score appended as an
/// additional design column (held fixed when toggling z).
pub fn fit_ps_bart(ds: &Dataset, config: &BartConfig) -> Result<PosteriorDraws> {
    fit_bart_impl(ds, config, true)
}

/// Two independent surface fits over the treated and control subsamples,
/// each regressing the outcome on the covariates alone and predicting over
/// the full sample. Returns per-draw tau(x_i) = f1(x_i) - f0(x_i) in raw
/// units, with the two chains paired by kept-draw index.
pub fn fit_bart_f0f1(ds: &Dataset, config: &BartConfig) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    ds.require_both_arms()?;
    let full_design = ds.design();
    let n = ds.n();
    let mut per_arm: Vec<Vec<Vec<f64>>> = Vec::with_capacity(2);
    for arm in [0u8, 1u8] {
        let rows: Vec<usize> = (0..n).filter(|&i| ds.z[i] == arm).collect();
        if rows.len() < 2 {
            return Err(Error::validation(format!("arm z={arm} has < 2 units")));
        }
        let sub = DesignMatrix {
            columns: full_design
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
            origin: full_design.origin.clone(),
        };
        let y_sub: Vec<f64> = rows.iter().map(|&i| ds.y[i]).collect();
        let y_mean = crate::stats::mean(&y_sub);
        let y_sd = crate::stats::sample_sd(&y_sub);
        if y_sd <= 0.0 {
            return Err(Error::validation(format!("arm z={arm} outcome is constant")));
        }
        let y_std: Vec<f64> = y_sub.iter().map(|&y| (y - y_mean) / y_sd).collect();
        let grid = build_cutpoints(&sub, config.max_cuts);
        let sigma0 = config.sigma0.unwrap_or_else(|| default_sigma0(&y_std));
        let prior = TreePrior::new(config.eta, config.beta, config.num_trees, sigma0);
        let (nu, lambda) = calibrate_sigma_prior(&y_std, &sub);
        let mut preds: Vec<Vec<f64>> = Vec::with_capacity(config.kept() * config.chains);
        for chain in 0..config.chains {
            let out = run_chain(
                &sub,
                &grid,
                &y_std,
                &prior,
                nu,
                lambda,
                config.iterations,
                config.burn_in,
                None,
                &[&full_design],
                derive_seed(config.seed, ((arm as u64) << 32) | chain as u64),
            );
            preds.extend(
                out.evals[0]
                    .iter()
                    .map(|v| v.iter().map(|&p| y_mean + y_sd * p).collect::<Vec<f64>>()),
            );
        }
        per_arm.push(preds);
    }
    let kept = per_arm[0].len();
    Ok((0..kept)
        .map(|k| {
            (0..n)
                .map(|i| per_arm[1][k][i] - per_arm[0][k][i])
                .collect()
        })
        .collect())
}

/// Probit BART posterior for a binary response.
#[derive(Debug, Clone)]
pub struct ProbitBartFit {
    /// Per kept draw, Phi(f(x_i)) for all i.
    pub pi_draws: Vec<Vec<f64>>,
    /// Posterior mean of Phi(f(x_i)), clamped to [0.001, 0.999].
    pub pi_hat: Vec<f64>,
}

/// Albert-Chib probit BART: latent w_i ~ N(f(x_i), 1) truncated to the side
/// implied by z_i, with the forest updated against w under fixed unit
/// error sd.
pub fn fit_probit_bart(
    design: &DesignMatrix,
    z: &[u8],
    config: &BartConfig,
) -> Result<ProbitBartFit> {
    config.validate()?;
    let n = z.len();
    if design.n_rows() != n {
        return Err(Error::validation("design rows do not match z length"));
    }
    let ones = z.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == n {
        return Err(Error::validation(
            "probit BART requires both classes present",
        ));
    }
    let grid = build_cutpoints(design, config.max_cuts);
    // latent scale is fixed at 1; prior mass within +-3 covers the probit range
    let sigma0 = config.sigma0.unwrap_or(1.5);
    let prior = TreePrior::new(config.eta, config.beta, config.num_trees, sigma0);

    let kept_total = config.kept() * config.chains;
    let mut pi_draws: Vec<Vec<f64>> = Vec::with_capacity(kept_total);
    let mut pi_sum = vec![0.0; n];

    for chain in 0..config.chains {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, chain as u64));
        let mut forest = ForestState::new(prior.num_trees, n);
        let mut resid = vec![0.0; n];
        let mut scratch = Scratch::default();
        for it in 0..config.iterations {
            // latent truncated-normal refresh
            for i in 0..n {
                let w = stats::truncated_normal_unit_sd(forest.fit[i], z[i] == 1, &mut rng);
                resid[i] = w - forest.fit[i];
            }
            for l in 0..prior.num_trees {
                let ctx = TreeUpdateCtx {
                    design,
                    grid: &grid,
                    prior: &prior,
                    sigma: 1.0,
                    coeff: None,
                    likelihood_off: false,
                };
                update_tree(
                    &mut forest.trees[l],
                    &mut forest.fit,
                    &mut resid,
                    &ctx,
                    &mut scratch,
                    &mut rng,
                );
            }
            if it >= config.burn_in {
                let probs: Vec<f64> = forest.fit.iter().map(|&f| stats::phi(f)).collect();
                for i in 0..n {
                    pi_sum[i] += probs[i];
                }
                pi_draws.push(probs);
            }
        }
    }

    let pi_hat = pi_sum
        .iter()
        .map(|&s| (s / kept_total as f64).clamp(0.001, 0.999))
        .collect();
    Ok(ProbitBartFit { pi_draws, pi_hat })
}
