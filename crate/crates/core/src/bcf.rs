//! Two-forest causal model: a prognostic forest mu(x, pi_hat) plus a
//! treatment-moderating forest tau(x) entering the mean only for treated
//! units, E(y | x, z) = mu(x, pi_hat) + tau(x) * z.
//!
//! Both forests are parameter-expanded: unit-scale forests h_mu, h_tau with
//! leaf sd 1/sqrt(L) are multiplied by global scales s_mu (half-Cauchy
//! prior) and s_tau (half-Normal prior), updated by slice sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bart::{derive_seed, fit_probit_bart, BartConfig};
use crate::data::{build_cutpoints, Dataset};
use crate::error::{Error, Result};
use crate::forest::{
    calibrate_sigma_prior, update_sigma, update_tree, ForestState, Scratch, TreePrior,
    TreeUpdateCtx,
};
use crate::slice::slice_sample;
use crate::stats;

/// Where the propensity estimates pi_hat(x_i) come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropensitySource {
    /// Probit ensemble fit of z on x inside fit_bcf (default).
    ProbitBart,
    /// Logistic regression of z on the dummy-coded covariates.
    Logistic,
    /// Estimates already attached to the dataset.
    Provided,
}

/// Priors and chain schedule for the two-forest fit. Scale-prior settings
/// are on the standardized outcome scale (sd(y) = 1).
#[derive(Debug, Clone)]
pub struct BcfConfig {
    pub mu_trees: usize,
    pub mu_eta: f64,
    pub mu_beta: f64,
    pub tau_trees: usize,
    pub tau_eta: f64,
    pub tau_beta: f64,
    /// Half-Cauchy scale (= prior median) for s_mu; 2.0 puts the median of
    /// the prognostic spread at twice sd(y).
    pub mu_scale: f64,
    /// Half-Normal prior median for s_tau; 1.0 puts the median effect
    /// spread at sd(y).
    pub tau_scale_median: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub chains: usize,
    pub seed: u64,
    pub max_cuts: usize,
    pub propensity: PropensitySource,
    /// Chain schedule for the internal probit propensity fit.
    pub propensity_config: BartConfig,
}

impl Default for BcfConfig {
    fn default() -> Self {
        BcfConfig {
            mu_trees: 200,
            mu_eta: 0.95,
            mu_beta: 2.0,
            tau_trees: 50,
            tau_eta: 0.25,
            tau_beta: 3.0,
            mu_scale: 2.0,
            tau_scale_median: 1.0,
            iterations: 2000,
            burn_in: 1000,
            chains: 1,
            seed: 0,
            max_cuts: crate::bart::DEFAULT_MAX_CUTS,
            propensity: PropensitySource::ProbitBart,
            propensity_config: BartConfig::default(),
        }
    }
}

impl BcfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu_trees == 0 || self.tau_trees == 0 {
            return Err(Error::validation("tree counts must be positive"));
        }
        if self.iterations <= self.burn_in {
            return Err(Error::validation("iterations must exceed burn_in"));
        }
        if self.chains == 0 {
            return Err(Error::validation("chains must be positive"));
        }
        if self.mu_scale <= 0.0 || self.tau_scale_median <= 0.0 {
            return Err(Error::validation("scale-prior settings must be positive"));
        }
        Ok(())
    }

    pub fn kept(&self) -> usize {
        self.iterations - self.burn_in
    }
}

/// Posterior draws from the two-forest fit, mapped back to raw outcome
/// units.
#[derive(Debug, Clone)]
pub struct BcfDraws {
    /// Per kept draw, tau(x_i) for all i.
    pub tau: Vec<Vec<f64>>,
    /// Per kept draw, mu(x_i, pi_hat_i) for all i.
    pub mu: Vec<Vec<f64>>,
    /// Error sd per kept draw.
    pub sigma: Vec<f64>,
    /// Prognostic-forest scale per kept draw (standardized units).
    pub s_mu: Vec<f64>,
    /// Treatment-forest scale per kept draw (standardized units).
    pub s_tau: Vec<f64>,
    /// Chain index per kept draw.
    pub chain: Vec<usize>,
    /// The propensity estimates actually used.
    pub pi_hat: Vec<f64>,
}

/// Resolves propensity estimates for a dataset per the configured source.
pub fn resolve_propensity(ds: &Dataset, config: &BcfConfig) -> Result<Vec<f64>> {
    match config.propensity {
        PropensitySource::Provided => ds
            .pi_hat
            .clone()
            .ok_or_else(|| Error::validation("propensity source is 'provided' but no pi_hat column was given")),
        PropensitySource::Logistic => {
            let design = ds.design();
            stats::logistic_fit(&design, &ds.z)
        }
        PropensitySource::ProbitBart => {
            let design = ds.design();
            let mut cfg = config.propensity_config.clone();
            cfg.seed = derive_seed(config.seed, 0x9e37);
            let fit = fit_probit_bart(&design, &ds.z, &cfg)?;
            Ok(fit.pi_hat)
        }
    }
}

/// Slice-samples a forest scale s given the unit forest. `w_i` is the
/// per-row regressor a0_i * h_i (a0 = 1 for the prognostic forest, z for
/// the treatment forest); the residual currently excludes s_old * w. The
/// log-likelihood in s is quadratic with sufficient statistics
/// (sum u*w, sum w^2).
fn update_scale<F: Fn(f64) -> f64>(
    resid: &mut [f64],
    w: &[f64],
    s_old: f64,
    sigma: f64,
    log_prior: F,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut suw = 0.0;
    let mut sww = 0.0;
    for (r, &wi) in resid.iter().zip(w) {
        let u = r + s_old * wi;
        suw += u * wi;
        sww += wi * wi;
    }
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);
    let log_post = |s: f64| log_prior(s) + (2.0 * s * suw - s * s * sww) * inv2s2;
    let s_new = slice_sample(log_post, s_old, 0.5, 0.0, rng);
    for (r, &wi) in resid.iter_mut().zip(w) {
        *r += (s_old - s_new) * wi;
    }
    s_new
}

/// Fits the two-forest model. Sweep order per iteration: prognostic trees,
/// s_mu, treatment trees, s_tau, sigma.
pub fn fit_bcf(ds: &Dataset, config: &BcfConfig) -> Result<BcfDraws> {
    config.validate()?;
    ds.require_both_arms()?;
    let n = ds.n();

    let pi_hat = resolve_propensity(ds, config)?;

    // prognostic design: covariates plus the propensity estimate;
    // treatment design: covariates only. z enters through the coefficient.
    let mut mu_design = ds.design();
    mu_design.push_column("pi_hat", pi_hat.clone());
    let tau_design = ds.design();
    let mu_grid = build_cutpoints(&mu_design, config.max_cuts);
    let tau_grid = build_cutpoints(&tau_design, config.max_cuts);

    let (y_std, inv) = ds.standardize();
    let mu_prior = TreePrior::new(config.mu_eta, config.mu_beta, config.mu_trees, 1.0);
    let tau_prior = TreePrior::new(config.tau_eta, config.tau_beta, config.tau_trees, 1.0);

    // error-variance prior calibrated against an OLS fit on (x, pi_hat, z)
    let mut calib_design = mu_design.clone();
    calib_design.push_column("z", ds.z.iter().map(|&z| z as f64).collect());
    let (nu, lambda) = calibrate_sigma_prior(&y_std, &calib_design);

    let hn_sigma = config.tau_scale_median / 0.674_489_750_196_081_7;
    let log_prior_mu = |s: f64| -(1.0 + (s / config.mu_scale).powi(2)).ln();
    let log_prior_tau = move |s: f64| -s * s / (2.0 * hn_sigma * hn_sigma);

    let zf: Vec<f64> = ds.z.iter().map(|&z| z as f64).collect();
    let kept_total = config.kept() * config.chains;
    let mut draws = BcfDraws {
        tau: Vec::with_capacity(kept_total),
        mu: Vec::with_capacity(kept_total),
        sigma: Vec::with_capacity(kept_total),
        s_mu: Vec::with_capacity(kept_total),
        s_tau: Vec::with_capacity(kept_total),
        chain: Vec::with_capacity(kept_total),
        pi_hat: pi_hat.clone(),
    };

    for chain in 0..config.chains {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1 + chain as u64));
        let mut mu_forest = ForestState::new(config.mu_trees, n);
        let mut tau_forest = ForestState::new(config.tau_trees, n);
        let mut s_mu = 1.0;
        let mut s_tau = 0.5;
        let mut sigma = 1.0;
        let mut resid = y_std.clone();
        let mut scratch = Scratch::default();
        let mut mu_coeff = vec![s_mu; n];
        let mut tau_coeff: Vec<f64> = zf.iter().map(|&z| s_tau * z).collect();

        for it in 0..config.iterations {
            for l in 0..config.mu_trees {
                let ctx = TreeUpdateCtx {
                    design: &mu_design,
                    grid: &mu_grid,
                    prior: &mu_prior,
                    sigma,
                    coeff: Some(&mu_coeff),
                    likelihood_off: false,
                };
                update_tree(
                    &mut mu_forest.trees[l],
                    &mut mu_forest.fit,
                    &mut resid,
                    &ctx,
                    &mut scratch,
                    &mut rng,
                );
            }
            s_mu = update_scale(&mut resid, &mu_forest.fit, s_mu, sigma, log_prior_mu, &mut rng);
            mu_coeff.iter_mut().for_each(|c| *c = s_mu);

            for l in 0..config.tau_trees {
                let ctx = TreeUpdateCtx {
                    design: &tau_design,
                    grid: &tau_grid,
                    prior: &tau_prior,
                    sigma,
                    coeff: Some(&tau_coeff),
                    likelihood_off: false,
                };
                update_tree(
                    &mut tau_forest.trees[l],
                    &mut tau_forest.fit,
                    &mut resid,
                    &ctx,
                    &mut scratch,
                    &mut rng,
                );
            }
            let w_tau: Vec<f64> = tau_forest
                .fit
                .iter()
                .zip(&zf)
                .map(|(&h, &z)| h * z)
                .collect();
            s_tau = update_scale(&mut resid, &w_tau, s_tau, sigma, log_prior_tau, &mut rng);
            for (c, &z) in tau_coeff.iter_mut().zip(&zf) {
                *c = s_tau * z;
            }

            sigma = update_sigma(&resid, nu, lambda, &mut rng);

            if it >= config.burn_in {
                draws
                    .tau
                    .push(tau_forest.fit.iter().map(|&h| inv.apply_scale(s_tau * h)).collect());
                draws
                    .mu
                    .push(mu_forest.fit.iter().map(|&h| inv.apply(s_mu * h)).collect());
                draws.sigma.push(sigma * inv.scale);
                draws.s_mu.push(s_mu);
                draws.s_tau.push(s_tau);
                draws.chain.push(chain);
            }
        }

        // residual cache must agree with a from-scratch recomputation
        debug_assert!({
            let mu_fit = mu_forest.recompute_fit(&mu_design);
            let tau_fit = tau_forest.recompute_fit(&tau_design);
            y_std
                .iter()
                .enumerate()
                .map(|(i, y)| (y - s_mu * mu_fit[i] - s_tau * zf[i] * tau_fit[i] - resid[i]).abs())
                .fold(0.0, f64::max)
                < 1e-8
        });
    }
    Ok(draws)
}
