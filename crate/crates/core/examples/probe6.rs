//! Scratch probe: chain pooling on specific replication seeds of the
//! homogeneous nonlinear grid arm.

use bcf_core::bart::{derive_seed, fit_probit_bart, fit_ps_bart, BartConfig};
use bcf_core::bcf::{fit_bcf, BcfConfig, PropensitySource};
use bcf_core::dgp::{gen_sim_study, Effect, Surface};

fn rmse(draws: &[Vec<f64>], truth: &[f64]) -> f64 {
    let n = truth.len();
    let k = draws.len() as f64;
    let mut sse = 0.0;
    for i in 0..n {
        let m: f64 = draws.iter().map(|d| d[i]).sum::<f64>() / k;
        sse += (m - truth[i]).powi(2);
    }
    (sse / n as f64).sqrt()
}

fn main() {
    let reps: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|s| s.parse().ok())
        .collect();
    let seed = 7u64;
    for &rep in &reps {
        let job_key = rep as u64; // dgp index 0
        let sample = gen_sim_study(
            250,
            Effect::Homogeneous,
            Surface::Nonlinear,
            derive_seed(seed, job_key),
        )
        .unwrap();
        let ds = sample.to_dataset().unwrap();
        let pcfg = BartConfig {
            seed: derive_seed(seed, job_key ^ 0x7072_6f70),
            ..BartConfig::default()
        };
        let pi_hat = fit_probit_bart(&ds.design(), &ds.z, &pcfg).unwrap().pi_hat;

        let mut run_bcf = |chains: usize, iters: usize| {
            let mut d = ds.clone();
            d.pi_hat = Some(pi_hat.clone());
            let cfg = BcfConfig {
                seed: derive_seed(seed, job_key ^ (1u64 << 48)),
                chains,
                iterations: iters,
                burn_in: iters / 2,
                propensity: PropensitySource::Provided,
                ..BcfConfig::default()
            };
            rmse(&fit_bcf(&d, &cfg).unwrap().tau, &sample.true_tau)
        };
        let r1 = run_bcf(1, 2000);
        let r2 = run_bcf(2, 2000);
        let r4 = run_bcf(4, 2000);
        let r4l = run_bcf(4, 4000);
        let mut d = ds.clone();
        d.pi_hat = Some(pi_hat.clone());
        let bcfg = BartConfig {
            seed: derive_seed(seed, job_key ^ (2u64 << 48)),
            ..BartConfig::default()
        };
        let rp = rmse(&fit_ps_bart(&d, &bcfg).unwrap().tau, &sample.true_tau);
        println!(
            "rep {rep:2}: bcf1 {r1:.3}  bcf2 {r2:.3}  bcf4 {r4:.3}  bcf4@4k {r4l:.3}  ps {rp:.3}"
        );
    }
}
