//! Scratch probe: BCF chain pooling vs ps-BART on the homogeneous nonlinear DGP.

use bcf_core::bart::{fit_probit_bart, fit_ps_bart, BartConfig};
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
    let reps: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(15);
    let (mut t1, mut t2, mut t4, mut tp) = (0.0, 0.0, 0.0, 0.0);
    for rep in 0..reps {
        let sample =
            gen_sim_study(250, Effect::Homogeneous, Surface::Nonlinear, 40_000 + rep as u64)
                .unwrap();
        let ds = sample.to_dataset().unwrap();
        let pcfg = BartConfig {
            seed: 555 + rep as u64,
            ..BartConfig::default()
        };
        let pi_hat = fit_probit_bart(&ds.design(), &ds.z, &pcfg).unwrap().pi_hat;

        let mut fit_chain = |chains: usize| {
            let mut d = ds.clone();
            d.pi_hat = Some(pi_hat.clone());
            let cfg = BcfConfig {
                seed: 9_000 + rep as u64,
                chains,
                propensity: PropensitySource::Provided,
                ..BcfConfig::default()
            };
            rmse(&fit_bcf(&d, &cfg).unwrap().tau, &sample.true_tau)
        };
        let r1 = fit_chain(1);
        let r2 = fit_chain(2);
        let r4 = fit_chain(4);
        let mut d = ds.clone();
        d.pi_hat = Some(pi_hat.clone());
        let bcfg = BartConfig {
            seed: 7_000 + rep as u64,
            ..BartConfig::default()
        };
        let rp = rmse(&fit_ps_bart(&d, &bcfg).unwrap().tau, &sample.true_tau);
        println!("rep {rep:2}: bcf1 {r1:.3}  bcf2 {r2:.3}  bcf4 {r4:.3}  ps {rp:.3}");
        t1 += r1;
        t2 += r2;
        t4 += r4;
        tp += rp;
    }
    let k = reps as f64;
    println!(
        "mean: bcf1 {:.3}  bcf2 {:.3}  bcf4 {:.3}  ps {:.3}",
        t1 / k,
        t2 / k,
        t4 / k,
        tp / k
    );
}
