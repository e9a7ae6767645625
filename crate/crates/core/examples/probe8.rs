//! Scratch probe: anatomy of a bad replication on the homogeneous nonlinear arm.

use bcf_core::bart::{derive_seed, fit_probit_bart, BartConfig};
use bcf_core::bcf::{fit_bcf, BcfConfig, PropensitySource};
use bcf_core::dgp::{gen_sim_study, Effect, Surface};

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut c = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        c += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    c / (va.sqrt() * vb.sqrt())
}

fn main() {
    let rep: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(16);
    let seed = 7u64;
    let sample = gen_sim_study(
        250,
        Effect::Homogeneous,
        Surface::Nonlinear,
        derive_seed(seed, rep),
    )
    .unwrap();
    let ds = sample.to_dataset().unwrap();
    let pcfg = BartConfig {
        seed: derive_seed(seed, rep ^ 0x7072_6f70),
        ..BartConfig::default()
    };
    let pi_hat = fit_probit_bart(&ds.design(), &ds.z, &pcfg).unwrap().pi_hat;
    println!(
        "cor(pi_hat, true_pi) = {:.3}   treated {}/250",
        pearson(&pi_hat, &sample.true_pi),
        ds.z.iter().filter(|&&z| z == 1).count()
    );

    let mut d = ds.clone();
    d.pi_hat = Some(pi_hat.clone());
    let cfg = BcfConfig {
        seed: derive_seed(seed, rep ^ (1u64 << 48)),
        propensity: PropensitySource::Provided,
        ..BcfConfig::default()
    };
    let draws = fit_bcf(&d, &cfg).unwrap();
    let n = ds.n();
    let k = draws.tau.len() as f64;
    let tau_hat: Vec<f64> = (0..n)
        .map(|i| draws.tau.iter().map(|dr| dr[i]).sum::<f64>() / k)
        .collect();
    let mu_hat: Vec<f64> = (0..n)
        .map(|i| draws.mu.iter().map(|dr| dr[i]).sum::<f64>() / k)
        .collect();
    let mu_err: Vec<f64> = mu_hat
        .iter()
        .zip(&sample.true_mu)
        .map(|(&m, &t)| m - t)
        .collect();
    let tau_err: Vec<f64> = tau_hat.iter().map(|&t| t - 3.0).collect();
    let s_tau_mean = draws.s_tau.iter().sum::<f64>() / k;
    let first_q = &draws.s_tau[..(draws.s_tau.len() / 4)];
    let last_q = &draws.s_tau[3 * draws.s_tau.len() / 4..];
    println!(
        "s_tau mean {:.3} (first quarter {:.3}, last quarter {:.3})",
        s_tau_mean,
        first_q.iter().sum::<f64>() / first_q.len() as f64,
        last_q.iter().sum::<f64>() / last_q.len() as f64
    );
    let mean_tau = tau_hat.iter().sum::<f64>() / n as f64;
    let sd_tau =
        (tau_hat.iter().map(|&t| (t - mean_tau).powi(2)).sum::<f64>() / n as f64).sqrt();
    println!("tau_hat: mean {mean_tau:.3} sd {sd_tau:.3}  (truth 3.0 const)");
    println!(
        "cor(tau_err, mu_err) = {:.3}   cor(tau_err, true_pi) = {:.3}",
        pearson(&tau_err, &mu_err),
        pearson(&tau_err, &sample.true_pi)
    );
    // error split by treatment arm and by propensity tercile
    let mut hi = vec![];
    let mut lo = vec![];
    for i in 0..n {
        if sample.true_pi[i] > 0.6 {
            hi.push(tau_err[i].abs());
        } else if sample.true_pi[i] < 0.3 {
            lo.push(tau_err[i].abs());
        }
    }
    println!(
        "mean |tau_err|: high-pi {:.3} ({} units)  low-pi {:.3} ({} units)",
        hi.iter().sum::<f64>() / hi.len() as f64,
        hi.len(),
        lo.iter().sum::<f64>() / lo.len() as f64,
        lo.len()
    );
    println!(
        "mean |mu_err|: {:.3}  sigma posterior mean {:.3} (truth 2.0)",
        mu_err.iter().map(|e| e.abs()).sum::<f64>() / n as f64,
        draws.sigma.iter().sum::<f64>() / k
    );
}
