//! Scratch probe: summary-tree first splits on the heterogeneous linear DGP.

use bcf_core::bcf::{fit_bcf, BcfConfig};
use bcf_core::dgp::{gen_sim_study, Effect, Surface};
use bcf_core::summarize::{default_min_leaf, fit_summary_tree};

fn main() {
    let reps = 25usize;
    let iters: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2000);
    let n_obs: usize = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(250);
    let burn = iters / 2;
    let mut hits = 0usize;
    for rep in 0..reps {
        let sample =
            gen_sim_study(n_obs, Effect::Heterogeneous, Surface::Linear, 90_000 + rep as u64)
                .unwrap();
        let ds = sample.to_dataset().unwrap();
        let config = BcfConfig {
            seed: 70_000 + rep as u64,
            iterations: iters,
            burn_in: burn,
            ..BcfConfig::default()
        };
        let draws = fit_bcf(&ds, &config).unwrap();
        let n = ds.n();
        let tau_hat: Vec<f64> = (0..n)
            .map(|i| draws.tau.iter().map(|d| d[i]).sum::<f64>() / draws.tau.len() as f64)
            .collect();
        // correlation of tau_hat with true tau
        let tt = &sample.true_tau;
        let m1 = tau_hat.iter().sum::<f64>() / n as f64;
        let m2 = tt.iter().sum::<f64>() / n as f64;
        let mut c = 0.0;
        let mut v1 = 0.0;
        let mut v2 = 0.0;
        for i in 0..n {
            c += (tau_hat[i] - m1) * (tt[i] - m2);
            v1 += (tau_hat[i] - m1).powi(2);
            v2 += (tt[i] - m2).powi(2);
        }
        let corr = c / (v1.sqrt() * v2.sqrt());
        let design = ds.design();
        let tree = fit_summary_tree(&design, &tau_hat, 3, default_min_leaf(n)).unwrap();
        let col = tree.first_split_column();
        let hit = matches!(col, Some(1) | Some(3));
        if hit {
            hits += 1;
        }
        println!("rep {rep:2}: first split {col:?} hit={hit} cor(tau_hat,tau)={corr:.3}");
    }
    println!("hits {hits}/{reps}");
}
