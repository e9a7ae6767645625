//! Scratch probe: heterogeneous nonlinear grid cells, pilot reps.

use bcf_core::bench::{run_grid, BenchConfig, DgpSpec, Method};
use bcf_core::dgp::{Effect, Surface};

fn main() {
    let reps: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20);
    let cfg = BenchConfig {
        methods: Method::ALL.to_vec(),
        dgps: vec![
            DgpSpec::SimStudy {
                n: 250,
                effect: Effect::Heterogeneous,
                surface: Surface::Nonlinear,
            },
            DgpSpec::SimStudy {
                n: 500,
                effect: Effect::Heterogeneous,
                surface: Surface::Nonlinear,
            },
        ],
        reps,
        seed: 7,
        jobs: 1,
        iterations: 2000,
        burn_in: 1000,
    };
    let report = run_grid(&cfg).unwrap();
    for c in &report.cells {
        println!(
            "{:<22} {:<10} reps_ok {:>2}  ate_rmse {:.3}  cate_rmse {:.3}  cate_len {:.3}  ate_cover {:.2}",
            c.dgp, c.method, c.reps_ok, c.ate_rmse, c.cate_rmse, c.cate_len, c.ate_cover
        );
    }
}
