//! Hot-path benchmarks: cutpoint construction, single-model fits at the
//! default replication size, and the full two-forest sweep.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use bcf_core::bart::{fit_bart, BartConfig};
use bcf_core::bcf::{fit_bcf, BcfConfig, PropensitySource};
use bcf_core::data::build_cutpoints;
use bcf_core::dgp::{gen_sim_study, Effect, Surface};

fn bench_cutpoints(c: &mut Criterion) {
    let sample = gen_sim_study(250, Effect::Homogeneous, Surface::Nonlinear, 1).unwrap();
    let design = sample.to_dataset().unwrap().design();
    c.bench_function("cutpoints/n250", |b| {
        b.iter(|| build_cutpoints(std::hint::black_box(&design), 100))
    });
}

fn bench_bart_sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("bart_fit_100_sweeps");
    group.sample_size(10);
    for n in [100usize, 250] {
        let sample = gen_sim_study(n, Effect::Homogeneous, Surface::Nonlinear, 2).unwrap();
        let ds = sample.to_dataset().unwrap();
        let cfg = BartConfig {
            iterations: 100,
            burn_in: 50,
            ..BartConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(n), &ds, |b, ds| {
            b.iter(|| fit_bart(ds, &cfg).unwrap())
        });
    }
    group.finish();
}

fn bench_bcf_sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("bcf_fit_100_sweeps");
    group.sample_size(10);
    let sample = gen_sim_study(250, Effect::Heterogeneous, Surface::Nonlinear, 3).unwrap();
    let mut ds = sample.to_dataset().unwrap();
    ds.pi_hat = Some(sample.true_pi.clone());
    let cfg = BcfConfig {
        iterations: 100,
        burn_in: 50,
        propensity: PropensitySource::Provided,
        ..BcfConfig::default()
    };
    group.bench_with_input(BenchmarkId::from_parameter(250usize), &ds, |b, ds| {
        b.iter(|| fit_bcf(ds, &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_cutpoints, bench_bart_sweeps, bench_bcf_sweeps);
criterion_main!(benches);
