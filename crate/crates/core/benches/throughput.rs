//! Sequential vs parallel throughput of the main kernels on the fixture.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use fshawkes::design::DesignCache;
use fshawkes::gibbs::GibbsSampler;
use fshawkes::meanfield::MeanField;
use fshawkes::{
    builtin_sim_fixture, precompute_features, simulate, ExecPolicy, Priors, Realization, SimConfig,
};

const POLICIES: [(&str, ExecPolicy); 2] = [
    ("sequential", ExecPolicy::Sequential),
    ("parallel", ExecPolicy::Parallel),
];

fn fixture() -> (SimConfig, Realization) {
    let mut cfg = builtin_sim_fixture();
    cfg.horizon = 500.0;
    let data = simulate(&cfg).expect("fixture simulates");
    (cfg, data)
}

fn features(c: &mut Criterion) {
    let (cfg, data) = fixture();
    let times: Vec<f64> = (0..20_000)
        .map(|k| k as f64 * data.horizon() / 20_000.0)
        .collect();
    let mut group = c.benchmark_group("features");
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::new("window", name), |b| {
            b.iter(|| precompute_features(&cfg.basis, &data, black_box(&times), exec).unwrap())
        });
        group.bench_function(BenchmarkId::new("design_cache", name), |b| {
            b.iter(|| DesignCache::gauss_legendre(&cfg.basis, &data, 20, exec).unwrap())
        });
    }
    group.finish();
}

fn gibbs_step(c: &mut Criterion) {
    let (cfg, data) = fixture();
    let mut group = c.benchmark_group("gibbs_step");
    group.sample_size(20);
    for (name, exec) in POLICIES {
        let sampler =
            GibbsSampler::new(&data, &cfg.basis, Priors::standard(data.states()), exec).unwrap();
        let mut state = sampler.initial_state(1);
        group.bench_function(name, |b| b.iter(|| sampler.step(&mut state).unwrap()));
    }
    group.finish();
}

fn meanfield_sweep(c: &mut Criterion) {
    let (cfg, data) = fixture();
    let mut group = c.benchmark_group("meanfield_sweep");
    group.sample_size(20);
    for (name, exec) in POLICIES {
        let mf =
            MeanField::new(&data, &cfg.basis, Priors::standard(data.states()), 20, exec).unwrap();
        let mut state = mf.initial_state();
        group.bench_function(name, |b| b.iter(|| mf.step(&mut state).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, features, gibbs_step, meanfield_sweep);
criterion_main!(benches);
