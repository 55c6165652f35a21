use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use netmig_core::history::{prepare, PrepareConfig};
use netmig_core::nmr_model::{fit_mcmc, McmcConfig};
use netmig_core::project::{rebalance_global, run_forecast, FlowCells, ForecastConfig};
use netmig_core::synth::{synth_world, SynthSpec};

fn mcmc(c: &mut Criterion) {
    let sw = synth_world(&SynthSpec::default()).unwrap();
    let panel = prepare(&sw.world, &PrepareConfig::default()).unwrap().model_panel();
    let config = McmcConfig {
        burn_in: 500,
        iterations: 500,
        parallel_chains: false,
        ..McmcConfig::default()
    };
    c.bench_function("fit_mcmc 20x14, 4 chains x 1000", |b| {
        b.iter(|| fit_mcmc(black_box(&panel), &config).unwrap())
    });
}

fn forecast(c: &mut Criterion) {
    let sw = synth_world(&SynthSpec::default()).unwrap();
    let p = prepare(&sw.world, &PrepareConfig::default()).unwrap();
    let posterior = fit_mcmc(
        &p.model_panel(),
        &McmcConfig {
            burn_in: 300,
            iterations: 250,
            ..McmcConfig::default()
        },
    )
    .unwrap();
    let config = ForecastConfig {
        horizon: 6,
        trajectories: 200,
        jobs: Some(1),
        ..ForecastConfig::default()
    };
    c.bench_function("run_forecast 20 countries, 200 x 6 periods, 1 thread", |b| {
        b.iter(|| run_forecast(&sw.world, &p, black_box(&posterior), &config).unwrap())
    });
}

fn rebalance(c: &mut Criterion) {
    let (n, cells) = (60, 42);
    let at_risk: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..cells).map(|k| 1e4 + ((i * 31 + k * 7) % 97) as f64 * 500.0).collect())
        .collect();
    let flows: Vec<FlowCells> = (0..n)
        .map(|i| FlowCells {
            inflow: (0..cells).map(|k| ((i * 13 + k * 5) % 41) as f64 * 3.0).collect(),
            outflow: (0..cells).map(|k| ((i * 17 + k * 3) % 37) as f64 * 3.5).collect(),
        })
        .collect();
    let refs: Vec<&[f64]> = at_risk.iter().map(Vec::as_slice).collect();
    let partition = vec![0; n];
    let active = vec![true; n];
    c.bench_function("rebalance_global 60 countries x 42 cells", |b| {
        b.iter(|| {
            let mut f = flows.clone();
            rebalance_global(black_box(&mut f), &refs, &partition, &active, 0.5).unwrap()
        })
    });
}

criterion_group!(benches, mcmc, forecast, rebalance);
criterion_main!(benches);
