use std::hint::black_box;

use agedist::par::Exec;
use agedist::sim::{simulate_replicated, SimConfig, SimMode, SolvedPolicy};
use agedist::solver::{eta_grid, policy_iteration, solve_from, solve_many};
use agedist::statetree::StateTree;
use agedist::strategies::{strategy_curve, Strategy};
use agedist::verify::figure1_model;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn replicated_sims(c: &mut Criterion) {
    let m = figure1_model();
    let sol = policy_iteration(&m, 0.5, None).unwrap();
    let pol = SolvedPolicy::from_solution(&sol);
    let cfg = SimConfig::new(100_000, 1).unwrap();
    let mut g = c.benchmark_group("replicated_sims");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, 8), |b| {
            b.iter(|| simulate_replicated(&m, &pol, &cfg, 8, SimMode::Direct, exec).unwrap())
        });
    }
    g.finish();
}

fn solves(c: &mut Criterion) {
    let m = figure1_model();
    let etas = eta_grid(&m, 0.3, 12).unwrap();
    let mut g = c.benchmark_group("solve_many");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| solve_many(&m, black_box(&etas), exec)));
    }
    g.finish();

    // one deep solve, parallel inside the evaluation and improvement loops
    let eta = 19.0 / (14.0 * m.mu());
    let k = m.buffer_bound(eta).unwrap();
    let mut g = c.benchmark_group("single_solve_k14");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| solve_from(&m, eta, StateTree::build(&m, k).unwrap(), exec).unwrap())
        });
    }
    g.finish();
}

fn strategies(c: &mut Criterion) {
    let m = figure1_model();
    let mut g = c.benchmark_group("strategy_curve");
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| strategy_curve(&m, Strategy::S3, 1..=60, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, replicated_sims, solves, strategies);
criterion_main!(benches);
