use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sbl_core::analysis::random_phase_study;
use sbl_core::exec::{map_indexed, Execution};
use sbl_core::linalg::random::{random_state, rng};
use sbl_core::linalg::schmidt_decompose;
use sbl_core::model::build_random;
use sbl_core::propagation::{evolve_exact, schmidt_trajectory, uniform_grid};
use sbl_core::Dims;

const STRATEGIES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn phase_study(c: &mut Criterion) {
    let mut group = c.benchmark_group("random_phase_study");
    group.sample_size(10);
    for (label, exec) in STRATEGIES {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| random_phase_study(black_box(&[2, 4, 8, 16]), 200, 7, exec).unwrap())
        });
    }
    group.finish();
}

/// Exact trajectories of a batch of independent random models.
fn model_batch(c: &mut Criterion) {
    let dims = Dims::new(4, 8);
    let times = uniform_grid(0.0, 2.0, 41);
    let run = |k: usize| {
        let model = build_random(dims, 0.5, k as u64).unwrap();
        let psi = schmidt_decompose(&random_state(&mut rng(k as u64), dims.total()), dims)
            .unwrap()
            .reconstruct();
        let states = evolve_exact(&model, &psi, &times).unwrap();
        schmidt_trajectory(&times, &states, dims).unwrap().len()
    };
    let mut group = c.benchmark_group("model_batch");
    group.sample_size(10);
    for (label, exec) in STRATEGIES {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| map_indexed(exec, black_box(32), run))
        });
    }
    group.finish();
}

criterion_group!(benches, phase_study, model_batch);
criterion_main!(benches);
