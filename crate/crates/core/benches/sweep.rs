use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use neurofem::cost::{CostKind, CostSpec};
use neurofem::fem::Mesh;
use neurofem::nn::ShallowNet;
use neurofem::optim::{toy_quasi_optimality_sweep, ReducedProblem};
use neurofem::parallel::Execution;
use neurofem::state::{Discretization, ProblemSpec, SolverKind, SolverOptions};
use neurofem::weight::WeightSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn cost_batch(c: &mut Criterion) {
    let mesh = Arc::new(Mesh::interval(64).unwrap());
    let d = Discretization::new(
        ProblemSpec::boundary_layer(160.0),
        WeightSpec::LogisticOffset { m: 100.0 },
        SolverKind::DdMinres,
        mesh,
        SolverOptions::default(),
    )
    .unwrap();
    let rp = ReducedProblem::new(d, CostSpec::new(CostKind::TotalVariation, 1e-4)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let nets: Vec<ShallowNet> = (0..64).map(|_| ShallowNet::random(1, 8, &mut rng).unwrap()).collect();
    let mut group = c.benchmark_group("gradient_batch_64");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| rp.gradient_batch(&nets, exec))
        });
    }
    group.finish();
}

fn toy_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("toy_quasi_optimality_16");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| toy_quasi_optimality_sweep(4, 16, 0, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, cost_batch, toy_sweep);
criterion_main!(benches);
