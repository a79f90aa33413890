use std::hint::black_box;

use cbolab_core::consensus::consensus_point;
use cbolab_core::cutoffs::{truncated_coefficients, CboCoefficients};
use cbolab_core::pde::ConsensusSource;
use cbolab_core::{builtin_objective, CboParams, CutoffSpec, InitialGaussian, ParticleEnsemble, PdeProblem, SpectralSolver};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn consensus(c: &mut Criterion) {
    let obj = builtin_objective("rastrigin", 4).unwrap();
    let mut group = c.benchmark_group("consensus_point");
    for n in [1_000usize, 100_000] {
        let init = InitialGaussian { mean: vec![1.0; 4], std: 2.0 };
        let ens = ParticleEnsemble::from_gaussian(n, &init, CboParams::new(1.0, 0.7, 30.0, 0.01), 1, 0).unwrap();
        let values = ens.values(&obj).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| consensus_point(black_box(ens.positions()), 4, black_box(&values), 30.0).unwrap())
        });
    }
    group.finish();
}

fn particle_step(c: &mut Criterion) {
    let obj = builtin_objective("quadratic", 2).unwrap();
    let init = InitialGaussian { mean: vec![1.0, 1.0], std: 1.0 };
    let base = ParticleEnsemble::from_gaussian(10_000, &init, CboParams::new(1.0, 0.5, 10.0, 0.01), 3, 0).unwrap();
    c.bench_function("cbo_step_n10000_d2", |b| {
        b.iter_batched(|| base.clone(), |mut ens| ens.step(&obj).unwrap(), criterion::BatchSize::SmallInput)
    });
}

fn spectral_rhs(c: &mut Criterion) {
    let obj = builtin_objective("quadratic", 2).unwrap();
    let spec = CutoffSpec::with_plateau(6.5, 6.5, 0.72).unwrap();
    let mut problem = PdeProblem::cbo(ConsensusSource::SelfConsistent { objective: obj, alpha: 1.0 }, Some(spec), 0.5);
    problem.sigma = 0.7;
    let mut group = c.benchmark_group("spectral_rhs_d2");
    group.sample_size(20);
    for (k, m) in [(32usize, 128usize), (64, 256)] {
        let mut solver = SpectralSolver::new(problem.clone(), 2, 8.0, k, m).unwrap();
        let field = solver
            .project_initial(&|v| (-((v[0] - 2.0).powi(2) + (v[1] - 2.0).powi(2))).exp())
            .unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("K{k}_M{m}")), &k, |b, _| {
            b.iter(|| solver.rhs(black_box(&field), 0.0).unwrap())
        });
    }
    group.finish();
}

fn cutoffs(c: &mut Criterion) {
    let spec = CutoffSpec::new(5.0, 50.0).unwrap();
    let base = CboCoefficients { center: vec![0.3, -0.2] };
    let points: Vec<Vec<f64>> = (0..1000).map(|i| vec![0.01 * i as f64, 5.0 - 0.007 * i as f64]).collect();
    c.bench_function("truncated_coefficients_1000", |b| {
        b.iter(|| {
            for p in &points {
                black_box(truncated_coefficients(&base, &spec, p, 0.0).unwrap());
            }
        })
    });
}

criterion_group!(benches, consensus, particle_step, spectral_rhs, cutoffs);
criterion_main!(benches);
