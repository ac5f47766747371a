use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qsvm_core::calibration::{random_test_functions, CalibrationCheck};
use qsvm_core::distributions::{ConditionalModel, Location, LpExponent};
use qsvm_core::exec::Execution;
use qsvm_core::kernels::{gram_with, uniform_inputs, KernelSpec};
use qsvm_core::quadrature::XQuadrature;
use qsvm_core::solver::{predict_many, train, SolverOptions};
use qsvm_core::Tau;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn calibration(c: &mut Criterion) {
    let model = ConditionalModel::uniform_noise(0.5, Location::Sine { amplitude: 0.5 }).unwrap();
    let quad = XQuadrature::composite(1, 32, 8).unwrap();
    let check = CalibrationCheck::new(&model, Tau::new(0.5).unwrap(), LpExponent::Infinite, quad).unwrap();
    let fs = random_test_functions(8, 1000, 1).unwrap();
    let mut group = c.benchmark_group("calibration_1000_functions");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| black_box(check.self_calibration(&fs, exec, 1e-8))));
    }
    group.finish();
}

fn gram(c: &mut Criterion) {
    let spec = KernelSpec::gaussian(0.5).unwrap();
    let mut group = c.benchmark_group("gram");
    for n in [256usize, 1024] {
        let xs = uniform_inputs(n, 2, 3);
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &xs, |b, xs| {
                b.iter(|| black_box(gram_with(&spec, xs, 2, exec).unwrap()))
            });
        }
    }
    group.finish();
}

fn prediction(c: &mut Criterion) {
    let spec = KernelSpec::gaussian(0.5).unwrap();
    let model = ConditionalModel::uniform_noise(0.5, Location::Sine { amplitude: 0.5 }).unwrap();
    let data = model.sample_joint(300, 5).unwrap();
    let (svm, _) = train(&data, &spec, 1e-3, Tau::new(0.5).unwrap(), &SolverOptions::default()).unwrap();
    let xs = uniform_inputs(20_000, 1, 9);
    let mut group = c.benchmark_group("predict_20000");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| black_box(predict_many(&svm, &xs, exec))));
    }
    group.finish();
}

criterion_group!(benches, calibration, gram, prediction);
criterion_main!(benches);
