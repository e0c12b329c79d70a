//! Sequential vs parallel on the three data-parallel stages: generating a
//! dataset, preparing trials, and training the signal networks.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gaitcorr::learning::{train_signal_models, LearningConfig};
use gaitcorr::neuralnet::TrainConfig;
use gaitcorr::pipeline::{prepare_all, signal_pairs, PipelineConfig};
use gaitcorr::synth::{generate_dataset, ErrorModel, SynthConfig};
use gaitcorr::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn config() -> SynthConfig {
    SynthConfig {
        participants: 6,
        trials: 2,
        error: ErrorModel { noise_sigma: 0.003, ..ErrorModel::zero() },
        ..SynthConfig::default()
    }
}

fn bench(c: &mut Criterion) {
    let cfg = config();
    let pc = PipelineConfig::default();
    let data = generate_dataset(&cfg, Execution::Sequential).unwrap();
    let pairs: Vec<_> = data.iter().map(|t| (t.camera.clone(), t.mocap.clone())).collect();
    let trials = prepare_all(&pairs, &pc, Execution::Sequential).unwrap();
    let sp = signal_pairs(&trials);
    let learning = LearningConfig { train: TrainConfig { max_epochs: 5, ..TrainConfig::default() }, ..LearningConfig::default() };

    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("synth", name), &exec, |b, &e| b.iter(|| generate_dataset(&cfg, e).unwrap()));
        g.bench_with_input(BenchmarkId::new("prepare", name), &exec, |b, &e| b.iter(|| prepare_all(&pairs, &pc, e).unwrap()));
        g.bench_with_input(BenchmarkId::new("train_signals_5_epochs", name), &exec, |b, &e| {
            b.iter(|| train_signal_models(&sp, &learning, &[], e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
