//! Sequential (one-thread pool) against parallel (default pool) timings of
//! the annular convolution and a full training step.

use acnn::annular::{annular_conv_forward_rings, ConvKernel};
use acnn::data::{generate_sample, DatasetSpec, ShapeKind};
use acnn::network::{AblationVariant, Model, ModelOptions, NetworkConfig, PlanOptions};
use acnn::numeric::{Adam, AdamConfig, Mode};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let all = rayon::current_num_threads();
    vec![
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", rayon::ThreadPoolBuilder::new().num_threads(all).build().unwrap()),
    ]
}

fn conv_forward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (rings, ring_len, f_in, f_out, k) = (16 * 512, 16, 32, 64, 3);
    let x: Vec<f32> = (0..rings * ring_len * f_in).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f32> = (0..k * f_in * f_out).map(|_| rng.random_range(-0.1..0.1)).collect();
    let kernel = ConvKernel::new(k, f_in, f_out, w, vec![0.0; f_out]).unwrap();
    let mut group = c.benchmark_group("annular_conv_forward");
    group.sample_size(20);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| annular_conv_forward_rings(&x, ring_len, &kernel).unwrap()))
        });
    }
    group.finish();
}

fn train_step(c: &mut Criterion) {
    let spec = DatasetSpec::default();
    let clouds: Vec<_> = (0..16)
        .map(|i| generate_sample(&spec, Some(ShapeKind::ALL[i % 5]), i as u64).unwrap())
        .collect();
    let refs: Vec<_> = clouds.iter().collect();
    let labels: Vec<usize> = (0..16).map(|i| i % 5).collect();
    let model =
        Model::<f32>::seeded(NetworkConfig::desk_3l(5), AblationVariant::Full, ModelOptions::default(), 0).unwrap();
    let mut group = c.benchmark_group("train_step_desk_3l_batch16");
    group.sample_size(10);
    for (name, pool) in pools() {
        let mut model = model.clone();
        let mut adam = Adam::new(AdamConfig::default(), &model.params);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                pool.install(|| {
                    let plans = model.plan_batch(&refs, PlanOptions::default(), &mut rng).unwrap();
                    let (logits, tape) = model.forward(&plans, Mode::Train, &mut rng).unwrap();
                    let (_, g) = model.loss(&logits, &labels).unwrap();
                    let grads = model.backward(&plans, &tape, &g, false).unwrap();
                    adam.step(&mut model.params, &grads.params, 1e-3).unwrap();
                    model.apply_batch_stats(&tape);
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, conv_forward, train_step);
criterion_main!(benches);
