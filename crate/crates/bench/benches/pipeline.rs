use criterion::{criterion_group, criterion_main, Criterion};
use deblur_core::attack::{pgd_attack, AttackConfig};
use deblur_core::fixtures;
use deblur_core::grad::{loss_and_grad, LossKind, UntargetedReference};
use deblur_core::recon::{CnnConfig, UnrolledConfig, WienerConfig};
use deblur_core::{convolve_circular, make_blurry, BlurModel, Image, Reconstructor};
use std::hint::black_box;

fn fixture() -> (Image, deblur_core::Kernel, Image) {
    let source = fixtures::checker_disk(64);
    let kernel = fixtures::motion_kernel(17, 37);
    let model = BlurModel::new(kernel.clone(), 0.01, 7).unwrap();
    let blurry = make_blurry(&source, &model).unwrap();
    (source, kernel, blurry)
}

fn reconstructors(kernel: &deblur_core::Kernel) -> Vec<(&'static str, Reconstructor)> {
    vec![
        (
            "wiener",
            Reconstructor::wiener(WienerConfig::default(), kernel.clone()),
        ),
        (
            "unrolled_k10",
            Reconstructor::unrolled(UnrolledConfig::craft_default(), kernel.clone()),
        ),
        (
            "cnn_32ch",
            Reconstructor::cnn(CnnConfig::default_shape(1, 3)),
        ),
    ]
}

fn bench_blur(c: &mut Criterion) {
    let (source, kernel, _) = fixture();
    c.bench_function("convolve_circular_64x64_k17", |b| {
        b.iter(|| convolve_circular(black_box(&source), black_box(&kernel)).unwrap())
    });
}

fn bench_reconstruct(c: &mut Criterion) {
    let (_, kernel, blurry) = fixture();
    let mut group = c.benchmark_group("reconstruct_64x64");
    for (name, recon) in reconstructors(&kernel) {
        group.bench_function(name, |b| {
            b.iter(|| recon.reconstruct(black_box(&blurry)).unwrap())
        });
    }
    group.finish();
}

fn bench_loss_and_grad(c: &mut Criterion) {
    let (_, kernel, blurry) = fixture();
    let delta = Image::zeros(64, 64, 1);
    let mut group = c.benchmark_group("loss_and_grad_64x64");
    group.sample_size(20);
    for (name, recon) in reconstructors(&kernel) {
        let loss = LossKind::Untargeted(UntargetedReference::compute(&recon, &blurry).unwrap());
        group.bench_function(name, |b| {
            b.iter(|| loss_and_grad(&recon, black_box(&blurry), black_box(&delta), &loss).unwrap())
        });
    }
    group.finish();
}

fn bench_attack_step_batch(c: &mut Criterion) {
    let (_, kernel, blurry) = fixture();
    let recon = Reconstructor::wiener(WienerConfig::default(), kernel);
    let mut group = c.benchmark_group("pgd_attack_wiener");
    group.sample_size(10);
    group.bench_function("25_steps_64x64", |b| {
        b.iter(|| {
            let cfg = AttackConfig {
                num_steps: 25,
                ..AttackConfig::untargeted(8.0 / 255.0)
            };
            pgd_attack(&recon, black_box(&blurry), &cfg, None).unwrap()
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_blur,
    bench_reconstruct,
    bench_loss_and_grad,
    bench_attack_step_batch
);
criterion_main!(benches);
