use criterion::{criterion_group, criterion_main, Criterion};
use hkws_core::dsp::stft;
use hkws_core::features::{mfcc, FeatureConfig};
use hkws_core::neural::{build_model, preset};
use hkws_core::pipeline::{featurize, PipelineConfig};
use hkws_core::AudioClip;
use std::hint::black_box;

const RATE: u32 = 16_000;

/// Two seconds of a gliding tone with some harmonics.
fn test_clip() -> AudioClip {
    let samples = (0..2 * RATE as usize)
        .map(|i| {
            let t = i as f64 / RATE as f64;
            let f = 200.0 + 300.0 * t;
            (0..4).map(|h| (std::f64::consts::TAU * f * (h + 1) as f64 * t).sin() / (h + 1) as f64).sum::<f64>() * 0.2
        })
        .collect();
    AudioClip::new(samples, RATE)
}

fn dsp(c: &mut Criterion) {
    let clip = test_clip();
    let cfg = PipelineConfig::default();
    let spec = stft(&clip.samples, &cfg.window, RATE).unwrap();
    let fc = FeatureConfig::default();
    c.bench_function("stft_2s", |b| b.iter(|| stft(black_box(&clip.samples), &cfg.window, RATE).unwrap()));
    c.bench_function("mfcc_2s", |b| b.iter(|| mfcc(black_box(&spec), &fc)));
    c.bench_function("featurize_2s", |b| b.iter(|| featurize(black_box(&clip), &cfg).unwrap()));
}

fn neural(c: &mut Criterion) {
    let (_, m) = featurize(&test_clip(), &PipelineConfig::default()).unwrap();
    let model_cfg = preset("synthetic").unwrap().with_classes(4);
    let model = build_model(&model_cfg, m.n_frames, m.n_coeffs, 1).unwrap();
    let batch: Vec<&[f64]> = vec![&m.values; 8];
    let targets = [0, 1, 2, 3, 0, 1, 2, 3];
    let masks: Vec<u64> = (0..8).collect();
    c.bench_function("forward_synthetic", |b| b.iter(|| model.predict(black_box(&m.values)).unwrap()));
    c.bench_function("batch8_loss_and_grad_synthetic", |b| {
        b.iter(|| model.batch_loss_and_grad(black_box(&batch), &targets, Some(&masks)).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = dsp, neural
}
criterion_main!(benches);
