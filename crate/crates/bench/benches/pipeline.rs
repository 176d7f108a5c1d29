//! Wall-clock benchmarks along the hot path: synthesis, the channel
//! chain, the correction front end, the classifier, and a full
//! train step. Run with `cargo bench -p modrec-bench`.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use modrec_core::channel::{apply_channel, ChannelParams};
use modrec_core::frame::Scheme;
use modrec_core::modulation::{modulate, required_bits, DEFAULT_ROLLOFF, DEFAULT_SPS};
use modrec_core::nn::{softmax_xent, zero_grads, ParamSet};
use modrec_core::rng::derived_rng;
use modrec_core::trainer::{build_model, TrainConfig};
use rand::Rng;

const FS: f64 = 200e3;

fn random_bits(scheme: Scheme, seed: u64) -> Vec<bool> {
    let mut rng = derived_rng(seed, &[0xB175]);
    (0..required_bits(scheme, DEFAULT_SPS))
        .map(|_| rng.gen_bool(0.5))
        .collect()
}

fn bench_synthesis(c: &mut Criterion) {
    let bits = random_bits(Scheme::Qam16, 1);
    c.bench_function("modulate_qam16_frame", |b| {
        b.iter(|| {
            modulate(
                Scheme::Qam16,
                black_box(&bits),
                DEFAULT_SPS,
                DEFAULT_ROLLOFF,
                FS,
                3,
            )
            .unwrap()
        })
    });
}

fn bench_channel(c: &mut Criterion) {
    let bits = random_bits(Scheme::Qpsk, 2);
    let frame = modulate(Scheme::Qpsk, &bits, DEFAULT_SPS, DEFAULT_ROLLOFF, FS, 3).unwrap();
    let params = ChannelParams {
        snr_db: 10.0,
        ..ChannelParams::default()
    };
    c.bench_function("channel_full_chain", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed = seed.wrapping_add(1);
            apply_channel(black_box(&frame), &params, seed).unwrap()
        })
    });
}

fn bench_cascade(c: &mut Criterion) {
    let config = TrainConfig::default();
    let mut model = build_model(&config, 8).unwrap();
    let bits = random_bits(Scheme::Psk8, 4);
    let frame = modulate(Scheme::Psk8, &bits, DEFAULT_SPS, DEFAULT_ROLLOFF, FS, 3).unwrap();
    let (distorted, _) = apply_channel(&frame, &ChannelParams::default(), 9).unwrap();
    let iq = distorted.iq_concat();

    c.bench_function("cascade_forward", |b| {
        b.iter(|| {
            let stack = model.correction.forward(black_box(&iq));
            model.cnn.classify(black_box(stack))
        })
    });

    c.bench_function("cascade_train_step", |b| {
        b.iter(|| {
            zero_grads(&mut model as &mut dyn ParamSet);
            let stack = model.correction.forward(black_box(&iq));
            let logits = model.cnn.forward(stack).to_vec();
            let (loss, dlogits) = softmax_xent(&logits, 2);
            let dstack = model.cnn.backward(&dlogits);
            model.correction.backward(&dstack);
            black_box(loss)
        })
    });
}

criterion_group!(benches, bench_synthesis, bench_channel, bench_cascade);
criterion_main!(benches);
