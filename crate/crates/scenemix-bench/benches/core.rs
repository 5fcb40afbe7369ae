use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use scenemix::acoustics::{
    absorption_from_rt60, compute_rir, convolve, simulate_scene, Environment, KernelConfig,
    RoomModel, SceneSimParams,
};
use scenemix::fixtures::{balcony_response, balcony_scene, demo_speech};
use scenemix::scene::{corpus_metrics, evaluate, parse_scene_info, FilterConfig, Vec3};
use scenemix::tta::{synthesize_noise, FixtureTta, TtaRequest};

fn reference_room(max_order: u32) -> RoomModel {
    let dimensions = Vec3::new(4.0, 2.5, 4.0);
    RoomModel {
        dimensions,
        absorption: absorption_from_rt60(0.5, dimensions).unwrap(),
        max_order,
        sample_rate: 16_000,
        speed_of_sound: 343.0,
        environment: Environment::Indoor,
    }
}

fn bench_rir(c: &mut Criterion) {
    let source = Vec3::new(2.0, 1.5, 1.6);
    let mic = Vec3::new(3.5, 0.5, 1.2);
    let kernel = KernelConfig::default();
    let mut group = c.benchmark_group("rir");
    for order in [1u32, 2, 3] {
        let room = reference_room(order);
        group.bench_function(format!("order{order}"), |b| {
            b.iter(|| compute_rir(black_box(&room), &source, &mic, &kernel).unwrap())
        });
    }
    group.finish();
}

fn bench_convolve(c: &mut Criterion) {
    let signal_1s: Vec<f64> = (0..16_000).map(|i| (i as f64 * 0.01).sin()).collect();
    let rir_short: Vec<f64> = (0..200).map(|i| 0.9f64.powi(i) * 0.01).collect();
    let rir_long: Vec<f64> = (0..2_000).map(|i| 0.99f64.powi(i) * 0.01).collect();

    let mut group = c.benchmark_group("convolve");
    // Stays under the direct-path threshold.
    group.bench_function("direct_256x200", |b| {
        b.iter(|| convolve(black_box(&signal_1s[..256]), black_box(&rir_short)))
    });
    group.bench_function("fft_16000x200", |b| {
        b.iter(|| convolve(black_box(&signal_1s), black_box(&rir_short)))
    });
    group.bench_function("fft_16000x2000", |b| {
        b.iter(|| convolve(black_box(&signal_1s), black_box(&rir_long)))
    });
    group.finish();
}

fn bench_scene_text(c: &mut Criterion) {
    let response = balcony_response();
    let filter = FilterConfig::default();
    let corpus = scenemix::fixtures::engineered_corpus();

    let mut group = c.benchmark_group("scene");
    group.bench_function("parse", |b| {
        b.iter(|| parse_scene_info(black_box(&response)).unwrap())
    });
    group.bench_function("evaluate", |b| {
        b.iter(|| evaluate(black_box(&response), &filter))
    });
    group.bench_function("corpus_metrics_40", |b| {
        b.iter(|| corpus_metrics(black_box(&corpus), &filter).unwrap())
    });
    group.finish();
}

fn bench_synthesis(c: &mut Criterion) {
    let request = TtaRequest::new("running water", 7);
    c.bench_function("tta/fixture_5s", |b| {
        b.iter(|| synthesize_noise(black_box(&request), &FixtureTta).unwrap())
    });
}

fn bench_simulate(c: &mut Criterion) {
    let scene = balcony_scene();
    let speech = demo_speech(3, 1.0, 16_000);
    let noises: Vec<_> = scene
        .noise_sources
        .iter()
        .map(|source| {
            let request = TtaRequest {
                duration: 1.0,
                ..TtaRequest::new(&source.noise_type, 7)
            };
            (
                source.clone(),
                synthesize_noise(&request, &FixtureTta).unwrap(),
            )
        })
        .collect();
    let params = SceneSimParams::default();

    let mut group = c.benchmark_group("simulate");
    group.sample_size(20);
    group.bench_function("balcony_1s", |b| {
        b.iter(|| simulate_scene(black_box(&scene), &speech, &noises, &params).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_rir,
    bench_convolve,
    bench_scene_text,
    bench_synthesis,
    bench_simulate
);
criterion_main!(benches);
