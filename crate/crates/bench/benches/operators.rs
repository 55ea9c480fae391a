use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use medq_bench::{image_for, l2_spec};
use medq_core::degrade::{ct, mri};
use medq_core::model::DegradationType;
use medq_core::phantom::shepp_logan;
use medq_core::apply_degradation;

fn every_type(c: &mut Criterion) {
    let mut group = c.benchmark_group("l2_128px");
    group.sample_size(10);
    for kind in DegradationType::ALL {
        let (m, img) = image_for(kind, 128);
        let spec = l2_spec(kind, m, 3);
        group.bench_with_input(BenchmarkId::from_parameter(kind.name()), &img, |b, img| {
            b.iter(|| apply_degradation(black_box(img), m, &spec).unwrap())
        });
    }
    group.finish();
}

fn tomography(c: &mut Criterion) {
    let img = shepp_logan(256);
    let angles = ct::full_angles(360);
    let sino = ct::radon_forward(&img, &angles).unwrap();
    let mut group = c.benchmark_group("ct_256px_360views");
    group.sample_size(10);
    group.bench_function("radon", |b| b.iter(|| ct::radon_forward(black_box(&img), &angles).unwrap()));
    group.bench_function("fbp", |b| b.iter(|| ct::fbp_reconstruct(black_box(&sino), 256).unwrap()));
    group.finish();
}

fn fourier(c: &mut Criterion) {
    let img = shepp_logan(256);
    c.bench_function("kspace_round_trip_256px", |b| {
        b.iter(|| mri::kspace_inverse(&mri::kspace_forward(black_box(&img))))
    });
}

criterion_group!(benches, every_type, tomography, fourier);
criterion_main!(benches);
