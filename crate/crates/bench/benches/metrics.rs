use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use medq_core::eval::Trial;
use medq_core::model::{option_label, Capability, DegradationSpec, DegradedSample, QaPair, Modality};
use medq_core::{aggregate_report, confidence, extract_answer, vote_distribution, AccuracyMode, Axis, Manifest, TrialRecord};

fn confidence_bench(c: &mut Criterion) {
    let labels: Vec<Option<usize>> = (0..10).map(|i| Some(i % 3)).collect();
    c.bench_function("confidence_t10_k4", |b| {
        b.iter(|| confidence(&vote_distribution(black_box(&labels), 4).unwrap().p, 4).unwrap())
    });
    c.bench_function("extract_answer", |b| {
        b.iter(|| extract_answer(black_box("The most likely answer is C."), 4))
    });
}

fn report_bench(c: &mut Criterion) {
    let n = 5000;
    let samples: Vec<DegradedSample> = (0..n)
        .map(|i| {
            let pair = QaPair {
                pair_id: format!("p{i}"),
                image_path: String::new(),
                question: "q".into(),
                options: vec!["a".into(), "b".into(), "c".into(), "d".into()],
                answer: "A".into(),
                modality: Modality::ALL[i % 7],
                capability: Capability::default(),
                source: None,
            };
            DegradedSample::new(&pair, format!("p{i}__L0"), &DegradationSpec::identity(), String::new())
        })
        .collect();
    let manifest = Manifest::new(samples);
    let results: Vec<TrialRecord> = (0..n)
        .map(|i| TrialRecord {
            sample_id: format!("p{i}__L0"),
            model: format!("m{}", i % 4),
            temperature: 1.0,
            trials: (0..3).map(|t| Trial::new(&option_label((i + t) % 4).to_string(), 4, 0)).collect(),
        })
        .collect();
    c.bench_function("report_5000_samples", |b| {
        b.iter(|| {
            aggregate_report(black_box(&results), &manifest, &[Axis::Model, Axis::Modality], AccuracyMode::PerTrial)
                .unwrap()
        })
    });
}

criterion_group!(benches, confidence_bench, report_bench);
criterion_main!(benches);
