#![allow(dead_code)]

use std::path::Path;

use medq_core::model::{option_label, Capability, DegradationSpec, DegradedSample, Modality, QaPair};
use medq_core::pipeline::{build_manifest, PipelineConfig, POOL_FILE};
use medq_core::synth::synthetic_image;
use medq_core::Manifest;

pub fn pair(i: usize, k: usize, modality: Modality) -> QaPair {
    QaPair {
        pair_id: format!("q{i:04}"),
        image_path: format!("src/q{i:04}.png"),
        question: format!("Case {i}: which finding is most likely?"),
        options: (0..k).map(|j| format!("finding {j}")).collect(),
        answer: option_label(i % k).to_string(),
        modality,
        capability: Capability {
            high: "Perception".into(),
            mid: "Anatomy Identification".into(),
            fine: "Organ".into(),
        },
        source: Some("synthetic".into()),
    }
}

/// `n` clean samples with distinct questions that all point at one image.
pub fn flat_manifest(dir: &Path, n: usize, k: usize) -> Manifest {
    synthetic_image(Modality::Ct, 16, 1).save_png(dir.join("img.png")).unwrap();
    let samples = (0..n)
        .map(|i| {
            let p = pair(i, k, Modality::Ct);
            DegradedSample::new(&p, format!("{}__L0", p.pair_id), &DegradationSpec::identity(), "img.png".into())
        })
        .collect();
    Manifest::new(samples)
}

/// A pool of `n` synthetic pairs, cycled over modalities, built into a
/// manifest under `dir/out`.
pub fn built_manifest(dir: &Path, n: usize) -> (Manifest, std::path::PathBuf) {
    let pool = dir.join("pool");
    std::fs::create_dir_all(pool.join("src")).unwrap();
    let mut lines = String::new();
    for i in 0..n {
        let m = Modality::ALL[i % Modality::ALL.len()];
        let p = pair(i, 4, m);
        synthetic_image(m, 48, i as u64).save_png(pool.join(&p.image_path)).unwrap();
        lines += &(serde_json::to_string(&p).unwrap() + "\n");
    }
    std::fs::write(pool.join(POOL_FILE), lines).unwrap();
    let out = dir.join("out");
    let built = build_manifest(&pool, &PipelineConfig::default(), 7, &out).unwrap();
    (built.manifest, built.manifest_path)
}
