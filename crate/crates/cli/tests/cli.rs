use std::path::Path;
use std::process::{Command, Output};

use medq_core::model::{Capability, Modality, QaPair};
use medq_core::pipeline::POOL_FILE;
use medq_core::synth::synthetic_image;
use medq_core::{Image, Manifest};

fn medq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medq"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn phantom_and_degrade() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("sl.png");
    ok(&medq(&["phantom", "shepp-logan", "--size", "64", "--out", s(&clean)]));
    let img = Image::load(&clean).unwrap();
    assert_eq!((img.width(), img.height(), img.channels()), (64, 64, 1));

    let out = dir.path().join("noisy.png");
    let spec = ok(&medq(&[
        "degrade", "--input", s(&clean), "--type", "gaussian_noise", "--severity", "L2",
        "--modality", "CT", "--seed", "4", "--out", s(&out),
    ]));
    let v: serde_json::Value = serde_json::from_str(spec.trim()).unwrap();
    assert_eq!(v["params"]["sigma"], 0.10);
    assert!(Image::load(&out).unwrap().psnr(&img) < 30.0);

    let same = dir.path().join("t0.png");
    ok(&medq(&[
        "degrade", "--input", s(&clean), "--type", "sparse_view", "--t", "0",
        "--modality", "CT", "--out", s(&same),
    ]));
    assert!(Image::load(&same).unwrap().bit_eq(&img));

    let bad = medq(&[
        "degrade", "--input", s(&clean), "--type", "bubble", "--modality", "CT", "--out", s(&out),
    ]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("not applicable"));
}

fn write_pool(dir: &Path, n: usize) {
    std::fs::create_dir_all(dir.join("src")).unwrap();
    let mut lines = String::new();
    for i in 0..n {
        let m = Modality::ALL[i % 7];
        let p = QaPair {
            pair_id: format!("c{i:02}"),
            image_path: format!("src/{i}.png"),
            question: format!("Pair {i}: what is shown here?"),
            options: vec!["one".into(), "two".into(), "three".into(), "four".into()],
            answer: "A".into(),
            modality: m,
            capability: Capability {
                high: "Perception".into(),
                mid: "Modality Recognition".into(),
                fine: "Modality".into(),
            },
            source: None,
        };
        synthetic_image(m, 48, i as u64).save_png(dir.join(&p.image_path)).unwrap();
        lines += &(serde_json::to_string(&p).unwrap() + "\n");
    }
    std::fs::write(dir.join(POOL_FILE), lines).unwrap();
}

#[test]
fn build_validate_review_report() {
    let dir = tempfile::tempdir().unwrap();
    let pool = dir.path().join("pool");
    write_pool(&pool, 7);
    let out = dir.path().join("bench");
    let msg = ok(&medq(&["build-manifest", "--pool", s(&pool), "--out", s(&out), "--seed", "3"]));
    assert!(msg.contains("49 samples from 7 pairs"), "{msg}");
    let manifest_path = out.join("manifest.jsonl");
    assert_eq!(ok(&medq(&["validate", "--manifest", s(&manifest_path)])).trim(), "ok");
    assert!(out.join("stats.json").exists());

    // A record whose answer is outside its options.
    let text = std::fs::read_to_string(&manifest_path).unwrap();
    let broken = dir.path().join("broken.jsonl");
    std::fs::write(&broken, text.replacen("\"answer\":\"A\"", "\"answer\":\"E\"", 1)).unwrap();
    let res = medq(&["validate", "--manifest", s(&broken)]);
    assert!(!res.status.success());
    assert_eq!(String::from_utf8_lossy(&res.stdout).lines().count(), 1);

    let manifest = Manifest::read(&manifest_path).unwrap();
    let victim = &manifest.samples[3].sample_id;
    let decisions = dir.path().join("decisions.jsonl");
    std::fs::write(
        &decisions,
        format!(
            "{{\"sample_id\":\"{victim}\",\"action\":\"discard\",\"reason\":\"insufficient_L2\",\"annotator\":\"r\",\"timestamp\":1}}\n"
        ),
    )
    .unwrap();
    let reviewed = dir.path().join("reviewed.jsonl");
    let summary = ok(&medq(&[
        "apply-review", "--manifest", s(&manifest_path), "--decisions", s(&decisions), "--out", s(&reviewed),
    ]));
    assert!(summary.contains("\"discarded\": 1"), "{summary}");
    assert_eq!(Manifest::read(&reviewed).unwrap().len(), 48);

    // Results where every trial answers "A" (always correct here).
    let results = dir.path().join("results.jsonl");
    let lines: String = manifest
        .samples
        .iter()
        .map(|s| {
            format!(
                "{{\"sample_id\":\"{}\",\"model\":\"m1\",\"temperature\":1.0,\"trials\":[{{\"response\":\"A\",\"label\":\"A\",\"latency_ms\":1}}]}}\n",
                s.sample_id
            )
        })
        .collect();
    std::fs::write(&results, lines).unwrap();
    let md = ok(&medq(&["report", "--results", s(&results), "--manifest", s(&manifest_path)]));
    assert!(md.contains("| m1 |"), "{md}");
    assert!(md.contains("100.00"), "{md}");
    let json = ok(&medq(&[
        "report", "--results", s(&results), "--manifest", s(&manifest_path),
        "--axes", "modality,severity", "--format", "json",
    ]));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 7);
    let csv = ok(&medq(&[
        "report", "--results", s(&results), "--manifest", s(&manifest_path), "--format", "csv",
    ]));
    assert!(csv.lines().next().unwrap().contains("L1&L2"));
}

#[test]
fn evaluate_against_unreachable_endpoint_records_failures() {
    let dir = tempfile::tempdir().unwrap();
    let pool = dir.path().join("pool");
    write_pool(&pool, 1);
    let out = dir.path().join("bench");
    ok(&medq(&["build-manifest", "--pool", s(&pool), "--out", s(&out)]));
    let results = dir.path().join("r.jsonl");
    // Port 9 (discard) on localhost refuses connections.
    let msg = ok(&medq(&[
        "evaluate", "--manifest", s(&out.join("manifest.jsonl")), "--endpoint", "http://127.0.0.1:9/v1",
        "--model", "m", "--trials", "1", "--parallel", "2", "--max-retries", "0", "--out", s(&results),
    ]));
    assert!(msg.contains("completed 7"), "{msg}");
    assert!(msg.contains("7 failed trials"), "{msg}");
}
