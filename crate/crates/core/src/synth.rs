//! Seeded synthetic stand-ins for each modality, used by tests, benches
//! and demos when no real images are at hand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::Image;
use crate::model::{DegradationType, Modality};
use crate::phantom::{rasterize, Ellipse};

fn blobs(rng: &mut ChaCha8Rng, count: usize) -> Vec<Ellipse> {
    (0..count)
        .map(|_| Ellipse {
            value: rng.random_range(-0.25..0.35),
            a: rng.random_range(0.05..0.35),
            b: rng.random_range(0.05..0.35),
            x0: rng.random_range(-0.5..0.5),
            y0: rng.random_range(-0.5..0.5),
            phi_deg: rng.random_range(0.0..180.0),
        })
        .collect()
}

/// Smooth texture from a few random plane waves, roughly in [-1, 1].
fn waves(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let comps: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    (0..n * n)
        .map(|i| {
            let (x, y) = ((i % n) as f64, (i / n) as f64);
            comps.iter().map(|(fx, fy, ph)| (fx * x + fy * y + ph).sin()).sum::<f64>() / 4.0
        })
        .collect()
}

fn gray_body(rng: &mut ChaCha8Rng, n: usize, base: f64) -> Vec<f64> {
    let mut shapes = vec![Ellipse {
        value: base,
        a: rng.random_range(0.7..0.85),
        b: rng.random_range(0.75..0.9),
        x0: 0.0,
        y0: 0.0,
        phi_deg: 0.0,
    }];
    let extra = rng.random_range(4..8);
    shapes.extend(blobs(rng, extra));
    let body = rasterize(&shapes, n, 2);
    let tex = waves(rng, n);
    body.data()
        .iter()
        .zip(&tex)
        .map(|(b, t)| (0.1 + b * 0.8 + 0.05 * t).clamp(0.02, 0.95))
        .collect()
}

fn tinted(rng: &mut ChaCha8Rng, n: usize, tint: [f64; 3], spread: f64) -> Image {
    let plane = gray_body(rng, n, 0.6);
    let tex = waves(rng, n);
    let data = plane
        .iter()
        .zip(&tex)
        .flat_map(|(&v, &t)| {
            tint.map(|c| (c * (0.4 + 0.6 * v) + spread * t).clamp(0.02, 0.98))
        })
        .collect();
    Image::from_vec(n, n, 3, data).expect("valid synthetic image")
}

/// A deterministic `n × n` image with the rough look of `modality`:
/// grayscale for radiology, RGB for the optical modalities.
pub fn synthetic_image(modality: Modality, n: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (modality as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    match modality {
        Modality::Ct | Modality::Mri | Modality::XRay => {
            let base = match modality {
                Modality::Ct => 0.45,
                Modality::Mri => 0.55,
                _ => 0.65,
            };
            Image::from_vec(n, n, 1, gray_body(&mut rng, n, base)).expect("valid synthetic image")
        }
        Modality::Ultrasound => {
            let body = gray_body(&mut rng, n, 0.4);
            let data = body
                .iter()
                .map(|v| (v * rng.random_range(0.7..1.3)).clamp(0.0, 1.0))
                .collect();
            Image::from_vec(n, n, 1, data).expect("valid synthetic image")
        }
        Modality::Dermoscopy => tinted(&mut rng, n, [0.85, 0.62, 0.50], 0.04),
        Modality::Histopathology => tinted(&mut rng, n, [0.82, 0.55, 0.78], 0.08),
        Modality::Endoscopy => tinted(&mut rng, n, [0.90, 0.45, 0.40], 0.05),
    }
}

/// `count` images cycling through every modality.
pub fn mixed_corpus(count: usize, n: usize, seed: u64) -> Vec<(Modality, Image)> {
    (0..count)
        .map(|i| {
            let m = Modality::ALL[i % Modality::ALL.len()];
            (m, synthetic_image(m, n, seed.wrapping_add(i as u64)))
        })
        .collect()
}

/// `count` images cycling through the modalities `kind` applies to.
pub fn corpus_for(kind: DegradationType, count: usize, n: usize, seed: u64) -> Vec<(Modality, Image)> {
    let modalities = kind.modalities();
    (0..count)
        .map(|i| {
            let m = modalities[i % modalities.len()];
            (m, synthetic_image(m, n, seed.wrapping_add(i as u64)))
        })
        .collect()
}
