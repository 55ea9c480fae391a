//! Slide-preparation overlays for histopathology: blood cells, dark spots
//! and coverslip bubbles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub const BLOOD_CELL_RGB: [f64; 3] = [0.55, 0.08, 0.10];
pub const DARK_SPOT_LEVEL: f64 = 0.08;
pub const BUBBLE_BRIGHTENING: f64 = 0.15;

/// Mask weight of a bubble's interior relative to its rim.
const BUBBLE_INTERIOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlayKind {
    BloodCell,
    DarkSpot,
    Bubble,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overlay {
    pub kind: OverlayKind,
    pub count: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    pub opacity: f64,
}

fn stamp_disk(mask: &mut [f64], w: usize, h: usize, cx: f64, cy: f64, r: f64, value: f64) {
    let x0 = (cx - r).floor().max(0.0) as usize;
    let x1 = ((cx + r).ceil() as usize).min(w - 1);
    let y0 = (cy - r).floor().max(0.0) as usize;
    let y1 = ((cy + r).ceil() as usize).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            if d2 <= r * r {
                let m = &mut mask[y * w + x];
                *m = m.max(value);
            }
        }
    }
}

fn stamp_ring(mask: &mut [f64], w: usize, h: usize, cx: f64, cy: f64, r: f64) {
    let width = (0.15 * r).max(1.0);
    let inner = (r - width).max(0.0);
    let x0 = (cx - r).floor().max(0.0) as usize;
    let x1 = ((cx + r).ceil() as usize).min(w - 1);
    let y0 = (cy - r).floor().max(0.0) as usize;
    let y1 = ((cy + r).ceil() as usize).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            let value = if d > r {
                continue;
            } else if d >= inner {
                1.0
            } else {
                BUBBLE_INTERIOR
            };
            let m = &mut mask[y * w + x];
            *m = m.max(value);
        }
    }
}

/// Rasterized coverage of all artifacts in `[0, 1]`. Centres are drawn
/// uniformly over the positions that keep each disk inside the frame.
pub fn artifact_mask(w: usize, h: usize, overlay: &Overlay, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![0.0; w * h];
    let uniform = |lo: f64, hi: f64, rng: &mut ChaCha8Rng| {
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
    };
    for _ in 0..overlay.count {
        let r = uniform(overlay.radius_min, overlay.radius_max, &mut rng);
        let cx = uniform(r, w as f64 - 1.0 - r, &mut rng);
        let cy = uniform(r, h as f64 - 1.0 - r, &mut rng);
        match overlay.kind {
            OverlayKind::BloodCell => stamp_disk(&mut mask, w, h, cx, cy, r, 1.0),
            OverlayKind::DarkSpot => {
                let lobes = rng.random_range(3..=6);
                for _ in 0..lobes {
                    let jx = uniform(-0.5 * r, 0.5 * r, &mut rng);
                    let jy = uniform(-0.5 * r, 0.5 * r, &mut rng);
                    let lr = r * uniform(0.45, 0.8, &mut rng);
                    stamp_disk(&mut mask, w, h, cx + jx, cy + jy, lr, 1.0);
                }
            }
            OverlayKind::Bubble => stamp_ring(&mut mask, w, h, cx, cy, r),
        }
    }
    mask
}

/// Alpha-blends artifact colour over the image: `(1 - m·a)·in + m·a·colour`.
/// Pixels outside the mask are untouched.
pub fn overlay_artifact(img: &Image, overlay: &Overlay, seed: u64) -> Result<Image> {
    if !(0.0..=1.0).contains(&overlay.opacity) {
        return Err(Error::param("opacity", "must lie in [0, 1]"));
    }
    if !(overlay.radius_min > 0.0 && overlay.radius_max >= overlay.radius_min) {
        return Err(Error::param("radius", "need 0 < min <= max"));
    }
    let (w, h) = (img.width(), img.height());
    let half = w.min(h) as f64 / 2.0;
    if overlay.radius_max > half {
        return Err(Error::param(
            "radius",
            format!("{} exceeds half the image size ({half})", overlay.radius_max),
        ));
    }
    if overlay.count == 0 || overlay.opacity == 0.0 {
        return Ok(img.clone());
    }
    let mask = artifact_mask(w, h, overlay, seed);
    let channels = img.channels();
    let gray_blood = img_luma(BLOOD_CELL_RGB);
    let mut data = img.data().to_vec();
    for (i, &m) in mask.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let a = m * overlay.opacity;
        for c in 0..channels {
            let v = &mut data[i * channels + c];
            let colour = match overlay.kind {
                OverlayKind::BloodCell if channels == 3 => BLOOD_CELL_RGB[c],
                OverlayKind::BloodCell => gray_blood,
                OverlayKind::DarkSpot => DARK_SPOT_LEVEL,
                OverlayKind::Bubble => (*v + BUBBLE_BRIGHTENING).min(1.0),
            };
            *v = (1.0 - a) * *v + a * colour;
        }
    }
    Image::from_vec(w, h, channels, data)
}

fn img_luma(rgb: [f64; 3]) -> f64 {
    Image::from_vec(1, 1, 3, rgb.to_vec()).expect("valid pixel").luminance()[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tissue(n: usize) -> Image {
        let data = (0..n * n)
            .flat_map(|i| {
                let t = (i % 17) as f64 / 17.0;
                [0.8 - 0.2 * t, 0.5 + 0.1 * t, 0.7]
            })
            .collect();
        Image::from_vec(n, n, 3, data).unwrap()
    }

    fn overlay(kind: OverlayKind, count: usize, opacity: f64) -> Overlay {
        Overlay {
            kind,
            count,
            radius_min: 6.0,
            radius_max: 10.0,
            opacity,
        }
    }

    #[test]
    fn zero_count_or_opacity_is_identity() {
        let img = tissue(64);
        for kind in [OverlayKind::BloodCell, OverlayKind::DarkSpot, OverlayKind::Bubble] {
            assert!(overlay_artifact(&img, &overlay(kind, 0, 0.9), 1).unwrap().bit_eq(&img));
            assert!(overlay_artifact(&img, &overlay(kind, 5, 0.0), 1).unwrap().bit_eq(&img));
        }
    }

    #[test]
    fn opaque_blood_cells_take_the_cell_colour() {
        let img = tissue(64);
        let spec = overlay(OverlayKind::BloodCell, 4, 1.0);
        let out = overlay_artifact(&img, &spec, 11).unwrap();
        let mask = artifact_mask(64, 64, &spec, 11);
        let mut inside = 0;
        for (i, &m) in mask.iter().enumerate() {
            for c in 0..3 {
                let got = out.data()[i * 3 + c];
                if m == 1.0 {
                    assert_eq!(got, BLOOD_CELL_RGB[c]);
                } else {
                    assert_eq!(got.to_bits(), img.data()[i * 3 + c].to_bits());
                }
            }
            inside += (m == 1.0) as usize;
        }
        assert!(inside > 0);
    }

    #[test]
    fn rejects_oversized_radius() {
        let img = tissue(32);
        let mut spec = overlay(OverlayKind::Bubble, 2, 0.5);
        spec.radius_max = 17.0;
        assert!(overlay_artifact(&img, &spec, 0).is_err());
        spec.radius_max = 8.0;
        spec.opacity = 1.5;
        assert!(overlay_artifact(&img, &spec, 0).is_err());
    }

    #[test]
    fn bubbles_brighten() {
        let img = Image::filled(64, 64, 1, 0.4);
        let out = overlay_artifact(&img, &overlay(OverlayKind::Bubble, 3, 1.0), 2).unwrap();
        assert!(out.data().iter().all(|&v| v >= 0.4));
        assert!(out.data().iter().any(|&v| (v - 0.55).abs() < 1e-12));
    }
}
