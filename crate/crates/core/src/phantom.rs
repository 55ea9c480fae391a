//! Analytic test objects for the tomography and Fourier operators.

use crate::image::Image;

/// One ellipse of an additive phantom: intensity, semi-axes, centre and
/// rotation (degrees), in normalized coordinates `[-1, 1]²` with y up.
#[derive(Debug, Clone, Copy)]
pub struct Ellipse {
    pub value: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    pub phi_deg: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.phi_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.x0, y - self.y0);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

/// The high-contrast ("modified") Shepp-Logan head phantom.
pub const SHEPP_LOGAN: [Ellipse; 10] = [
    Ellipse { value: 1.0, a: 0.69, b: 0.92, x0: 0.0, y0: 0.0, phi_deg: 0.0 },
    Ellipse { value: -0.8, a: 0.6624, b: 0.874, x0: 0.0, y0: -0.0184, phi_deg: 0.0 },
    Ellipse { value: -0.2, a: 0.11, b: 0.31, x0: 0.22, y0: 0.0, phi_deg: -18.0 },
    Ellipse { value: -0.2, a: 0.16, b: 0.41, x0: -0.22, y0: 0.0, phi_deg: 18.0 },
    Ellipse { value: 0.1, a: 0.21, b: 0.25, x0: 0.0, y0: 0.35, phi_deg: 0.0 },
    Ellipse { value: 0.1, a: 0.046, b: 0.046, x0: 0.0, y0: 0.1, phi_deg: 0.0 },
    Ellipse { value: 0.1, a: 0.046, b: 0.046, x0: 0.0, y0: -0.1, phi_deg: 0.0 },
    Ellipse { value: 0.1, a: 0.046, b: 0.023, x0: -0.08, y0: -0.605, phi_deg: 0.0 },
    Ellipse { value: 0.1, a: 0.023, b: 0.023, x0: 0.0, y0: -0.606, phi_deg: 0.0 },
    Ellipse { value: 0.1, a: 0.023, b: 0.046, x0: 0.06, y0: -0.605, phi_deg: 0.0 },
];

/// Rasterizes a sum of ellipses on an `n × n` grid, averaging
/// `supersample²` points per pixel.
pub fn rasterize(ellipses: &[Ellipse], n: usize, supersample: usize) -> Image {
    let ss = supersample.max(1);
    let inv = 1.0 / (ss * ss) as f64;
    Image::gray_from_fn(n, n, |i, j| {
        let mut acc = 0.0;
        for sy in 0..ss {
            for sx in 0..ss {
                let px = i as f64 + (sx as f64 + 0.5) / ss as f64;
                let py = j as f64 + (sy as f64 + 0.5) / ss as f64;
                let x = 2.0 * px / n as f64 - 1.0;
                let y = 1.0 - 2.0 * py / n as f64;
                acc += ellipses
                    .iter()
                    .filter(|e| e.contains(x, y))
                    .map(|e| e.value)
                    .sum::<f64>();
            }
        }
        acc * inv
    })
}

pub fn shepp_logan(n: usize) -> Image {
    rasterize(&SHEPP_LOGAN, n, 1)
}

/// Anti-aliased disk of value 1 and `radius_px`, centred on the pixel-grid
/// centre `((n-1)/2, (n-1)/2)`.
pub fn disk(n: usize, radius_px: f64) -> Image {
    let c = (n as f64 - 1.0) / 2.0;
    let ss = 8;
    Image::gray_from_fn(n, n, |x, y| {
        let mut hit = 0;
        for sy in 0..ss {
            for sx in 0..ss {
                let px = x as f64 - 0.5 + (sx as f64 + 0.5) / ss as f64;
                let py = y as f64 - 0.5 + (sy as f64 + 0.5) / ss as f64;
                if (px - c).powi(2) + (py - c).powi(2) <= radius_px * radius_px {
                    hit += 1;
                }
            }
        }
        hit as f64 / (ss * ss) as f64
    })
}
