//! Cross-modality operators: noise, blurs, resolution loss, intensity jitter
//! and rigid motion.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::Image;

/// Maps an out-of-range index back into `0..n` by mirror reflection
/// (`d c b a | a b c d | d c b a`).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Bilinear sample of a plane; `None` when `(x, y)` lies outside the pixel
/// grid. Coordinates within 1e-9 of the border snap inside.
#[inline]
pub(crate) fn bilinear(plane: &[f64], w: usize, h: usize, x: f64, y: f64) -> Option<f64> {
    const EPS: f64 = 1e-9;
    if x < -EPS || y < -EPS || x > (w - 1) as f64 + EPS || y > (h - 1) as f64 + EPS {
        return None;
    }
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
    let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
    Some(top * (1.0 - fy) + bottom * fy)
}

fn map_planes(img: &Image, f: impl Fn(&[f64]) -> Vec<f64>) -> Image {
    let planes: Vec<Vec<f64>> = img.planes().iter().map(|p| f(p)).collect();
    Image::from_planes(img.width(), img.height(), &planes)
}

/// Adds i.i.d. zero-mean Gaussian noise to every sample.
pub fn gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::param("sigma", "must be a finite value >= 0"));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::param("sigma", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = img
        .data()
        .iter()
        .map(|&v| v + normal.sample(&mut rng))
        .collect();
    Image::from_vec(img.width(), img.height(), img.channels(), data)
}

/// Normalized 1-D Gaussian taps over `-radius..=radius`, radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

fn convolve_separable(plane: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                acc += t * row[reflect(x as isize + k as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                acc += t * tmp[reflect(y as isize + k as isize - r, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Isotropic Gaussian low-pass filter with reflective borders.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::param("sigma", "must be a finite value >= 0"));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let taps = gaussian_kernel(sigma);
    if taps.len() == 1 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    Ok(map_planes(img, |p| convolve_separable(p, w, h, &taps)))
}

/// Sparse 2-D kernel entry: pixel offset and weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub dx: isize,
    pub dy: isize,
    pub weight: f64,
}

/// Line kernel of `length` samples centred on the origin. Samples at
/// fractional positions are splatted bilinearly, so the weights always sum
/// to one. Angle is counter-clockwise from the +x axis with y pointing down.
pub fn line_kernel(length: usize, angle_deg: f64) -> Vec<Tap> {
    let theta = angle_deg.to_radians();
    let (dir_x, dir_y) = (theta.cos(), -theta.sin());
    let mut taps: Vec<Tap> = Vec::new();
    let mut add = |dx: isize, dy: isize, w: f64| {
        if w <= 1e-12 {
            return;
        }
        match taps.iter_mut().find(|t| t.dx == dx && t.dy == dy) {
            Some(t) => t.weight += w,
            None => taps.push(Tap { dx, dy, weight: w }),
        }
    };
    let share = 1.0 / length as f64;
    for k in 0..length {
        let o = k as f64 - (length as f64 - 1.0) / 2.0;
        // Snap float noise so axis-aligned kernels stay on the grid.
        let snap = |v: f64| if (v - v.round()).abs() < 1e-9 { v.round() } else { v };
        let (px, py) = (snap(o * dir_x), snap(o * dir_y));
        let (x0, y0) = (px.floor(), py.floor());
        let (fx, fy) = (px - x0, py - y0);
        let (x0, y0) = (x0 as isize, y0 as isize);
        add(x0, y0, share * (1.0 - fx) * (1.0 - fy));
        add(x0 + 1, y0, share * fx * (1.0 - fy));
        add(x0, y0 + 1, share * (1.0 - fx) * fy);
        add(x0 + 1, y0 + 1, share * fx * fy);
    }
    taps.sort_by_key(|t| (t.dy, t.dx));
    taps
}

fn convolve_taps(plane: &[f64], w: usize, h: usize, taps: &[Tap]) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for t in taps {
                let sx = reflect(x as isize - t.dx, w);
                let sy = reflect(y as isize - t.dy, h);
                acc += t.weight * plane[sy * w + sx];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Directional blur along a straight line of `length_px` pixels.
pub fn motion_blur(img: &Image, length_px: usize, angle_deg: f64) -> Result<Image> {
    if length_px == 0 {
        return Err(Error::param("length", "must be >= 1"));
    }
    if !angle_deg.is_finite() {
        return Err(Error::param("angle", "must be finite"));
    }
    if length_px == 1 {
        return Ok(img.clone());
    }
    let taps = line_kernel(length_px, angle_deg);
    let (w, h) = (img.width(), img.height());
    Ok(map_planes(img, |p| convolve_taps(p, w, h, &taps)))
}

/// Box-downsamples by `factor` and bilinearly upsamples to the original size.
pub fn low_resolution(img: &Image, factor: usize) -> Result<Image> {
    let (w, h) = (img.width(), img.height());
    if factor == 0 {
        return Err(Error::param("factor", "must be >= 1"));
    }
    if factor > w.min(h) / 4 && factor > 1 {
        return Err(Error::param(
            "factor",
            format!("{factor} exceeds min(width, height)/4 = {}", w.min(h) / 4),
        ));
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    let (sw, sh) = (w.div_ceil(factor), h.div_ceil(factor));
    Ok(map_planes(img, |p| {
        let mut small = vec![0.0; sw * sh];
        for by in 0..sh {
            for bx in 0..sw {
                let (mut acc, mut n) = (0.0, 0usize);
                for y in by * factor..((by + 1) * factor).min(h) {
                    for x in bx * factor..((bx + 1) * factor).min(w) {
                        acc += p[y * w + x];
                        n += 1;
                    }
                }
                small[by * sw + bx] = acc / n as f64;
            }
        }
        let f = factor as f64;
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            let sy = ((y as f64 + 0.5) / f - 0.5).clamp(0.0, (sh - 1) as f64);
            for x in 0..w {
                let sx = ((x as f64 + 0.5) / f - 0.5).clamp(0.0, (sw - 1) as f64);
                out[y * w + x] = bilinear(&small, sw, sh, sx, sy).expect("clamped in range");
            }
        }
        out
    }))
}

pub fn adjust_brightness(img: &Image, delta: f64) -> Result<Image> {
    if !(delta.abs() <= 1.0) {
        return Err(Error::param("delta", "|delta| must be <= 1"));
    }
    if delta == 0.0 {
        return Ok(img.clone());
    }
    Ok(img.map(|v| v + delta))
}

/// Power-law exposure change: `out = in^gamma`.
pub fn gamma_exposure(img: &Image, gamma: f64) -> Result<Image> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::param("gamma", "must be a finite value > 0"));
    }
    if gamma == 1.0 {
        return Ok(img.clone());
    }
    Ok(img.map(|v| v.powf(gamma)))
}

/// Compresses each channel toward its own mean by `alpha`.
pub fn reduce_contrast(img: &Image, alpha: f64) -> Result<Image> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param("alpha", "must lie in [0, 1]"));
    }
    if alpha == 1.0 {
        return Ok(img.clone());
    }
    Ok(map_planes(img, |p| {
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        p.iter().map(|&v| mean + alpha * (v - mean)).collect()
    }))
}

/// Exact sine/cosine for multiples of 90° so quarter turns are pure index
/// permutations.
fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter.fract() == 0.0 {
        match (quarter as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        deg.to_radians().sin_cos()
    }
}

/// Size-preserving bilinear rotation about the image centre. Positive angles
/// turn the content counter-clockwise on screen; uncovered pixels get `fill`.
pub fn rotate_image(img: &Image, degrees: f64, fill: f64) -> Result<Image> {
    if !degrees.is_finite() {
        return Err(Error::param("degrees", "must be finite"));
    }
    if degrees == 0.0 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (s, c) = sin_cos_deg(degrees);
    Ok(map_planes(img, |p| {
        let mut out = vec![fill; w * h];
        for y in 0..h {
            let dy = y as f64 - cy;
            for x in 0..w {
                let dx = x as f64 - cx;
                let sx = cx + c * dx - s * dy;
                let sy = cy + s * dx + c * dy;
                if let Some(v) = bilinear(p, w, h, sx, sy) {
                    out[y * w + x] = v;
                }
            }
        }
        out
    }))
}

/// Shifts content by `(dx, dy)` pixels; vacated pixels get `fill`.
pub fn translate_image(img: &Image, dx: f64, dy: f64, fill: f64) -> Result<Image> {
    let (w, h) = (img.width(), img.height());
    if !(dx.abs() < w as f64) || !(dy.abs() < h as f64) {
        return Err(Error::param(
            "shift",
            format!("({dx}, {dy}) must be smaller than the {w}x{h} image"),
        ));
    }
    if dx == 0.0 && dy == 0.0 {
        return Ok(img.clone());
    }
    Ok(map_planes(img, |p| {
        let mut out = vec![fill; w * h];
        for y in 0..h {
            for x in 0..w {
                if let Some(v) = bilinear(p, w, h, x as f64 - dx, y as f64 - dy) {
                    out[y * w + x] = v;
                }
            }
        }
        out
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize) -> Image {
        Image::gray_from_fn(w, h, |x, y| (x + 2 * y) as f64 / (w + 2 * h) as f64)
    }

    fn impulse(n: usize) -> Image {
        let c = n / 2;
        Image::gray_from_fn(n, n, |x, y| if x == c && y == c { 1.0 } else { 0.0 })
    }

    #[test]
    fn reflect_mirrors_both_sides() {
        let idx: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(idx, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
        // Kernel wider than the image.
        assert_eq!(reflect(-9, 4), 0);
        assert_eq!(reflect(13, 4), 2);
    }

    #[test]
    fn noise_zero_sigma_is_identity() {
        let img = gradient(16, 16);
        assert!(gaussian_noise(&img, 0.0, 7).unwrap().bit_eq(&img));
        assert!(gaussian_noise(&img, -0.1, 7).is_err());
    }

    #[test]
    fn noise_statistics_on_constant_image() {
        let img = Image::filled(64, 64, 1, 0.5);
        let out = gaussian_noise(&img, 0.1, 42).unwrap();
        let diffs: Vec<f64> = out
            .data()
            .iter()
            .zip(img.data())
            .map(|(a, b)| a - b)
            .filter(|d| d.abs() < 0.49)
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
        let std = var.sqrt();
        assert!((0.09..=0.11).contains(&std), "std {std}");
    }

    #[test]
    fn noise_seeds() {
        let img = Image::filled(64, 64, 1, 0.5);
        let a = gaussian_noise(&img, 0.1, 1).unwrap();
        let b = gaussian_noise(&img, 0.1, 1).unwrap();
        let c = gaussian_noise(&img, 0.1, 2).unwrap();
        assert!(a.bit_eq(&b));
        assert!(!a.bit_eq(&c));
    }

    #[test]
    fn blur_impulse_matches_sampled_gaussian() {
        let sigma = 2.0;
        let out = gaussian_blur(&impulse(33), sigma).unwrap();
        // Independent oracle: direct 2-D sampling, normalized over the
        // (2r+1)^2 support.
        let r = 6i64;
        let g = |dx: i64, dy: i64| (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
        let mut norm = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                norm += g(dx, dy);
            }
        }
        for y in 0..33i64 {
            for x in 0..33i64 {
                let (dx, dy) = (x - 16, y - 16);
                let expected = if dx.abs() <= r && dy.abs() <= r {
                    g(dx, dy) / norm
                } else {
                    0.0
                };
                let got = out.get(x as usize, y as usize, 0);
                assert!((got - expected).abs() < 1e-6, "({x},{y}) {got} vs {expected}");
            }
        }
    }

    #[test]
    fn blurs_preserve_constant_images() {
        let img = Image::filled(20, 12, 3, 0.37);
        for out in [
            gaussian_blur(&img, 3.0).unwrap(),
            motion_blur(&img, 9, 33.0).unwrap(),
            low_resolution(&img, 3).unwrap(),
        ] {
            assert!(out.max_abs_diff(&img) < 1e-6);
        }
        assert!(gaussian_blur(&img, 0.0).unwrap().bit_eq(&img));
    }

    #[test]
    fn motion_kernel_horizontal_three() {
        let out = motion_blur(&impulse(9), 3, 0.0).unwrap();
        for y in 0..9 {
            for x in 0..9 {
                let expected = if y == 4 && (3..=5).contains(&x) { 1.0 / 3.0 } else { 0.0 };
                assert!((out.get(x, y, 0) - expected).abs() < 1e-12);
            }
        }
        let img = gradient(10, 10);
        assert!(motion_blur(&img, 1, 45.0).unwrap().bit_eq(&img));
        assert!(motion_blur(&img, 0, 0.0).is_err());
    }

    #[test]
    fn line_kernels_sum_to_one() {
        for len in 1..12 {
            for angle in [0.0, 17.0, 45.0, 90.0, 133.0, -60.0] {
                let s: f64 = line_kernel(len, angle).iter().map(|t| t.weight).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn low_resolution_smooths_checkerboard() {
        let img = Image::gray_from_fn(16, 16, |x, y| ((x + y) % 2) as f64);
        let out = low_resolution(&img, 2).unwrap();
        let var = |d: &[f64]| {
            let m = d.iter().sum::<f64>() / d.len() as f64;
            d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / d.len() as f64
        };
        assert!(var(out.data()) < var(img.data()));
        assert!(low_resolution(&img, 1).unwrap().bit_eq(&img));
        assert!(low_resolution(&img, 5).is_err());
    }

    #[test]
    fn intensity_formulas() {
        let img = Image::filled(8, 8, 1, 0.5);
        let b = adjust_brightness(&img, 0.3).unwrap();
        assert!(b.data().iter().all(|&v| (v - 0.8).abs() < 1e-12));
        let hi = adjust_brightness(&Image::filled(8, 8, 1, 0.9), 0.3).unwrap();
        assert!(hi.data().iter().all(|&v| v == 1.0));
        assert!(adjust_brightness(&img, 0.0).unwrap().bit_eq(&img));

        let g = gamma_exposure(&Image::filled(8, 8, 1, 0.25), 2.0).unwrap();
        assert!(g.data().iter().all(|&v| (v - 0.0625).abs() < 1e-15));
        let ones = gamma_exposure(&Image::filled(8, 8, 1, 1.0), 0.37).unwrap();
        assert!(ones.data().iter().all(|&v| v == 1.0));
        assert!(gamma_exposure(&img, 0.0).is_err());
        assert!(gamma_exposure(&img, 1.0).unwrap().bit_eq(&img));
    }

    #[test]
    fn contrast_formula() {
        let img = Image::gray_from_fn(8, 8, |x, _| if x < 4 { 0.0 } else { 1.0 });
        let out = reduce_contrast(&img, 0.5).unwrap();
        for y in 0..8 {
            assert!((out.get(0, y, 0) - 0.25).abs() < 1e-12);
            assert!((out.get(7, y, 0) - 0.75).abs() < 1e-12);
        }
        let flat = reduce_contrast(&img, 0.0).unwrap();
        assert!(flat.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
        assert!(reduce_contrast(&img, 1.0).unwrap().bit_eq(&img));
        assert!(reduce_contrast(&img, 1.5).is_err());
    }

    #[test]
    fn contrast_is_per_channel() {
        let data: Vec<f64> = (0..64).flat_map(|i| [0.8, 0.1 + (i % 2) as f64 * 0.2, 0.3]).collect();
        let img = Image::from_vec(8, 8, 3, data).unwrap();
        let out = reduce_contrast(&img, 0.5).unwrap();
        let mean_r = out.plane(0).iter().sum::<f64>() / 64.0;
        assert!((mean_r - 0.8).abs() < 1e-12);
    }

    #[test]
    fn quarter_turn_is_a_permutation() {
        let (a, b, c, d) = (0.1, 0.2, 0.3, 0.4);
        let img = Image::from_vec(2, 2, 1, vec![a, b, c, d]).unwrap();
        let out = rotate_image(&img, 90.0, 0.0).unwrap();
        assert_eq!(out.data(), &[b, d, a, c]);
        let full = rotate_image(&gradient(17, 11), 360.0, 0.0).unwrap();
        assert!(full.max_abs_diff(&gradient(17, 11)) < 1e-6);
        assert!(rotate_image(&img, 0.0, 0.0).unwrap().bit_eq(&img));
    }

    #[test]
    fn translation_moves_by_index() {
        let img = Image::from_vec(3, 1, 1, vec![0.2, 0.5, 0.9]).unwrap();
        let out = translate_image(&img, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(out.data(), &[0.0, 0.2, 0.5]);
        let edge = translate_image(&img, 2.0, 0.0, 0.0).unwrap();
        assert_eq!(edge.data(), &[0.0, 0.0, 0.2]);
        assert!(translate_image(&img, 3.0, 0.0, 0.0).is_err());
        assert!(translate_image(&img, 0.0, 0.0, 0.0).unwrap().bit_eq(&img));
    }
}
