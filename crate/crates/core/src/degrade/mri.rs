//! Centred orthonormal 2-D Fourier transform and the MRI acquisition
//! artifacts: Cartesian undersampling, periodic ghosting and bias fields.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Complex k-space grid with the DC coefficient at `(height/2, width/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpace {
    width: usize,
    height: usize,
    data: Vec<Complex64>,
}

impl KSpace {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.width..(r + 1) * self.width]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Zeroes every row whose mask entry is false.
    pub fn masked_rows(&self, mask: &[bool]) -> Self {
        assert_eq!(mask.len(), self.height);
        let mut out = self.clone();
        for (r, &keep) in mask.iter().enumerate() {
            if !keep {
                out.data[r * self.width..(r + 1) * self.width].fill(Complex64::new(0.0, 0.0));
            }
        }
        out
    }
}

/// Phase-encode axis along which lines are acquired.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    #[default]
    Rows,
    Cols,
}

fn shift(data: &[Complex64], w: usize, h: usize, inverse: bool) -> Vec<Complex64> {
    // fftshift moves index 0 to n/2; ifftshift undoes it.
    let (sx, sy) = if inverse {
        (w - w / 2, h - h / 2)
    } else {
        (w / 2, h / 2)
    };
    let mut out = vec![Complex64::new(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            out[((y + sy) % h) * w + (x + sx) % w] = data[y * w + x];
        }
    }
    out
}

fn fft2(data: &mut [Complex64], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            data[y * w + x] = col[y];
        }
    }
    let norm = 1.0 / ((w * h) as f64).sqrt();
    for v in data.iter_mut() {
        *v *= norm;
    }
}

/// Centred orthonormal transform of a real plane.
pub fn plane_forward(plane: &[f64], width: usize, height: usize) -> KSpace {
    let complex: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut data = shift(&complex, width, height, true);
    fft2(&mut data, width, height, false);
    KSpace {
        width,
        height,
        data: shift(&data, width, height, false),
    }
}

/// Complex image-domain inverse of [`plane_forward`].
pub fn plane_inverse(k: &KSpace) -> Vec<Complex64> {
    let mut data = shift(&k.data, k.width, k.height, true);
    fft2(&mut data, k.width, k.height, true);
    shift(&data, k.width, k.height, false)
}

/// Forward transform of the image luminance.
pub fn kspace_forward(img: &Image) -> KSpace {
    plane_forward(&img.luminance(), img.width(), img.height())
}

/// Magnitude image of the inverse transform, clamped to `[0, 1]`.
pub fn kspace_inverse(k: &KSpace) -> Image {
    let mag: Vec<f64> = plane_inverse(k).iter().map(|c| c.norm()).collect();
    Image::from_planes(k.width, k.height, &[mag])
}

fn magnitude_like(img: &Image, k: &KSpace) -> Image {
    let mag: Vec<f64> = plane_inverse(k).iter().map(|c| c.norm()).collect();
    Image::from_gray_plane(img.width(), img.height(), &mag, img.channels())
}

/// Rows of the always-acquired calibration block for a grid of `height`
/// phase-encode lines.
pub fn acs_rows(height: usize, acs_frac: f64) -> std::ops::Range<usize> {
    let n = ((acs_frac * height as f64).ceil() as usize).min(height);
    let start = height / 2 - n / 2;
    start..start + n
}

/// Phase-encode line mask: the centred ACS block plus i.i.d. outer lines
/// kept with the probability that hits `retain_frac` in expectation. Each
/// line consumes one uniform draw in order, so for a fixed seed masks are
/// nested in `retain_frac`.
pub fn undersampling_mask(
    height: usize,
    retain_frac: f64,
    acs_frac: f64,
    seed: u64,
) -> Result<Vec<bool>> {
    if !(retain_frac > 0.0 && retain_frac <= 1.0) {
        return Err(Error::param("retain", "must lie in (0, 1]"));
    }
    if !(0.0..=1.0).contains(&acs_frac) {
        return Err(Error::param("acs", "must lie in [0, 1]"));
    }
    let acs = acs_rows(height, acs_frac);
    let target = (retain_frac * height as f64).round() as usize;
    if target < acs.len() {
        return Err(Error::param(
            "retain",
            format!(
                "{retain_frac} keeps {target} lines, fewer than the {} ACS lines",
                acs.len()
            ),
        ));
    }
    let outer = height - acs.len();
    let p = if outer == 0 {
        0.0
    } else {
        (target - acs.len()) as f64 / outer as f64
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..height)
        .map(|r| {
            let u: f64 = rng.random();
            acs.contains(&r) || u < p
        })
        .collect())
}

/// Reconstruction from a row-undersampled Cartesian acquisition. A fully
/// sampled grid returns the input unchanged.
pub fn undersample_kspace(img: &Image, retain_frac: f64, acs_frac: f64, seed: u64) -> Result<Image> {
    let mask = undersampling_mask(img.height(), retain_frac, acs_frac, seed)?;
    if mask.iter().all(|&m| m) {
        return Ok(img.clone());
    }
    let k = kspace_forward(img);
    Ok(magnitude_like(img, &k.masked_rows(&mask)))
}

/// Periodic ghosting: every `num_ghosts`-th phase-encode line (counted from
/// the DC line) is attenuated by `1 - intensity`, which replicates the
/// object `num_ghosts - 1` times at spacing `size / num_ghosts`.
pub fn ghosting(img: &Image, num_ghosts: usize, intensity: f64, axis: Axis) -> Result<Image> {
    if num_ghosts < 2 {
        return Err(Error::param("num_ghosts", "must be >= 2"));
    }
    if !(0.0..1.0).contains(&intensity) {
        return Err(Error::param("intensity", "must lie in [0, 1)"));
    }
    if intensity == 0.0 {
        return Ok(img.clone());
    }
    let mut k = kspace_forward(img);
    let (w, h) = (k.width, k.height);
    let scale = 1.0 - intensity;
    let hit = |i: usize, n: usize| (i as isize - (n / 2) as isize).rem_euclid(num_ghosts as isize) == 0;
    for y in 0..h {
        for x in 0..w {
            let on_line = match axis {
                Axis::Rows => hit(y, h),
                Axis::Cols => hit(x, w),
            };
            if on_line {
                k.data[y * w + x] *= scale;
            }
        }
    }
    Ok(magnitude_like(img, &k))
}

pub fn basis_size(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

/// Monomial exponents `(a, b)` of `u^a v^b`, ordered by total degree and
/// then by descending power of `u`.
pub fn basis_exponents(order: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(basis_size(order));
    for d in 0..=order as u32 {
        for a in (0..=d).rev() {
            out.push((a, d - a));
        }
    }
    out
}

/// `exp(Σ cⱼ u^aⱼ v^bⱼ)` sampled with `u, v ∈ [-1, 1]` spanning the grid.
pub fn bias_field_map(width: usize, height: usize, coeffs: &[f64], order: usize) -> Result<Vec<f64>> {
    if coeffs.len() != basis_size(order) {
        return Err(Error::param(
            "coeffs",
            format!("expected {} coefficients for order {order}, got {}", basis_size(order), coeffs.len()),
        ));
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::param("coeffs", "must be finite"));
    }
    let exps = basis_exponents(order);
    let norm = |i: usize, n: usize| if n > 1 { 2.0 * i as f64 / (n - 1) as f64 - 1.0 } else { 0.0 };
    let mut field = Vec::with_capacity(width * height);
    for y in 0..height {
        let v = norm(y, height);
        for x in 0..width {
            let u = norm(x, width);
            let g: f64 = coeffs
                .iter()
                .zip(&exps)
                .map(|(c, &(a, b))| c * u.powi(a as i32) * v.powi(b as i32))
                .sum();
            field.push(g.exp());
        }
    }
    Ok(field)
}

/// Multiplies every channel by a smooth exp-polynomial field.
pub fn bias_field(img: &Image, coeffs: &[f64], order: usize) -> Result<Image> {
    let field = bias_field_map(img.width(), img.height(), coeffs, order)?;
    if coeffs.iter().all(|&c| c == 0.0) {
        return Ok(img.clone());
    }
    let planes: Vec<Vec<f64>> = img
        .planes()
        .into_iter()
        .map(|p| p.iter().zip(&field).map(|(v, f)| v * f).collect())
        .collect();
    Ok(Image::from_planes(img.width(), img.height(), &planes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom;

    #[test]
    fn round_trip_and_parseval() {
        let img = phantom::shepp_logan(48);
        let k = kspace_forward(&img);
        let back = kspace_inverse(&k);
        assert!(back.max_abs_diff(&img) <= 1e-5);
        let e_img: f64 = img.data().iter().map(|v| v * v).sum();
        assert!((k.energy() - e_img).abs() / e_img < 1e-6);
    }

    #[test]
    fn odd_sizes_round_trip() {
        let img = Image::gray_from_fn(15, 9, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0);
        assert!(kspace_inverse(&kspace_forward(&img)).max_abs_diff(&img) <= 1e-5);
    }

    #[test]
    fn constant_image_is_pure_dc() {
        let img = Image::filled(16, 12, 1, 0.4);
        let k = kspace_forward(&img);
        for y in 0..12 {
            for x in 0..16 {
                let m = k.data()[y * 16 + x].norm();
                if (x, y) == (8, 6) {
                    assert!((m - 0.4 * (192f64).sqrt()).abs() < 1e-9);
                } else {
                    assert!(m < 1e-8);
                }
            }
        }
    }

    #[test]
    fn mask_keeps_acs_and_hits_target() {
        let mask = undersampling_mask(256, 0.25, 0.08, 3).unwrap();
        for r in acs_rows(256, 0.08) {
            assert!(mask[r]);
        }
        let kept = mask.iter().filter(|&&m| m).count() as f64 / 256.0;
        assert!((kept - 0.25).abs() < 0.06, "{kept}");
        assert!(undersampling_mask(100, 0.05, 0.08, 0).is_err());
        assert!(undersampling_mask(100, 0.0, 0.08, 0).is_err());
    }

    #[test]
    fn masks_nest_for_a_fixed_seed() {
        let lo = undersampling_mask(128, 0.2, 0.08, 9).unwrap();
        let hi = undersampling_mask(128, 0.4, 0.08, 9).unwrap();
        assert!(lo.iter().zip(&hi).all(|(&l, &h)| !l || h));
    }

    #[test]
    fn zero_ghost_intensity_is_identity() {
        let img = phantom::shepp_logan(32);
        let out = ghosting(&img, 4, 0.0, Axis::Rows).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-5);
        assert!(ghosting(&img, 1, 0.2, Axis::Rows).is_err());
        assert!(ghosting(&img, 4, 1.0, Axis::Rows).is_err());
    }

    #[test]
    fn bias_field_constant_term() {
        let img = Image::filled(10, 10, 1, 0.3);
        let mut coeffs = vec![0.0; 10];
        assert!(bias_field(&img, &coeffs, 3).unwrap().bit_eq(&img));
        coeffs[0] = 0.5;
        let out = bias_field(&img, &coeffs, 3).unwrap();
        let expected = 0.3 * 0.5f64.exp();
        assert!(out.data().iter().all(|&v| (v - expected).abs() < 1e-12));
        assert!(bias_field(&img, &coeffs[..9], 3).is_err());
    }

    #[test]
    fn basis_ordering() {
        assert_eq!(basis_size(3), 10);
        assert_eq!(
            basis_exponents(2),
            vec![(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
        );
    }
}
