//! Parallel-beam tomography: forward projection, filtered back-projection
//! and the three CT acquisition degradations built on them.
//!
//! Geometry: the image is zero-padded to an `n × n` square; the detector has
//! an odd number of unit-spaced bins covering the square's diagonal, centred
//! on the rotation axis at the pixel-grid centre. A pixel at offset `(x, y)`
//! from the centre projects to detector coordinate `u = x cos θ + y sin θ`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::image::Image;

/// Full acquisition: views evenly spaced over 180°.
pub const FULL_VIEWS: usize = 720;

/// Fewest views any reduced acquisition may keep.
pub const MIN_VIEWS: usize = 8;

/// Peak line integral after normalization, before the photon-count model.
pub const PEAK_ATTENUATION: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    angles: Vec<f64>,
    bins: usize,
    /// Side of the square object the projections were taken from.
    size: usize,
    /// `views × bins`, view-major.
    values: Vec<f64>,
}

impl Sinogram {
    pub fn new(angles: Vec<f64>, bins: usize, size: usize, values: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::param("angles", "at least one view is required"));
        }
        if bins % 2 == 0 || values.len() != angles.len() * bins {
            return Err(Error::param("sinogram", "inconsistent dimensions"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("sinogram", "non-finite value"));
        }
        Ok(Self {
            angles,
            bins,
            size,
            values,
        })
    }

    pub fn views(&self) -> usize {
        self.angles.len()
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn view(&self, v: usize) -> &[f64] {
        &self.values[v * self.bins..(v + 1) * self.bins]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

/// `count` angles evenly spaced over `[0, π)`.
pub fn full_angles(count: usize) -> Vec<f64> {
    (0..count)
        .map(|v| v as f64 * std::f64::consts::PI / count as f64)
        .collect()
}

/// Detector bins for an `n × n` object: the diagonal length, rounded up to odd.
pub fn detector_bins(n: usize) -> usize {
    let b = (n as f64 * std::f64::consts::SQRT_2).ceil() as usize;
    if b % 2 == 0 {
        b + 1
    } else {
        b
    }
}

/// Square gray plane of side `max(w, h)` with the image centred in it.
fn padded_plane(img: &Image) -> (Vec<f64>, usize, usize, usize) {
    let (w, h) = (img.width(), img.height());
    let n = w.max(h);
    let (ox, oy) = ((n - w) / 2, (n - h) / 2);
    let lum = img.luminance();
    let mut plane = vec![0.0; n * n];
    for y in 0..h {
        plane[(y + oy) * n + ox..(y + oy) * n + ox + w].copy_from_slice(&lum[y * w..(y + 1) * w]);
    }
    (plane, n, ox, oy)
}

/// Bilinear sample treating everything outside the grid as zero.
#[inline]
fn sample_zero(plane: &[f64], n: usize, x: f64, y: f64) -> f64 {
    if x <= -1.0 || y <= -1.0 || x >= n as f64 || y >= n as f64 {
        return 0.0;
    }
    let (xf, yf) = (x.floor(), y.floor());
    let (fx, fy) = (x - xf, y - yf);
    let (x0, y0) = (xf as isize, yf as isize);
    let at = |xi: isize, yi: isize| {
        if xi < 0 || yi < 0 || xi >= n as isize || yi >= n as isize {
            0.0
        } else {
            plane[yi as usize * n + xi as usize]
        }
    };
    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
    let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

fn project_plane(plane: &[f64], n: usize, angles: &[f64]) -> Sinogram {
    let bins = detector_bins(n);
    let half = (bins as f64 - 1.0) / 2.0;
    let c = (n as f64 - 1.0) / 2.0;
    let mut values = vec![0.0; angles.len() * bins];
    values
        .par_chunks_mut(bins)
        .zip(angles.par_iter())
        .for_each(|(row, &theta)| {
            let (s, co) = theta.sin_cos();
            for (j, out) in row.iter_mut().enumerate() {
                let u = j as f64 - half;
                let mut acc = 0.0;
                for k in 0..bins {
                    let t = k as f64 - half;
                    let x = c + u * co - t * s;
                    let y = c + u * s + t * co;
                    acc += sample_zero(plane, n, x, y);
                }
                *out = acc;
            }
        });
    Sinogram {
        angles: angles.to_vec(),
        bins,
        size: n,
        values,
    }
}

/// Line integrals of the image (luminance for RGB) along parallel rays, by
/// rotate-and-sum with unit step bilinear sampling.
pub fn radon_forward(img: &Image, angles: &[f64]) -> Result<Sinogram> {
    if angles.is_empty() {
        return Err(Error::param("angles", "at least one view is required"));
    }
    let (plane, n, _, _) = padded_plane(img);
    Ok(project_plane(&plane, n, angles))
}

/// Spatial Ram-Lak kernel for unit detector spacing, indexed by `n` in
/// `-(len-1)..len`.
fn ramp_tap(n: isize) -> f64 {
    if n == 0 {
        0.25
    } else if n % 2 == 0 {
        0.0
    } else {
        -1.0 / (std::f64::consts::PI * std::f64::consts::PI * (n * n) as f64)
    }
}

struct RampFilter {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kernel_hat: Vec<Complex64>,
}

impl RampFilter {
    fn new(bins: usize) -> Self {
        let len = (2 * bins).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let mut kernel_hat = vec![Complex64::new(0.0, 0.0); len];
        for n in -(bins as isize - 1)..bins as isize {
            kernel_hat[n.rem_euclid(len as isize) as usize] = Complex64::new(ramp_tap(n), 0.0);
        }
        forward.process(&mut kernel_hat);
        Self {
            len,
            forward,
            inverse,
            kernel_hat,
        }
    }

    fn apply(&self, projection: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        for (b, &p) in buf.iter_mut().zip(projection) {
            b.re = p;
        }
        self.forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.inverse.process(&mut buf);
        let norm = 1.0 / self.len as f64;
        buf[..projection.len()].iter().map(|c| c.re * norm).collect()
    }
}

/// Angular weight per view: the mean spacing of the acquired angles, or π
/// for a single view.
fn view_weight(angles: &[f64]) -> f64 {
    if angles.len() < 2 {
        std::f64::consts::PI
    } else {
        (angles[angles.len() - 1] - angles[0]) / (angles.len() - 1) as f64
    }
}

/// Ramp-filtered back-projection onto a `size × size` grid, without
/// clamping.
pub fn fbp_reconstruct_raw(sino: &Sinogram, size: usize) -> Result<Vec<f64>> {
    if sino.views() == 0 {
        return Err(Error::param("sinogram", "no views"));
    }
    let bins = sino.bins();
    let filter = RampFilter::new(bins);
    let filtered: Vec<Vec<f64>> = (0..sino.views())
        .into_par_iter()
        .map(|v| filter.apply(sino.view(v)))
        .collect();
    let trig: Vec<(f64, f64)> = sino.angles().iter().map(|a| a.sin_cos()).collect();
    let weight = view_weight(sino.angles());
    let half = (bins as f64 - 1.0) / 2.0;
    let c = (size as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; size * size];
    out.par_chunks_mut(size).enumerate().for_each(|(y, row)| {
        let dy = y as f64 - c;
        for (x, px) in row.iter_mut().enumerate() {
            let dx = x as f64 - c;
            let mut acc = 0.0;
            for (q, &(s, co)) in filtered.iter().zip(&trig) {
                let t = dx * co + dy * s + half;
                if t < 0.0 || t > (bins - 1) as f64 {
                    continue;
                }
                let i0 = t.floor() as usize;
                let i1 = (i0 + 1).min(bins - 1);
                let f = t - i0 as f64;
                acc += q[i0] * (1.0 - f) + q[i1] * f;
            }
            *px = acc * weight;
        }
    });
    Ok(out)
}

/// Filtered back-projection, clamped to `[0, 1]`.
pub fn fbp_reconstruct(sino: &Sinogram, size: usize) -> Result<Image> {
    let raw = fbp_reconstruct_raw(sino, size)?;
    Ok(Image::from_planes(size, size, &[raw]))
}

/// Reconstructs onto the padded square and crops back to the source frame,
/// replicating the gray result across the source's channels.
fn reconstruct_like(img: &Image, sino: &Sinogram) -> Result<Image> {
    let n = sino.size();
    let raw = fbp_reconstruct_raw(sino, n)?;
    let (w, h) = (img.width(), img.height());
    let (ox, oy) = ((n - w) / 2, (n - h) / 2);
    let mut plane = Vec::with_capacity(w * h);
    for y in 0..h {
        plane.extend_from_slice(&raw[(y + oy) * n + ox..(y + oy) * n + ox + w]);
    }
    Ok(Image::from_gray_plane(w, h, &plane, img.channels()))
}

/// Projects at `angles` and reconstructs in the source frame.
pub fn round_trip(img: &Image, angles: &[f64]) -> Result<Image> {
    let sino = radon_forward(img, angles)?;
    reconstruct_like(img, &sino)
}

/// Keeps every `stride`-th of `full_views` evenly spaced views. Stride 1
/// is the full acquisition and returns the input unchanged.
pub fn sparse_view(img: &Image, stride: usize, full_views: usize) -> Result<Image> {
    if stride == 0 {
        return Err(Error::param("stride", "must be >= 1"));
    }
    let angles: Vec<f64> = full_angles(full_views).into_iter().step_by(stride).collect();
    if angles.len() < MIN_VIEWS {
        return Err(Error::param(
            "stride",
            format!("keeps {} views; at least {MIN_VIEWS} required", angles.len()),
        ));
    }
    if stride == 1 {
        return Ok(img.clone());
    }
    round_trip(img, &angles)
}

/// Keeps the contiguous arc `[0°, arc)` of a `full_views` acquisition. The
/// full 180° arc returns the input unchanged.
pub fn limited_angle(img: &Image, arc_deg: f64, full_views: usize) -> Result<Image> {
    if !(arc_deg > 0.0 && arc_deg <= 180.0) {
        return Err(Error::param("arc", "must lie in (0, 180] degrees"));
    }
    let angles: Vec<f64> = (0..full_views)
        .filter(|&v| (v as f64) * 180.0 / (full_views as f64) < arc_deg)
        .map(|v| v as f64 * std::f64::consts::PI / full_views as f64)
        .collect();
    if angles.len() < MIN_VIEWS {
        return Err(Error::param(
            "arc",
            format!("keeps {} views; at least {MIN_VIEWS} required", angles.len()),
        ));
    }
    if arc_deg == 180.0 {
        return Ok(img.clone());
    }
    round_trip(img, &angles)
}

/// Photon-starved sinogram: line integrals are scaled so the peak maps to
/// [`PEAK_ATTENUATION`], detector counts drawn as `Poisson(I0·exp(-p))`
/// (floored at one), and the log-transformed estimate scaled back.
pub fn low_dose_sinogram(sino: &Sinogram, photons: f64, seed: u64) -> Result<Sinogram> {
    if !(photons > 0.0) || !photons.is_finite() {
        return Err(Error::param("photons", "must be a finite value > 0"));
    }
    let peak = sino.max_value();
    if peak <= 0.0 {
        return Ok(sino.clone());
    }
    let scale = PEAK_ATTENUATION / peak;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(sino.values().len());
    for &line in sino.values() {
        let p = line.max(0.0) * scale;
        let mean = photons * (-p).exp();
        let counts = Poisson::new(mean)
            .map_err(|e| Error::param("photons", e.to_string()))?
            .sample(&mut rng)
            .max(1.0);
        values.push(-(counts / photons).ln() / scale);
    }
    Ok(Sinogram {
        values,
        ..sino.clone()
    })
}

/// Low-dose acquisition over the full view set.
pub fn low_dose(img: &Image, photons: f64, seed: u64, full_views: usize) -> Result<Image> {
    if !(photons > 0.0) || !photons.is_finite() {
        return Err(Error::param("photons", "must be a finite value > 0"));
    }
    let sino = radon_forward(img, &full_angles(full_views))?;
    let noisy = low_dose_sinogram(&sino, photons, seed)?;
    reconstruct_like(img, &noisy)
}
