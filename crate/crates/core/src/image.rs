//! Normalized intensity rasters.
//!
//! Every operator in this crate consumes and produces an [`Image`]: a
//! row-major grid of `f64` samples in `[0, 1]` with one (gray) or three (RGB)
//! interleaved channels. Integer sources are scaled on load; the original bit
//! depth is not preserved.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Smallest side length accepted for benchmark images.
pub const MIN_SIDE: usize = 8;

/// Rec. 601 luma weights used for every RGB → gray conversion.
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image from interleaved samples. Values are clamped to
    /// `[0, 1]`; non-finite samples are rejected.
    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage("zero-sized raster".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "expected {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidImage("non-finite sample".into()));
        }
        let mut img = Self {
            width,
            height,
            channels,
            data,
        };
        img.clamp();
        Ok(img)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0 && (channels == 1 || channels == 3));
        Self {
            width,
            height,
            channels,
            data: vec![value.clamp(0.0, 1.0); width * height * channels],
        }
    }

    pub fn gray_from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn is_rgb(&self) -> bool {
        self.channels == 3
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v.clamp(0.0, 1.0);
    }

    /// Applies `f` to every sample and clamps the result.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
        }
    }

    /// Extracts channel `c` as an unclamped plane.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    pub fn planes(&self) -> Vec<Vec<f64>> {
        (0..self.channels).map(|c| self.plane(c)).collect()
    }

    /// Reassembles an image from per-channel planes, clamping to `[0, 1]`.
    /// Non-finite samples are mapped to 0.
    pub fn from_planes(width: usize, height: usize, planes: &[Vec<f64>]) -> Self {
        let channels = planes.len();
        assert!(channels == 1 || channels == 3);
        let mut data = vec![0.0; width * height * channels];
        for (c, plane) in planes.iter().enumerate() {
            assert_eq!(plane.len(), width * height);
            for (i, &v) in plane.iter().enumerate() {
                data[i * channels + c] = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    /// Luminance plane (identity for gray images).
    pub fn luminance(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.data.clone();
        }
        self.data
            .chunks_exact(3)
            .map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2])
            .collect()
    }

    /// Builds an image with `channels` copies of a gray plane.
    pub fn from_gray_plane(width: usize, height: usize, plane: &[f64], channels: usize) -> Self {
        let planes: Vec<Vec<f64>> = (0..channels).map(|_| plane.to_vec()).collect();
        Self::from_planes(width, height, &planes)
    }

    pub fn check_min_size(&self) -> Result<()> {
        if self.width < MIN_SIDE || self.height < MIN_SIDE {
            return Err(Error::InvalidImage(format!(
                "{}x{} is below the {MIN_SIDE}px minimum",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Bitwise equality of every sample, the notion used by the identity and
    /// determinism laws.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.channels == other.channels
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn mse(&self, other: &Self) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / self.data.len() as f64
    }

    /// Peak signal-to-noise ratio with peak 1, capped at 100 dB for identical
    /// inputs so means over corpora stay finite.
    pub fn psnr(&self, other: &Self) -> f64 {
        let mse = self.mse(other);
        if mse <= 1e-10 {
            100.0
        } else {
            (-10.0 * mse.log10()).min(100.0)
        }
    }

    pub fn l2_distance(&self, other: &Self) -> f64 {
        (self.mse(other) * self.data.len() as f64).sqrt()
    }

    /// SHA-256 over dimensions and 16-bit quantized samples.
    pub fn content_digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.width as u64).to_le_bytes());
        h.update((self.height as u64).to_le_bytes());
        h.update((self.channels as u64).to_le_bytes());
        for &v in &self.data {
            h.update(((v * 65535.0).round() as u16).to_le_bytes());
        }
        hex(&h.finalize())
    }

    pub fn from_dynamic(img: DynamicImage) -> Result<Self> {
        let (width, height) = (img.width() as usize, img.height() as usize);
        let img = match img {
            DynamicImage::ImageLuma8(b) => {
                let data = b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
                return Self::from_vec(width, height, 1, data);
            }
            DynamicImage::ImageLuma16(b) => {
                let data = b
                    .into_raw()
                    .into_iter()
                    .map(|v| v as f64 / 65535.0)
                    .collect();
                return Self::from_vec(width, height, 1, data);
            }
            DynamicImage::ImageLumaA8(_) => DynamicImage::ImageLuma8(img.to_luma8()),
            DynamicImage::ImageLumaA16(_) => DynamicImage::ImageLuma16(img.to_luma16()),
            other => other,
        };
        match img {
            DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_) => Self::from_dynamic(img),
            DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
                let data = img
                    .to_rgb16()
                    .into_raw()
                    .into_iter()
                    .map(|v| v as f64 / 65535.0)
                    .collect();
                Self::from_vec(width, height, 3, data)
            }
            _ => {
                let data = img
                    .to_rgb8()
                    .into_raw()
                    .into_iter()
                    .map(|v| v as f64 / 255.0)
                    .collect();
                Self::from_vec(width, height, 3, data)
            }
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = Self::from_dynamic(image::load_from_memory(&bytes)?)?;
        img.check_min_size()?;
        Ok(img)
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|&v| (v * 255.0).round() as u8)
            .collect();
        let (w, h) = (self.width as u32, self.height as u32);
        if self.channels == 1 {
            DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, bytes).expect("sized"))
        } else {
            DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, bytes).expect("sized"))
        }
    }

    /// Encodes as an 8-bit PNG.
    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        self.to_dynamic().write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_png_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    fn clamp(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
