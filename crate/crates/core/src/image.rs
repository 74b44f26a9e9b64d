//! Image container and quality metrics.
//!
//! Samples are stored as 32-bit floats, row-major and channel-interleaved,
//! nominally in [0, 1]. The range is deliberately not enforced — attacked
//! inputs y + delta may leave it — only finiteness is. All metric
//! arithmetic accumulates in 64-bit.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("zero extent {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "sample count {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidImage(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Image::constant(width, height, channels, 0.0)
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Image::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
        .expect("constant image construction")
    }

    /// Build from 64-bit samples, rounding to storage precision.
    pub fn from_f64(width: usize, height: usize, channels: usize, data: &[f64]) -> Result<Self> {
        Image::new(
            width,
            height,
            channels,
            data.iter().map(|&v| v as f32).collect(),
        )
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

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn sample_count(&self) -> usize {
        self.data.len()
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{}x{}", self.width, self.height, self.channels)
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub(crate) fn require_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{} vs {}",
                self.shape_str(),
                other.shape_str()
            )))
        }
    }
}

/// PSNR/NCC pair against the source image, and optionally against a
/// target image for targeted attacks.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub psnr_source: f64,
    pub ncc_source: f64,
    pub psnr_target: Option<f64>,
    pub ncc_target: Option<f64>,
}

/// Cap applied instead of +inf when the mean squared error vanishes, so
/// report files stay finite and sortable.
pub const PSNR_CAP_DB: f64 = 120.0;

const MSE_FLOOR: f64 = 1e-12;

/// Peak signal-to-noise ratio in dB with peak fixed at 1.0.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.require_same_shape(b)?;
    let mut acc = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = f64::from(x) - f64::from(y);
        acc += d * d;
    }
    let mse = acc / a.sample_count() as f64;
    if mse < MSE_FLOOR {
        Ok(PSNR_CAP_DB)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

/// Normalized cross correlation of mean-removed images, in [-1, 1].
/// The mean is taken over all samples jointly (all channels at once).
pub fn ncc(a: &Image, b: &Image) -> Result<f64> {
    a.require_same_shape(b)?;
    let n = a.sample_count() as f64;
    let mean_a = a.data().iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let mean_b = b.data().iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let da = f64::from(x) - mean_a;
        let db = f64::from(y) - mean_b;
        dot += da * db;
        na += da * da;
        nb += db * db;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateImage);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}
