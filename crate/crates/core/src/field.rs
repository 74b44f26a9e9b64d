//! Internal 64-bit working buffer for the numeric pipelines.
//!
//! Storage is channel-planar (one w*h plane per channel) so per-channel
//! transforms and convolutions run on contiguous slices. Images convert
//! at the boundaries; everything in between stays in f64.

use crate::error::Result;
use crate::image::Image;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Field {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Field {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_image(img: &Image) -> Self {
        let (w, h, c) = (img.width(), img.height(), img.channels());
        let mut data = vec![0.0f64; w * h * c];
        let src = img.data();
        for ch in 0..c {
            let plane = &mut data[ch * w * h..(ch + 1) * w * h];
            for (p, slot) in plane.iter_mut().enumerate() {
                *slot = f64::from(src[p * c + ch]);
            }
        }
        Field {
            width: w,
            height: h,
            channels: c,
            data,
        }
    }

    pub fn to_image(&self) -> Result<Image> {
        let (w, h, c) = (self.width, self.height, self.channels);
        let mut out = vec![0.0f32; w * h * c];
        for ch in 0..c {
            let plane = &self.data[ch * w * h..(ch + 1) * w * h];
            for (p, &v) in plane.iter().enumerate() {
                out[p * c + ch] = v as f32;
            }
        }
        Image::new(w, h, c, out)
    }

    pub fn plane(&self, ch: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[ch * n..(ch + 1) * n]
    }

    pub fn plane_mut(&mut self, ch: usize) -> &mut [f64] {
        let n = self.width * self.height;
        &mut self.data[ch * n..(ch + 1) * n]
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    #[cfg(test)]
    pub fn dot(&self, other: &Field) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    /// self += factor * other
    pub fn axpy(&mut self, factor: f64, other: &Field) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        debug_assert!(self.same_shape(other));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn add(&self, other: &Field) -> Field {
        debug_assert!(self.same_shape(other));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn image_field_roundtrip_preserves_layout() {
        let rng = CounterRng::new(4);
        let data: Vec<f32> = (0..4 * 3 * 3).map(|i| rng.unit_at(i) as f32).collect();
        let img = Image::new(4, 3, 3, data).unwrap();
        let field = Field::from_image(&img);
        // planar layout: channel 1 plane holds the interleaved stride-3 samples
        assert_eq!(field.plane(1)[0], f64::from(img.data()[1]));
        assert_eq!(field.plane(2)[5], f64::from(img.data()[5 * 3 + 2]));
        assert_eq!(field.to_image().unwrap(), img);
    }
}
