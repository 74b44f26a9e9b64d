//! Forward measurement model: circular convolution with a blur kernel,
//! its adjoint, and seeded additive Gaussian noise.
//!
//! The boundary condition is circular so the blur operator is exactly
//! diagonalized by the DFT; the adjoint is then correlation with the same
//! kernel (convolution with the 180-degree rotation).

use crate::error::{Error, Result};
use crate::fft::{kernel_spectrum, Spectrum};
use crate::field::Field;
use crate::image::Image;
use crate::kernel::Kernel;
use crate::rng::CounterRng;
use rustfft::num_complex::Complex;

#[derive(Debug, Clone)]
pub struct BlurModel {
    pub kernel: Kernel,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl BlurModel {
    pub fn new(kernel: Kernel, noise_sigma: f64, seed: u64) -> Result<Self> {
        if !noise_sigma.is_finite() || noise_sigma < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "noise sigma must be >= 0, got {noise_sigma}"
            )));
        }
        Ok(BlurModel {
            kernel,
            noise_sigma,
            seed,
        })
    }
}

/// Circular convolution operator bound to one kernel and plane size.
/// Precomputes the kernel spectrum once; used by the reconstructors and
/// the gradient engine where the same kernel is applied many times. The
/// 64-bit plane entry points exist so operator-level identities can be
/// verified without storage rounding.
#[derive(Debug, Clone)]
pub struct ConvOp {
    width: usize,
    height: usize,
    transfer: Vec<Complex<f64>>,
}

impl ConvOp {
    pub fn new(kernel: &Kernel, width: usize, height: usize) -> Result<Self> {
        if kernel.size() > width || kernel.size() > height {
            return Err(Error::KernelTooLarge {
                kernel: kernel.size(),
                width,
                height,
            });
        }
        Ok(ConvOp {
            width,
            height,
            transfer: kernel_spectrum(kernel, width, height).coefficients,
        })
    }

    fn apply_plane(&self, plane: &[f64], conjugate: bool) -> Vec<f64> {
        let spec = Spectrum::forward(plane, self.width, self.height);
        let filtered: Vec<Complex<f64>> = spec
            .coefficients
            .iter()
            .zip(&self.transfer)
            .map(|(x, t)| if conjugate { x * t.conj() } else { x * t })
            .collect();
        Spectrum {
            width: self.width,
            height: self.height,
            coefficients: filtered,
        }
        .inverse_real()
    }

    /// Circular convolution of one 64-bit plane.
    pub fn convolve_plane(&self, plane: &[f64]) -> Vec<f64> {
        self.apply_plane(plane, false)
    }

    /// Adjoint action (circular correlation) on one 64-bit plane.
    pub fn adjoint_plane(&self, plane: &[f64]) -> Vec<f64> {
        self.apply_plane(plane, true)
    }

    pub(crate) fn convolve(&self, x: &Field) -> Field {
        self.map_planes(x, false)
    }

    /// Adjoint (circular correlation with the kernel).
    pub(crate) fn adjoint(&self, u: &Field) -> Field {
        self.map_planes(u, true)
    }

    /// Normal-operator action B^T B in a single spectral pass.
    pub(crate) fn gram(&self, x: &Field) -> Field {
        debug_assert_eq!((x.width, x.height), (self.width, self.height));
        let mut out = Field::zeros(x.width, x.height, x.channels);
        for ch in 0..x.channels {
            let spec = Spectrum::forward(x.plane(ch), self.width, self.height);
            let filtered: Vec<Complex<f64>> = spec
                .coefficients
                .iter()
                .zip(&self.transfer)
                .map(|(v, t)| v * t.norm_sqr())
                .collect();
            let plane = Spectrum {
                width: self.width,
                height: self.height,
                coefficients: filtered,
            }
            .inverse_real();
            out.plane_mut(ch).copy_from_slice(&plane);
        }
        out
    }

    fn map_planes(&self, x: &Field, conjugate: bool) -> Field {
        debug_assert_eq!((x.width, x.height), (self.width, self.height));
        let mut out = Field::zeros(x.width, x.height, x.channels);
        for ch in 0..x.channels {
            let plane = self.apply_plane(x.plane(ch), conjugate);
            out.plane_mut(ch).copy_from_slice(&plane);
        }
        out
    }
}

/// Circular (periodic-boundary) 2-D convolution, per channel, via the DFT.
pub fn convolve_circular(x: &Image, kernel: &Kernel) -> Result<Image> {
    let op = ConvOp::new(kernel, x.width(), x.height())?;
    op.convolve(&Field::from_image(x)).to_image()
}

/// Circular correlation with the kernel — the adjoint of `convolve_circular`,
/// equal to convolution with the 180-degree-rotated kernel.
pub fn adjoint_convolve(u: &Image, kernel: &Kernel) -> Result<Image> {
    let op = ConvOp::new(kernel, u.width(), u.height())?;
    op.adjoint(&Field::from_image(u)).to_image()
}

/// y + n with n i.i.d. Gaussian(0, sigma^2) drawn from a counter-based
/// stream split by sample index: the same (y, sigma, seed) always yields
/// the identical output, independent of evaluation order.
pub fn add_gaussian_noise(y: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "noise sigma must be >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(y.clone());
    }
    let rng = CounterRng::new(seed);
    let data: Vec<f32> = y
        .data()
        .iter()
        .enumerate()
        .map(|(i, &s)| (f64::from(s) + sigma * rng.gaussian_at(i as u64)) as f32)
        .collect();
    Image::new(y.width(), y.height(), y.channels(), data)
}

/// The full measurement model: circular blur, then additive noise.
pub fn make_blurry(x: &Image, model: &BlurModel) -> Result<Image> {
    let blurred = convolve_circular(x, &model.kernel)?;
    add_gaussian_noise(&blurred, model.noise_sigma, model.seed)
}
