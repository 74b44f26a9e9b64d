//! Closed-form Wiener deconvolution in the DFT domain.
//!
//! With circular boundaries the blur operator is diagonal in frequency, so
//! the regularized inverse is exact: X = conj(B) * Y / (|B|^2 + lambda)
//! per channel. The operator is linear, so its Jacobian is itself and the
//! VJP applies the conjugate filter.

use crate::error::{Error, Result};
use crate::fft::{kernel_spectrum, Spectrum};
use crate::field::Field;
use crate::kernel::Kernel;
use rustfft::num_complex::Complex;

#[derive(Debug, Clone, PartialEq)]
pub struct WienerConfig {
    pub lambda: f64,
}

impl WienerConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "wiener lambda must be > 0, got {lambda}"
            )));
        }
        Ok(WienerConfig { lambda })
    }
}

impl Default for WienerConfig {
    fn default() -> Self {
        WienerConfig { lambda: 0.005 }
    }
}

/// Wiener filter bound to one kernel, regularization weight, and plane size.
#[derive(Debug, Clone)]
pub(crate) struct WienerOp {
    width: usize,
    height: usize,
    filter: Vec<Complex<f64>>,
}

impl WienerOp {
    pub fn new(cfg: &WienerConfig, kernel: &Kernel, width: usize, height: usize) -> Result<Self> {
        if kernel.size() > width || kernel.size() > height {
            return Err(Error::KernelTooLarge {
                kernel: kernel.size(),
                width,
                height,
            });
        }
        let spec = kernel_spectrum(kernel, width, height);
        let filter = spec
            .coefficients
            .iter()
            .map(|b| b.conj() / (b.norm_sqr() + cfg.lambda))
            .collect();
        Ok(WienerOp {
            width,
            height,
            filter,
        })
    }

    fn apply_filter(&self, x: &Field, conjugate: bool) -> Field {
        let mut out = Field::zeros(x.width, x.height, x.channels);
        for ch in 0..x.channels {
            let spec = Spectrum::forward(x.plane(ch), self.width, self.height);
            let filtered: Vec<Complex<f64>> = spec
                .coefficients
                .iter()
                .zip(&self.filter)
                .map(|(v, f)| if conjugate { v * f.conj() } else { v * f })
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

    pub fn forward(&self, y: &Field) -> Field {
        self.apply_filter(y, false)
    }

    /// Jacobian-transpose action: the filter is linear, so this is just the
    /// conjugate transfer function applied to the cotangent.
    pub fn vjp(&self, cotangent: &Field) -> Field {
        self.apply_filter(cotangent, true)
    }
}
