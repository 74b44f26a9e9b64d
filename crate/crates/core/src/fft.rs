//! 2-D DFT plumbing shared by circular convolution and Wiener filtering.
//!
//! Plans are cached per thread, so the public functions stay pure and
//! worker-safe.

use crate::kernel::Kernel;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::cell::RefCell;

/// Frequency-domain representation of one image plane (or a kernel padded
/// to the plane size). One complex coefficient per DFT bin, row-major.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub width: usize,
    pub height: usize,
    pub coefficients: Vec<Complex<f64>>,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft2d_in_place(buf: &mut [Complex<f64>], width: usize, height: usize, inverse: bool) {
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let row_fft = if inverse {
            planner.plan_fft_inverse(width)
        } else {
            planner.plan_fft_forward(width)
        };
        let col_fft = if inverse {
            planner.plan_fft_inverse(height)
        } else {
            planner.plan_fft_forward(height)
        };
        for row in buf.chunks_exact_mut(width) {
            row_fft.process(row);
        }
        let mut column = vec![Complex::default(); height];
        for x in 0..width {
            for y in 0..height {
                column[y] = buf[y * width + x];
            }
            col_fft.process(&mut column);
            for y in 0..height {
                buf[y * width + x] = column[y];
            }
        }
    });
}

impl Spectrum {
    /// Forward DFT of a real plane.
    pub fn forward(plane: &[f64], width: usize, height: usize) -> Spectrum {
        debug_assert_eq!(plane.len(), width * height);
        let mut buf: Vec<Complex<f64>> = plane.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft2d_in_place(&mut buf, width, height, false);
        Spectrum {
            width,
            height,
            coefficients: buf,
        }
    }

    /// Inverse DFT, returning the real part of the normalized transform.
    pub fn inverse_real(&self) -> Vec<f64> {
        let mut buf = self.coefficients.clone();
        fft2d_in_place(&mut buf, self.width, self.height, true);
        let scale = 1.0 / (self.width * self.height) as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    /// Elementwise product with a transfer function of matching size.
    pub fn filtered(&self, transfer: &[Complex<f64>]) -> Spectrum {
        debug_assert_eq!(self.coefficients.len(), transfer.len());
        Spectrum {
            width: self.width,
            height: self.height,
            coefficients: self
                .coefficients
                .iter()
                .zip(transfer)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }
}

/// DFT of the kernel zero-padded to width x height with the center tap at
/// frequency-domain index (0, 0). This centering convention is what makes
/// the spatial-domain oracle and the FFT path agree exactly.
pub fn kernel_spectrum(kernel: &Kernel, width: usize, height: usize) -> Spectrum {
    let k = kernel.size();
    let c = kernel.radius();
    let mut padded = vec![0.0f64; width * height];
    for i in 0..k {
        for j in 0..k {
            let row = (i + height - (c % height)) % height;
            let col = (j + width - (c % width)) % width;
            padded[row * width + col] += kernel.weight(i, j);
        }
    }
    Spectrum::forward(&padded, width, height)
}
