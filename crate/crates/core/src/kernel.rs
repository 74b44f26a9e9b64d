//! Blur kernels: square, odd support, nonnegative, normalized to unit sum.

use crate::error::{Error, Result};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel {
    /// Validates and normalizes: odd square support, nonnegative weights,
    /// weights rescaled to sum to one.
    pub fn new(size: usize, mut weights: Vec<f64>) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(Error::EvenKernelSize(size));
        }
        if weights.len() != size * size {
            return Err(Error::NonSquareKernel {
                rows: weights.len() / size.max(1),
                cols: size,
            });
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("kernel weight at index {i}")));
            }
            if w < 0.0 {
                return Err(Error::NegativeKernelWeight {
                    row: i / size,
                    col: i % size,
                    value: w,
                });
            }
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::ZeroSumKernel);
        }
        for w in &mut weights {
            *w /= sum;
        }
        Ok(Kernel { size, weights })
    }

    /// 1x1 identity kernel.
    pub fn delta() -> Self {
        Kernel {
            size: 1,
            weights: vec![1.0],
        }
    }

    pub fn box_filter(size: usize) -> Result<Self> {
        Kernel::new(size, vec![1.0; size * size])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }

    /// 180-degree rotation about the center tap.
    pub fn rotated(&self) -> Kernel {
        let mut w = self.weights.clone();
        w.reverse();
        Kernel {
            size: self.size,
            weights: w,
        }
    }

    /// Parse the text format: first line "h w", then h*w whitespace-separated
    /// reals in row-major order. Lines starting with '#' are comments.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let malformed = |reason: &str| Error::MalformedFile {
            path: origin.to_string(),
            reason: reason.to_string(),
        };
        let mut tokens = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .flat_map(|l| l.split_whitespace());
        let h: usize = tokens
            .next()
            .ok_or_else(|| malformed("missing size header"))?
            .parse()
            .map_err(|_| malformed("bad kernel height"))?;
        let w: usize = tokens
            .next()
            .ok_or_else(|| malformed("missing kernel width"))?
            .parse()
            .map_err(|_| malformed("bad kernel width"))?;
        if h != w {
            return Err(Error::NonSquareKernel { rows: h, cols: w });
        }
        let mut weights = Vec::with_capacity(h * w);
        for tok in tokens {
            let v: f64 = tok
                .parse()
                .map_err(|_| malformed(&format!("bad weight token '{tok}'")))?;
            weights.push(v);
        }
        if weights.len() != h * w {
            return Err(malformed(&format!(
                "expected {} weights, found {}",
                h * w,
                weights.len()
            )));
        }
        Kernel::new(h, weights)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Kernel::parse(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = format!("{} {}\n", self.size, self.size);
        for row in self.weights.chunks(self.size) {
            let line: Vec<String> = row.iter().map(|w| format!("{w:.17e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
