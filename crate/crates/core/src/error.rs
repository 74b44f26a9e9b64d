//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate image: zero variance")]
    DegenerateImage,

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("negative kernel weight {value} at ({row}, {col})")]
    NegativeKernelWeight { row: usize, col: usize, value: f64 },

    #[error("even kernel size {0}; kernels must have odd support")]
    EvenKernelSize(usize),

    #[error("non-square kernel {rows}x{cols}")]
    NonSquareKernel { rows: usize, cols: usize },

    #[error("kernel weights sum to zero; cannot normalize")]
    ZeroSumKernel,

    #[error("kernel size {kernel} exceeds image extent {width}x{height}")]
    KernelTooLarge {
        kernel: usize,
        width: usize,
        height: usize,
    },

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("reconstructor {kind} requires a blur kernel")]
    MissingKernel { kind: &'static str },

    #[error("blind reconstructor must not carry a kernel")]
    UnexpectedKernel,

    #[error("layer shape chain violation: {0}")]
    ShapeChain(String),

    #[error("non-finite {what} at step {step}")]
    NonFiniteAtStep { what: &'static str, step: usize },

    #[error("non-finite {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty training dataset")]
    EmptyDataset,

    #[error("rect ({x}, {y}, {w}, {h}) out of bounds for {width}x{height} image")]
    RectOutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },

    #[error("targeted attack requires a target image")]
    MissingTarget,

    #[error("untargeted attack does not accept a target image")]
    UnexpectedTarget,

    #[error("duplicate sweep point: kernel size {0}")]
    DuplicateSweepPoint(usize),

    #[error("no kernel of size {0} available for sweep")]
    MissingSweepKernel(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Validation errors exit with 1, runtime failures with 2.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::NonFiniteAtStep { .. } | Error::NonFinite(_)
        )
    }
}
