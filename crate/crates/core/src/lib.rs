//! Differentiable image deblurring operators and an L-infinity adversarial
//! attack engine built on them.
//!
//! The crate provides:
//! - image/kernel containers, quality metrics, and bit-exact file formats,
//! - the circular-blur measurement model with seeded Gaussian noise,
//! - three deblurring operators (Wiener filter, unrolled gradient descent
//!   with a smoothed-TV prior, small trainable CNN) with exact
//!   vector-Jacobian products,
//! - targeted and untargeted PGD attacks with Adam updates and best-iterate
//!   tracking,
//! - an experiment harness producing deterministic CSV reports over
//!   image x kernel x reconstructor x epsilon grids.

pub mod attack;
pub mod blur;
pub mod error;
pub mod fft;
mod field;
pub mod fixtures;
pub mod grad;
pub mod harness;
pub mod image;
pub mod io;
pub mod kernel;
pub mod recon;
pub mod rng;

pub use attack::{
    pgd_attack, project_linf, transfer_eval, AttackConfig, AttackMode, AttackResult, DeltaInit,
};
pub use blur::{
    add_gaussian_noise, adjoint_convolve, convolve_circular, make_blurry, BlurModel, ConvOp,
};
pub use error::{Error, Result};
pub use grad::{loss_and_grad, vjp, LossKind, UntargetedReference};
pub use harness::{
    build_dataset, compose_localized_target, kernel_size_sweep, run_grid, ExperimentSpec, ReportRow,
};
pub use image::{ncc, psnr, Image, MetricsRecord, PSNR_CAP_DB};
pub use kernel::Kernel;
pub use recon::{CnnConfig, ReconKind, Reconstructor, UnrolledConfig, WienerConfig};
