//! Differentiable deblurring operators.
//!
//! Three operator classes cover the taxonomy of interest: a closed-form
//! Wiener filter (non-blind, linear), unrolled gradient descent with a
//! smoothed-TV prior (non-blind, iterative), and a small trainable CNN
//! (blind, end-to-end). Non-blind kinds carry the blur kernel by
//! construction; the blind kind never does.

pub mod cnn;
pub mod unrolled;
pub mod wiener;

use crate::blur::ConvOp;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::image::Image;
use crate::kernel::Kernel;

pub use cnn::{cnn_train, CnnConfig, ConvLayer, TrainOptions, TrainOutcome};
pub use unrolled::{tv_gradient, tv_value, UnrolledConfig};
pub use wiener::WienerConfig;

#[derive(Debug, Clone)]
pub enum ReconKind {
    Wiener(WienerConfig),
    Unrolled(UnrolledConfig),
    Cnn(CnnConfig),
}

#[derive(Debug, Clone)]
pub struct Reconstructor {
    kind: ReconKind,
    kernel: Option<Kernel>,
}

pub(crate) enum ForwardCache {
    Wiener(wiener::WienerOp),
    Unrolled {
        conv: ConvOp,
        cfg: UnrolledConfig,
        iterates: Vec<Field>,
    },
    Cnn(cnn::CnnCache),
}

impl Reconstructor {
    pub fn wiener(cfg: WienerConfig, kernel: Kernel) -> Self {
        Reconstructor {
            kind: ReconKind::Wiener(cfg),
            kernel: Some(kernel),
        }
    }

    pub fn unrolled(cfg: UnrolledConfig, kernel: Kernel) -> Self {
        Reconstructor {
            kind: ReconKind::Unrolled(cfg),
            kernel: Some(kernel),
        }
    }

    pub fn cnn(cfg: CnnConfig) -> Self {
        Reconstructor {
            kind: ReconKind::Cnn(cfg),
            kernel: None,
        }
    }

    pub fn kind(&self) -> &ReconKind {
        &self.kind
    }

    pub fn kernel(&self) -> Option<&Kernel> {
        self.kernel.as_ref()
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ReconKind::Wiener(_) => "wiener",
            ReconKind::Unrolled(_) => "unrolled",
            ReconKind::Cnn(_) => "cnn",
        }
    }

    /// Same operator with a different unrolled step count; identity for the
    /// other kinds. Used by the craft-at-10 / evaluate-at-50 protocol.
    pub fn with_unrolled_steps(&self, steps: usize) -> Self {
        match &self.kind {
            ReconKind::Unrolled(cfg) => Reconstructor {
                kind: ReconKind::Unrolled(cfg.with_steps(steps)),
                kernel: self.kernel.clone(),
            },
            _ => self.clone(),
        }
    }

    fn require_kernel(&self) -> Result<&Kernel> {
        self.kernel.as_ref().ok_or(Error::MissingKernel {
            kind: self.kind_name(),
        })
    }

    /// Deterministic reconstruction of a blurry observation.
    pub fn reconstruct(&self, y: &Image) -> Result<Image> {
        let (out, _) = self.forward_field(&Field::from_image(y))?;
        out.to_image()
    }

    pub(crate) fn forward_field(&self, input: &Field) -> Result<(Field, ForwardCache)> {
        match &self.kind {
            ReconKind::Wiener(cfg) => {
                let op =
                    wiener::WienerOp::new(cfg, self.require_kernel()?, input.width, input.height)?;
                let out = op.forward(input);
                Ok((out, ForwardCache::Wiener(op)))
            }
            ReconKind::Unrolled(cfg) => {
                let conv = ConvOp::new(self.require_kernel()?, input.width, input.height)?;
                let (out, iterates) = unrolled::forward_with_iterates(cfg, &conv, input);
                Ok((
                    out,
                    ForwardCache::Unrolled {
                        conv,
                        cfg: cfg.clone(),
                        iterates,
                    },
                ))
            }
            ReconKind::Cnn(cfg) => {
                if self.kernel.is_some() {
                    return Err(Error::UnexpectedKernel);
                }
                let (out, cache) = cnn::forward_with_cache(cfg, input)?;
                Ok((out, ForwardCache::Cnn(cache)))
            }
        }
    }

    /// Jacobian-transpose action at the point captured by `cache`.
    pub(crate) fn vjp_field(&self, cache: &ForwardCache, cotangent: &Field) -> Result<Field> {
        match (&self.kind, cache) {
            (ReconKind::Wiener(_), ForwardCache::Wiener(op)) => Ok(op.vjp(cotangent)),
            (
                ReconKind::Unrolled(_),
                ForwardCache::Unrolled {
                    conv,
                    cfg,
                    iterates,
                },
            ) => Ok(unrolled::vjp(cfg, conv, iterates, cotangent)),
            (ReconKind::Cnn(cfg), ForwardCache::Cnn(cache)) => Ok(cnn::vjp(cfg, cache, cotangent)),
            _ => Err(Error::InvalidConfig(
                "forward cache does not match reconstructor kind".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let rng = CounterRng::new(seed);
        let data: Vec<f32> = (0..w * h).map(|i| rng.unit_at(i as u64) as f32).collect();
        Image::new(w, h, 1, data).unwrap()
    }

    #[test]
    fn unrolled_zero_steps_returns_observation() {
        let r = Reconstructor::unrolled(
            UnrolledConfig::new(0, 0.9, 0.002, 0.01).unwrap(),
            Kernel::box_filter(3).unwrap(),
        );
        let y = random_image(8, 8, 1);
        assert_eq!(r.reconstruct(&y).unwrap(), y);
    }

    #[test]
    fn reconstruct_is_deterministic() {
        let r = Reconstructor::wiener(WienerConfig::default(), Kernel::box_filter(3).unwrap());
        let y = random_image(16, 16, 2);
        assert_eq!(r.reconstruct(&y).unwrap(), r.reconstruct(&y).unwrap());
    }

    #[test]
    fn kernel_must_fit_image() {
        let r = Reconstructor::wiener(WienerConfig::default(), Kernel::box_filter(9).unwrap());
        assert!(matches!(
            r.reconstruct(&random_image(4, 4, 3)),
            Err(Error::KernelTooLarge { .. })
        ));
    }

    #[test]
    fn with_unrolled_steps_switches_k() {
        let r = Reconstructor::unrolled(UnrolledConfig::craft_default(), Kernel::delta());
        let r50 = r.with_unrolled_steps(50);
        match r50.kind() {
            ReconKind::Unrolled(cfg) => assert_eq!(cfg.steps, 50),
            _ => panic!("kind changed"),
        }
        assert!(r50.kernel().is_some());
    }
}
