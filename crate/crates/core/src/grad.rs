//! Vector-Jacobian products of the reconstructors with respect to their
//! input, and the two attack losses with exact gradients.
//!
//! Untargeted: L = -1/2 ||N(y + delta) - N(y)||^2, negated so the attack
//! engine always minimizes. The clean reference N(y) is computed once and
//! frozen at 64-bit precision. Targeted: L = 1/2 ||N(y + delta) - x~||^2
//! with gradient J^T (N(y + delta) - x~).

use crate::error::{Error, Result};
use crate::field::Field;
use crate::image::Image;
use crate::recon::Reconstructor;

/// Frozen clean output N(y) serving as the untargeted reference. Keeps the
/// full-precision samples used by the loss alongside the storable image.
#[derive(Debug, Clone)]
pub struct UntargetedReference {
    image: Image,
    samples: Field,
}

impl UntargetedReference {
    /// Runs the reconstruction once and freezes it.
    pub fn compute(recon: &Reconstructor, y: &Image) -> Result<Self> {
        let (out, _) = recon.forward_field(&Field::from_image(y))?;
        Ok(UntargetedReference {
            image: out.to_image()?,
            samples: out,
        })
    }

    pub fn image(&self) -> &Image {
        &self.image
    }

    pub(crate) fn samples(&self) -> &Field {
        &self.samples
    }
}

/// Objective selector for the attack engine.
#[derive(Debug, Clone)]
pub enum LossKind {
    /// Maximize reconstruction error against the frozen clean output
    /// (implemented as minimizing the negated squared distance).
    Untargeted(UntargetedReference),
    /// Steer the reconstruction toward a target image.
    Targeted(Image),
}

impl LossKind {
    fn reference_field(&self) -> Field {
        match self {
            LossKind::Untargeted(reference) => reference.samples().clone(),
            LossKind::Targeted(target) => Field::from_image(target),
        }
    }

    fn sign(&self) -> f64 {
        match self {
            LossKind::Untargeted(_) => -1.0,
            LossKind::Targeted(_) => 1.0,
        }
    }
}

/// J^T u where J is the Jacobian of the reconstruction with respect to its
/// input, evaluated at y.
pub fn vjp(recon: &Reconstructor, y: &Image, cotangent: &Image) -> Result<Image> {
    let (out, cache) = recon.forward_field(&Field::from_image(y))?;
    let cot = Field::from_image(cotangent);
    if !out.same_shape(&cot) {
        return Err(Error::DimensionMismatch(format!(
            "cotangent {} vs output {}x{}x{}",
            cotangent.shape_str(),
            out.width,
            out.height,
            out.channels
        )));
    }
    recon.vjp_field(&cache, &cot)?.to_image()
}

/// Scalar loss and its gradient with respect to delta.
pub fn loss_and_grad(
    recon: &Reconstructor,
    y: &Image,
    delta: &Image,
    loss: &LossKind,
) -> Result<(f64, Image)> {
    let (value, grad) = loss_and_grad_field(
        recon,
        &Field::from_image(y),
        &Field::from_image(delta),
        loss,
        1.0,
    )?;
    Ok((value, grad.to_image()?))
}

/// 64-bit path shared with the attack loop. `scale` multiplies the
/// objective (and hence the gradient); the public entry uses 1.
pub(crate) fn loss_and_grad_field(
    recon: &Reconstructor,
    y: &Field,
    delta: &Field,
    loss: &LossKind,
    scale: f64,
) -> Result<(f64, Field)> {
    if !y.same_shape(delta) {
        return Err(Error::DimensionMismatch(format!(
            "delta {}x{}x{} vs input {}x{}x{}",
            delta.width, delta.height, delta.channels, y.width, y.height, y.channels
        )));
    }
    let input = y.add(delta);
    let (out, cache) = recon.forward_field(&input)?;
    let reference = loss.reference_field();
    if !out.same_shape(&reference) {
        return Err(Error::DimensionMismatch(format!(
            "loss reference {}x{}x{} vs output {}x{}x{}",
            reference.width,
            reference.height,
            reference.channels,
            out.width,
            out.height,
            out.channels
        )));
    }
    let residual = out.sub(&reference);
    let sign = loss.sign();
    let value = scale * sign * 0.5 * residual.norm_sq();
    let mut grad = recon.vjp_field(&cache, &residual)?;
    grad.scale(scale * sign);
    Ok((value, grad))
}
