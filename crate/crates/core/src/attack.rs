//! PGD with Adam updates and L-infinity projection.
//!
//! Solves both attack objectives: untargeted (maximize reconstruction error
//! against the frozen clean output) and targeted (steer the reconstruction
//! toward a target image), subject to ||delta||_inf <= epsilon. The ball
//! constrains only delta; y + delta is not clamped to [0, 1] unless
//! `clamp_input` is set. The returned perturbation is the best iterate seen,
//! never simply the last.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grad::{loss_and_grad_field, LossKind, UntargetedReference};
use crate::image::{ncc, psnr, Image, MetricsRecord};
use crate::recon::Reconstructor;
use crate::rng::CounterRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackMode {
    Targeted,
    Untargeted,
}

impl AttackMode {
    pub fn name(&self) -> &'static str {
        match self {
            AttackMode::Targeted => "targeted",
            AttackMode::Untargeted => "untargeted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaInit {
    Zeros,
    /// Uniform in [-epsilon, epsilon], drawn from the config seed.
    UniformRandom,
}

/// Protocol defaults: fixed step size 1e-3; 250 PGD steps untargeted,
/// 500 targeted.
pub const DEFAULT_STEP_SIZE: f64 = 1e-3;
pub const DEFAULT_UNTARGETED_STEPS: usize = 250;
pub const DEFAULT_TARGETED_STEPS: usize = 500;
/// Default perturbation budget grid (as fractions of the 8-bit range).
pub const DEFAULT_EPSILONS_255: [u32; 3] = [4, 8, 12];

#[derive(Debug, Clone)]
pub struct AttackConfig {
    pub mode: AttackMode,
    /// L-infinity radius in intensity units (e.g. 4/255).
    pub epsilon: f64,
    pub num_steps: usize,
    /// Adam learning rate.
    pub step_size: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub init: DeltaInit,
    /// Clamp y + delta into [0, 1] after projection (ablation flag; off by
    /// default since the constraint set is the epsilon-ball alone).
    pub clamp_input: bool,
}

impl AttackConfig {
    /// Untargeted default. Starts from a uniform-random point in the ball:
    /// delta = 0 is an exact stationary point of the squared untargeted
    /// objective (the gradient there is identically zero against the frozen
    /// reference), so a zero start would never move.
    pub fn untargeted(epsilon: f64) -> Self {
        AttackConfig {
            mode: AttackMode::Untargeted,
            epsilon,
            num_steps: DEFAULT_UNTARGETED_STEPS,
            step_size: DEFAULT_STEP_SIZE,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            init: DeltaInit::UniformRandom,
            clamp_input: false,
        }
    }

    /// Targeted default. Starts from zero, which is feasible and makes the
    /// best iterate never worse than no attack at all.
    pub fn targeted(epsilon: f64) -> Self {
        AttackConfig {
            mode: AttackMode::Targeted,
            num_steps: DEFAULT_TARGETED_STEPS,
            init: DeltaInit::Zeros,
            ..AttackConfig::untargeted(epsilon)
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !self.step_size.is_finite() || self.step_size <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "step size must be > 0, got {}",
                self.step_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AttackResult {
    /// Best-iterate perturbation; ||delta||_inf <= epsilon holds sample-wise.
    pub delta: Image,
    /// Objective value per step, entry 0 at the initial delta
    /// (length num_steps + 1).
    pub objective_trace: Vec<f64>,
    /// Sup-norm of delta per step, aligned with `objective_trace`.
    pub delta_inf_trace: Vec<f64>,
    pub best_step: usize,
    /// y + delta.
    pub adversarial_input: Image,
    /// N(y + delta).
    pub adversarial_output: Image,
}

/// Largest f32 not exceeding the bound, so clamped samples stay inside the
/// ball exactly even after storage rounding.
fn bound_as_f32(epsilon: f64) -> f32 {
    let cast = epsilon as f32;
    if f64::from(cast) > epsilon {
        f32::from_bits(cast.to_bits() - 1)
    } else {
        cast
    }
}

/// Sample-wise clamp onto the L-infinity ball of radius epsilon.
pub fn project_linf(delta: &Image, epsilon: f64) -> Image {
    let eps = bound_as_f32(epsilon.max(0.0));
    let data = delta.data().iter().map(|&v| v.clamp(-eps, eps)).collect();
    Image::new(delta.width(), delta.height(), delta.channels(), data)
        .expect("projection preserves validity")
}

/// Serialize the objective trace as CSV (step, loss).
pub fn trace_csv(result: &AttackResult) -> String {
    let mut out = String::from("step,loss\n");
    for (step, loss) in result.objective_trace.iter().enumerate() {
        out.push_str(&format!("{step},{loss:.12e}\n"));
    }
    out
}

/// Projected gradient descent with Adam updates. Tracks the iterate with
/// the lowest loss seen (for untargeted attacks the most negative value,
/// i.e. the largest reconstruction error) and reports that one.
pub fn pgd_attack(
    recon: &Reconstructor,
    y: &Image,
    cfg: &AttackConfig,
    target: Option<&Image>,
) -> Result<AttackResult> {
    pgd_attack_scaled(recon, y, cfg, target, 1.0)
}

pub(crate) fn pgd_attack_scaled(
    recon: &Reconstructor,
    y: &Image,
    cfg: &AttackConfig,
    target: Option<&Image>,
    objective_scale: f64,
) -> Result<AttackResult> {
    cfg.validate()?;
    let loss = match (cfg.mode, target) {
        (AttackMode::Targeted, Some(t)) => LossKind::Targeted(t.clone()),
        (AttackMode::Targeted, None) => return Err(Error::MissingTarget),
        (AttackMode::Untargeted, None) => {
            LossKind::Untargeted(UntargetedReference::compute(recon, y)?)
        }
        (AttackMode::Untargeted, Some(_)) => return Err(Error::UnexpectedTarget),
    };

    let y_field = Field::from_image(y);
    let eps = cfg.epsilon;
    let n = y.sample_count();

    let mut delta = match cfg.init {
        DeltaInit::Zeros => Image::zeros(y.width(), y.height(), y.channels()),
        DeltaInit::UniformRandom => {
            let rng = CounterRng::new(cfg.seed);
            let data: Vec<f32> = (0..n)
                .map(|i| rng.uniform_signed_at(i as u64, eps) as f32)
                .collect();
            project_linf(&Image::new(y.width(), y.height(), y.channels(), data)?, eps)
        }
    };

    let eval = |delta: &Image| -> Result<(f64, Field)> {
        loss_and_grad_field(
            recon,
            &y_field,
            &Field::from_image(delta),
            &loss,
            objective_scale,
        )
    };

    let sup = |img: &Image| -> f64 {
        img.data()
            .iter()
            .map(|v| f64::from(v.abs()))
            .fold(0.0, f64::max)
    };

    let (mut value, mut gradient) = eval(&delta)?;
    if !value.is_finite() {
        return Err(Error::NonFiniteAtStep {
            what: "loss",
            step: 0,
        });
    }
    let mut objective_trace = Vec::with_capacity(cfg.num_steps + 1);
    let mut delta_inf_trace = Vec::with_capacity(cfg.num_steps + 1);
    objective_trace.push(value);
    delta_inf_trace.push(sup(&delta));
    let mut best = (value, delta.clone(), 0usize);

    let mut m1 = vec![0.0f64; n];
    let mut m2 = vec![0.0f64; n];

    for step in 1..=cfg.num_steps {
        if !gradient.is_finite() {
            return Err(Error::NonFiniteAtStep {
                what: "gradient",
                step: step - 1,
            });
        }
        let c1 = 1.0 - cfg.adam_beta1.powi(step as i32);
        let c2 = 1.0 - cfg.adam_beta2.powi(step as i32);
        let mut updated = Vec::with_capacity(n);
        for (i, &d) in delta.data().iter().enumerate() {
            let g = gradient.data[i];
            m1[i] = cfg.adam_beta1 * m1[i] + (1.0 - cfg.adam_beta1) * g;
            m2[i] = cfg.adam_beta2 * m2[i] + (1.0 - cfg.adam_beta2) * g * g;
            let stepped =
                f64::from(d) - cfg.step_size * (m1[i] / c1) / ((m2[i] / c2).sqrt() + cfg.adam_eps);
            updated.push(stepped as f32);
        }
        delta = project_linf(
            &Image::new(y.width(), y.height(), y.channels(), updated)?,
            eps,
        );
        if cfg.clamp_input {
            delta = clamp_input_range(&delta, y);
        } else {
            debug_assert!(sup(&delta) <= eps + 1e-9);
        }

        let (v, g) = eval(&delta)?;
        if !v.is_finite() {
            return Err(Error::NonFiniteAtStep { what: "loss", step });
        }
        value = v;
        gradient = g;
        objective_trace.push(value);
        delta_inf_trace.push(sup(&delta));
        if value < best.0 {
            best = (value, delta.clone(), step);
        }
    }

    let (_best_value, best_delta, best_step) = best;
    let adversarial_input = add_images(y, &best_delta)?;
    let adversarial_output = recon.reconstruct(&adversarial_input)?;
    Ok(AttackResult {
        delta: best_delta,
        objective_trace,
        delta_inf_trace,
        best_step,
        adversarial_input,
        adversarial_output,
    })
}

fn add_images(a: &Image, b: &Image) -> Result<Image> {
    a.require_same_shape(b)?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (f64::from(x) + f64::from(y)) as f32)
        .collect();
    Image::new(a.width(), a.height(), a.channels(), data)
}

/// Keep y + delta inside [0, 1] by shrinking delta where needed.
fn clamp_input_range(delta: &Image, y: &Image) -> Image {
    let data = delta
        .data()
        .iter()
        .zip(y.data())
        .map(|(&d, &yv)| {
            let sum = (f64::from(yv) + f64::from(d)).clamp(0.0, 1.0);
            (sum - f64::from(yv)) as f32
        })
        .collect();
    Image::new(delta.width(), delta.height(), delta.channels(), data)
        .expect("clamp preserves validity")
}

/// Evaluate a perturbation crafted against `craft` on a differently
/// configured operator of the same kind (e.g. 10 vs 50 unrolled steps).
pub fn transfer_eval(
    craft: &Reconstructor,
    eval: &Reconstructor,
    result: &AttackResult,
    y: &Image,
    source: &Image,
    target: Option<&Image>,
) -> Result<MetricsRecord> {
    if craft.kind_name() != eval.kind_name() {
        return Err(Error::InvalidConfig(format!(
            "transfer evaluation requires matching kinds, got {} vs {}",
            craft.kind_name(),
            eval.kind_name()
        )));
    }
    let adversarial = add_images(y, &result.delta)?;
    let output = eval.reconstruct(&adversarial)?;
    Ok(MetricsRecord {
        psnr_source: psnr(&output, source)?,
        ncc_source: ncc(&output, source)?,
        psnr_target: target.map(|t| psnr(&output, t)).transpose()?,
        ncc_target: target.map(|t| ncc(&output, t)).transpose()?,
    })
}
