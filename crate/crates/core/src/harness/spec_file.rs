//! Flat key-value experiment spec files.
//!
//! UTF-8 lines of `key = value`; lists are comma-separated; lines starting
//! with '#' (and blank lines) are ignored. Relative paths resolve against
//! the spec file's directory. Epsilon values accept either fractions like
//! `4/255` or plain decimals; the written form is kept as the label used in
//! reports and artifact paths.

use super::{EpsilonSpec, ExperimentSpec, ReconChoice, Rect, TargetPolicy};
use crate::attack::AttackMode;
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

pub fn parse_epsilon(token: &str) -> Result<EpsilonSpec> {
    let token = token.trim();
    let value = if let Some((num, den)) = token.split_once('/') {
        let n: f64 = num
            .trim()
            .parse()
            .map_err(|_| invalid(format!("bad epsilon '{token}'")))?;
        let d: f64 = den
            .trim()
            .parse()
            .map_err(|_| invalid(format!("bad epsilon '{token}'")))?;
        if d == 0.0 {
            return Err(invalid(format!("bad epsilon '{token}'")));
        }
        n / d
    } else {
        token
            .parse()
            .map_err(|_| invalid(format!("bad epsilon '{token}'")))?
    };
    if !value.is_finite() || value < 0.0 {
        return Err(invalid(format!("epsilon must be >= 0, got '{token}'")));
    }
    Ok(EpsilonSpec {
        value,
        label: token.to_string(),
    })
}

pub fn parse_recon_choice(token: &str) -> Result<ReconChoice> {
    match token.trim() {
        "wiener" => Ok(ReconChoice::Wiener),
        "unrolled" => Ok(ReconChoice::Unrolled),
        "cnn" => Ok(ReconChoice::Cnn),
        other => Err(invalid(format!(
            "unknown reconstructor '{other}' (expected wiener, unrolled, or cnn)"
        ))),
    }
}

pub fn parse_mode(token: &str) -> Result<AttackMode> {
    match token.trim() {
        "targeted" => Ok(AttackMode::Targeted),
        "untargeted" => Ok(AttackMode::Untargeted),
        other => Err(invalid(format!(
            "unknown attack mode '{other}' (expected targeted or untargeted)"
        ))),
    }
}

fn parse_rect(value: &str) -> Result<Rect> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(invalid(format!("rect must be 'x,y,w,h', got '{value}'")));
    }
    let mut nums = [0usize; 4];
    for (slot, part) in nums.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|_| invalid(format!("bad rect component '{part}'")))?;
    }
    Ok(Rect {
        x: nums[0],
        y: nums[1],
        w: nums[2],
        h: nums[3],
    })
}

/// Parse spec text. `base` anchors relative paths.
pub fn parse_spec(text: &str, base: &Path) -> Result<ExperimentSpec> {
    let mut pairs: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| invalid(format!("line {}: expected 'key = value'", lineno + 1)))?;
        let key = key.trim().to_string();
        if pairs
            .insert(key.clone(), value.trim().to_string())
            .is_some()
        {
            return Err(invalid(format!("duplicate key '{key}'")));
        }
    }

    let resolve = |p: &str| -> PathBuf {
        let path = PathBuf::from(p);
        if path.is_absolute() {
            path
        } else {
            base.join(path)
        }
    };
    let list = |value: &str| -> Vec<String> {
        value
            .split(',')
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect()
    };

    let mut spec = ExperimentSpec::default();
    let mut target_image: Option<PathBuf> = None;
    let mut target_patch: Option<PathBuf> = None;
    let mut target_rect: Option<Rect> = None;

    for (key, value) in &pairs {
        match key.as_str() {
            "images" => spec.images = list(value).iter().map(|p| resolve(p)).collect(),
            "kernels" => spec.kernels = list(value).iter().map(|p| resolve(p)).collect(),
            "reconstructors" => {
                spec.reconstructors = list(value)
                    .iter()
                    .map(|t| parse_recon_choice(t))
                    .collect::<Result<_>>()?
            }
            "epsilons" => {
                spec.epsilons = list(value)
                    .iter()
                    .map(|t| parse_epsilon(t))
                    .collect::<Result<_>>()?
            }
            "modes" => {
                spec.modes = list(value)
                    .iter()
                    .map(|t| parse_mode(t))
                    .collect::<Result<_>>()?
            }
            "target" => target_image = Some(resolve(value)),
            "target_patch" => target_patch = Some(resolve(value)),
            "target_rect" => target_rect = Some(parse_rect(value)?),
            "noise_sigma" => {
                spec.noise_sigma = value
                    .parse()
                    .map_err(|_| invalid(format!("bad noise_sigma '{value}'")))?
            }
            "master_seed" => {
                spec.master_seed = value
                    .parse()
                    .map_err(|_| invalid(format!("bad master_seed '{value}'")))?
            }
            "output_dir" => spec.output_dir = resolve(value),
            "cnn_weights" => spec.cnn_weights = Some(resolve(value)),
            "wiener_lambda" => {
                spec.wiener_lambda = value
                    .parse()
                    .map_err(|_| invalid(format!("bad wiener_lambda '{value}'")))?
            }
            "unrolled_steps" => {
                spec.unrolled_craft_steps = value
                    .parse()
                    .map_err(|_| invalid(format!("bad unrolled_steps '{value}'")))?
            }
            "unrolled_eval_steps" => {
                spec.unrolled_eval_steps = value
                    .parse()
                    .map_err(|_| invalid(format!("bad unrolled_eval_steps '{value}'")))?
            }
            "unrolled_step_size" => {
                spec.unrolled_step_size = value
                    .parse()
                    .map_err(|_| invalid(format!("bad unrolled_step_size '{value}'")))?
            }
            "unrolled_tv_weight" => {
                spec.unrolled_tv_weight = value
                    .parse()
                    .map_err(|_| invalid(format!("bad unrolled_tv_weight '{value}'")))?
            }
            "unrolled_charbonnier_eps" => {
                spec.unrolled_charbonnier_eps = value
                    .parse()
                    .map_err(|_| invalid(format!("bad unrolled_charbonnier_eps '{value}'")))?
            }
            "untargeted_steps" => {
                spec.untargeted_steps = value
                    .parse()
                    .map_err(|_| invalid(format!("bad untargeted_steps '{value}'")))?
            }
            "targeted_steps" => {
                spec.targeted_steps = value
                    .parse()
                    .map_err(|_| invalid(format!("bad targeted_steps '{value}'")))?
            }
            "attack_step_size" => {
                spec.attack_step_size = value
                    .parse()
                    .map_err(|_| invalid(format!("bad attack_step_size '{value}'")))?
            }
            "clamp_input" => {
                spec.clamp_input = match value.as_str() {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    other => return Err(invalid(format!("bad clamp_input '{other}'"))),
                }
            }
            other => return Err(invalid(format!("unknown spec key '{other}'"))),
        }
    }

    spec.target_policy = match (target_image, target_patch, target_rect) {
        (Some(path), None, None) => Some(TargetPolicy::FixedImage(path)),
        (None, Some(patch), Some(rect)) => Some(TargetPolicy::LocalizedPatch { patch, rect }),
        (None, None, None) => None,
        (None, Some(_), None) => {
            return Err(invalid("target_patch requires target_rect"));
        }
        (None, None, Some(_)) => {
            return Err(invalid("target_rect requires target_patch"));
        }
        _ => {
            return Err(invalid(
                "set either target (fixed image) or target_patch + target_rect, not both",
            ));
        }
    };

    spec.validate()?;
    Ok(spec)
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_spec(&text, base)
}
