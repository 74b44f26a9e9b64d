//! Deterministic CSV report rendering.
//!
//! The grid report carries '#' comment lines echoing the attack protocol
//! (step size, step counts, epsilon grid) and this run's configuration,
//! then a fixed header row, per-cell rows in cell-key order, and a
//! mean-aggregated summary block labeled "mean". Wall-clock timings are
//! written to a separate file so the report stays byte-identical across
//! runs and worker counts.

use super::{ExperimentSpec, ReportRow, SweepRow};
use crate::attack::{
    DEFAULT_EPSILONS_255, DEFAULT_STEP_SIZE, DEFAULT_TARGETED_STEPS, DEFAULT_UNTARGETED_STEPS,
};

pub const GRID_HEADER: &str = "image,kernel,reconstructor,mode,epsilon,status,\
clean_psnr_source,clean_ncc_source,attacked_psnr_source,attacked_ncc_source,\
clean_psnr_target,clean_ncc_target,attacked_psnr_target,attacked_ncc_target,\
transfer_clean_psnr_source,transfer_attacked_psnr_source,transfer_attacked_ncc_source,\
delta_inf_max,best_step,artifact_dir";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn opt_hi(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9}")).unwrap_or_default()
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn protocol_header_lines(spec: &ExperimentSpec) -> String {
    let default_grid: Vec<String> = DEFAULT_EPSILONS_255
        .iter()
        .map(|n| format!("{n}/255"))
        .collect();
    let eps_labels: Vec<&str> = spec.epsilons.iter().map(|e| e.label.as_str()).collect();
    let mode_names: Vec<&str> = spec.modes.iter().map(|m| m.name()).collect();
    let recon_names: Vec<&str> = spec.reconstructors.iter().map(|r| r.name()).collect();
    format!(
        "# deblur attack grid report\n\
         # protocol defaults: step_size={DEFAULT_STEP_SIZE:e}, \
         untargeted_steps={DEFAULT_UNTARGETED_STEPS}, targeted_steps={DEFAULT_TARGETED_STEPS}, \
         epsilon_grid={}\n\
         # adam: beta1=0.9, beta2=0.999, eps=1e-8; init: untargeted=uniform-random, targeted=zeros\n\
         # run: step_size={:e}, untargeted_steps={}, targeted_steps={}, epsilons={}, modes={}, \
         reconstructors={}, clamp_input={}, noise_sigma={}, master_seed={}, \
         unrolled_craft_steps={}, unrolled_eval_steps={}, wiener_lambda={}\n",
        default_grid.join(","),
        spec.attack_step_size,
        spec.untargeted_steps,
        spec.targeted_steps,
        eps_labels.join(","),
        mode_names.join(","),
        recon_names.join(","),
        spec.clamp_input,
        spec.noise_sigma,
        spec.master_seed,
        spec.unrolled_craft_steps,
        spec.unrolled_eval_steps,
        spec.wiener_lambda,
    )
}

fn row_line(row: &ReportRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        row.image,
        row.kernel,
        row.reconstructor,
        row.mode,
        row.epsilon,
        row.status,
        opt(row.clean_psnr_source),
        opt(row.clean_ncc_source),
        opt(row.attacked_psnr_source),
        opt(row.attacked_ncc_source),
        opt(row.clean_psnr_target),
        opt(row.clean_ncc_target),
        opt(row.attacked_psnr_target),
        opt(row.attacked_ncc_target),
        opt(row.transfer_clean_psnr_source),
        opt(row.transfer_attacked_psnr_source),
        opt(row.transfer_attacked_ncc_source),
        opt_hi(row.delta_inf_max),
        opt_usize(row.best_step),
        row.artifact_dir,
    )
}

/// Mean of the per-cell rows sharing (reconstructor, mode, epsilon),
/// skipping failed cells and absent fields.
pub fn summarize_means(rows: &[ReportRow]) -> Vec<ReportRow> {
    let mut groups: Vec<(String, String, String, f64)> = Vec::new();
    for row in rows {
        let key = (
            row.reconstructor.clone(),
            row.mode.clone(),
            row.epsilon.clone(),
            row.epsilon_value,
        );
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    groups
        .into_iter()
        .map(|(recon, mode, eps_label, eps_value)| {
            let members: Vec<&ReportRow> = rows
                .iter()
                .filter(|r| {
                    r.status == "ok"
                        && r.reconstructor == recon
                        && r.mode == mode
                        && r.epsilon == eps_label
                })
                .collect();
            let mean = |get: fn(&ReportRow) -> Option<f64>| -> Option<f64> {
                let values: Vec<f64> = members.iter().filter_map(|r| get(r)).collect();
                if values.is_empty() {
                    None
                } else {
                    Some(values.iter().sum::<f64>() / values.len() as f64)
                }
            };
            ReportRow {
                image: "mean".to_string(),
                kernel: "all".to_string(),
                reconstructor: recon,
                mode,
                epsilon: eps_label,
                epsilon_value: eps_value,
                status: "mean".to_string(),
                clean_psnr_source: mean(|r| r.clean_psnr_source),
                clean_ncc_source: mean(|r| r.clean_ncc_source),
                attacked_psnr_source: mean(|r| r.attacked_psnr_source),
                attacked_ncc_source: mean(|r| r.attacked_ncc_source),
                clean_psnr_target: mean(|r| r.clean_psnr_target),
                clean_ncc_target: mean(|r| r.clean_ncc_target),
                attacked_psnr_target: mean(|r| r.attacked_psnr_target),
                attacked_ncc_target: mean(|r| r.attacked_ncc_target),
                transfer_clean_psnr_source: mean(|r| r.transfer_clean_psnr_source),
                transfer_attacked_psnr_source: mean(|r| r.transfer_attacked_psnr_source),
                transfer_attacked_ncc_source: mean(|r| r.transfer_attacked_ncc_source),
                delta_inf_max: mean(|r| r.delta_inf_max),
                best_step: None,
                artifact_dir: String::new(),
                wall_seconds: 0.0,
            }
        })
        .collect()
}

pub fn grid_report_csv(spec: &ExperimentSpec, rows: &[ReportRow]) -> String {
    let mut out = protocol_header_lines(spec);
    out.push_str(GRID_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row_line(row));
        out.push('\n');
    }
    for row in summarize_means(rows) {
        out.push_str(&row_line(&row));
        out.push('\n');
    }
    out
}

/// Non-deterministic companion file: one wall-clock entry per cell.
pub fn timings_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("image,kernel,reconstructor,mode,epsilon,wall_seconds\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.3}\n",
            row.image, row.kernel, row.reconstructor, row.mode, row.epsilon, row.wall_seconds
        ));
    }
    out
}

pub const SWEEP_HEADER: &str = "kernel_size,reconstructor,clean_psnr_target,clean_ncc_target,\
attacked_psnr_target,attacked_ncc_target,attacked_psnr_source";

pub fn sweep_report_csv(spec: &ExperimentSpec, rows: &[SweepRow]) -> String {
    let mut out = protocol_header_lines(spec);
    out.push_str(&format!(
        "# sweep: fixed epsilon {}/255, localized targeted mode, means over {} images\n",
        super::SWEEP_EPSILON_255,
        spec.images.len()
    ));
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            row.size,
            row.reconstructor,
            row.clean_psnr_target,
            row.clean_ncc_target,
            row.attacked_psnr_target,
            row.attacked_ncc_target,
            row.attacked_psnr_source,
        ));
    }
    out
}
