//! Experiment orchestration: dataset synthesis, attack grids shaped like
//! the quantitative evaluation table, localized-target composition, and the
//! kernel-size sweep.
//!
//! Grid cells are independent work items executed on a worker pool; rows
//! are merged by cell key, and every per-cell seed derives from the master
//! seed and the cell's identity, so reports are byte-identical across runs
//! and worker counts. Wall-clock timings go to a separate file for that
//! reason.

pub mod report;
pub mod spec_file;

use crate::attack::{pgd_attack, transfer_eval, AttackConfig, AttackMode};
use crate::blur::{make_blurry, BlurModel};
use crate::error::{Error, Result};
use crate::image::{ncc, psnr, Image};
use crate::io::{load_raw, save_raw, save_view8};
use crate::kernel::Kernel;
use crate::recon::{CnnConfig, Reconstructor, UnrolledConfig, WienerConfig};
use crate::rng::derive_seed;
use rayon::prelude::*;
use std::path::{Path, PathBuf};

pub use spec_file::{load_spec, parse_epsilon, parse_mode, parse_recon_choice, parse_spec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconChoice {
    Wiener,
    Unrolled,
    Cnn,
}

impl ReconChoice {
    pub fn name(&self) -> &'static str {
        match self {
            ReconChoice::Wiener => "wiener",
            ReconChoice::Unrolled => "unrolled",
            ReconChoice::Cnn => "cnn",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSpec {
    pub value: f64,
    /// The written form, e.g. "4/255"; used in reports and artifact paths.
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

#[derive(Debug, Clone)]
pub enum TargetPolicy {
    /// One fixed target image for every targeted cell.
    FixedImage(PathBuf),
    /// Per-cell target: the clean reconstruction with a patch pasted into
    /// the given rect, so the target differs only locally.
    LocalizedPatch { patch: PathBuf, rect: Rect },
}

/// Declarative description of a batch run.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub images: Vec<PathBuf>,
    pub kernels: Vec<PathBuf>,
    pub reconstructors: Vec<ReconChoice>,
    pub epsilons: Vec<EpsilonSpec>,
    pub modes: Vec<AttackMode>,
    pub target_policy: Option<TargetPolicy>,
    pub noise_sigma: f64,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub cnn_weights: Option<PathBuf>,
    pub wiener_lambda: f64,
    pub unrolled_craft_steps: usize,
    pub unrolled_eval_steps: usize,
    pub unrolled_step_size: f64,
    pub unrolled_tv_weight: f64,
    pub unrolled_charbonnier_eps: f64,
    pub untargeted_steps: usize,
    pub targeted_steps: usize,
    pub attack_step_size: f64,
    pub clamp_input: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let unrolled = UnrolledConfig::craft_default();
        ExperimentSpec {
            images: Vec::new(),
            kernels: Vec::new(),
            reconstructors: Vec::new(),
            epsilons: crate::attack::DEFAULT_EPSILONS_255
                .iter()
                .map(|&n| EpsilonSpec {
                    value: f64::from(n) / 255.0,
                    label: format!("{n}/255"),
                })
                .collect(),
            modes: vec![AttackMode::Untargeted, AttackMode::Targeted],
            target_policy: None,
            noise_sigma: 0.01,
            master_seed: 0,
            output_dir: PathBuf::from("out"),
            cnn_weights: None,
            wiener_lambda: WienerConfig::default().lambda,
            unrolled_craft_steps: unrolled.steps,
            unrolled_eval_steps: UnrolledConfig::eval_default().steps,
            unrolled_step_size: unrolled.step_size,
            unrolled_tv_weight: unrolled.tv_weight,
            unrolled_charbonnier_eps: unrolled.charbonnier_eps,
            untargeted_steps: crate::attack::DEFAULT_UNTARGETED_STEPS,
            targeted_steps: crate::attack::DEFAULT_TARGETED_STEPS,
            attack_step_size: crate::attack::DEFAULT_STEP_SIZE,
            clamp_input: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let require = |ok: bool, what: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("spec requires {what}")))
            }
        };
        require(!self.images.is_empty(), "at least one image")?;
        require(!self.kernels.is_empty(), "at least one kernel")?;
        require(
            !self.reconstructors.is_empty(),
            "at least one reconstructor",
        )?;
        require(!self.epsilons.is_empty(), "at least one epsilon")?;
        require(!self.modes.is_empty(), "at least one attack mode")?;
        if self.modes.contains(&AttackMode::Targeted) {
            require(
                self.target_policy.is_some(),
                "a target policy (target or target_patch + target_rect) for targeted mode",
            )?;
        }
        if self.reconstructors.contains(&ReconChoice::Cnn) {
            require(
                self.cnn_weights.is_some(),
                "cnn_weights for the cnn reconstructor",
            )?;
        }
        require(self.noise_sigma >= 0.0, "noise_sigma >= 0")?;
        Ok(())
    }
}

/// One (source, kernel) pairing with its synthesized blurry observation.
#[derive(Debug, Clone)]
pub struct DatasetCell {
    pub image_id: String,
    pub kernel_id: String,
    pub source: Image,
    pub kernel: Kernel,
    pub blurry: Image,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_images(paths: &[PathBuf]) -> Result<Vec<(String, Image)>> {
    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        out.push((stem(path), load_raw(path)?));
    }
    Ok(out)
}

fn load_kernels(paths: &[PathBuf]) -> Result<Vec<(String, Kernel)>> {
    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        out.push((stem(path), Kernel::load(path)?));
    }
    Ok(out)
}

/// Synthesize the blurry observation for every (image, kernel) pair. The
/// per-pair noise seed derives from the master seed and both identifiers,
/// so any cell can be regenerated in isolation.
pub fn build_dataset(spec: &ExperimentSpec) -> Result<Vec<DatasetCell>> {
    let images = load_images(&spec.images)?;
    let kernels = load_kernels(&spec.kernels)?;
    build_dataset_from(&images, &kernels, spec.noise_sigma, spec.master_seed)
}

pub(crate) fn build_dataset_from(
    images: &[(String, Image)],
    kernels: &[(String, Kernel)],
    noise_sigma: f64,
    master_seed: u64,
) -> Result<Vec<DatasetCell>> {
    let mut cells = Vec::with_capacity(images.len() * kernels.len());
    for (image_id, source) in images {
        for (kernel_id, kernel) in kernels {
            let seed = derive_seed(master_seed, &["blur", image_id, kernel_id]);
            let model = BlurModel::new(kernel.clone(), noise_sigma, seed)?;
            cells.push(DatasetCell {
                image_id: image_id.clone(),
                kernel_id: kernel_id.clone(),
                source: source.clone(),
                kernel: kernel.clone(),
                blurry: make_blurry(source, &model)?,
            });
        }
    }
    Ok(cells)
}

/// Copy of `clean` with the rect region replaced by `patch`: the target
/// differs from the clean output only inside the rect. A zero-area rect
/// returns the clean reconstruction unchanged.
pub fn compose_localized_target(clean: &Image, patch: &Image, rect: &Rect) -> Result<Image> {
    if rect.w == 0 || rect.h == 0 {
        return Ok(clean.clone());
    }
    if rect.x + rect.w > clean.width() || rect.y + rect.h > clean.height() {
        return Err(Error::RectOutOfBounds {
            x: rect.x,
            y: rect.y,
            w: rect.w,
            h: rect.h,
            width: clean.width(),
            height: clean.height(),
        });
    }
    if patch.width() != rect.w || patch.height() != rect.h || patch.channels() != clean.channels() {
        return Err(Error::DimensionMismatch(format!(
            "patch {} vs rect {}x{} on {}-channel image",
            patch.shape_str(),
            rect.w,
            rect.h,
            clean.channels()
        )));
    }
    let c = clean.channels();
    let mut data = clean.data().to_vec();
    for row in 0..rect.h {
        for col in 0..rect.w {
            for ch in 0..c {
                data[((rect.y + row) * clean.width() + rect.x + col) * c + ch] =
                    patch.get(col, row, ch);
            }
        }
    }
    Image::new(clean.width(), clean.height(), clean.channels(), data)
}

/// One grid cell's outcome. Timing is kept out of the deterministic report.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub image: String,
    pub kernel: String,
    pub reconstructor: String,
    pub mode: String,
    pub epsilon: String,
    pub epsilon_value: f64,
    pub status: String,
    pub clean_psnr_source: Option<f64>,
    pub clean_ncc_source: Option<f64>,
    pub attacked_psnr_source: Option<f64>,
    pub attacked_ncc_source: Option<f64>,
    pub clean_psnr_target: Option<f64>,
    pub clean_ncc_target: Option<f64>,
    pub attacked_psnr_target: Option<f64>,
    pub attacked_ncc_target: Option<f64>,
    pub transfer_clean_psnr_source: Option<f64>,
    pub transfer_attacked_psnr_source: Option<f64>,
    pub transfer_attacked_ncc_source: Option<f64>,
    pub delta_inf_max: Option<f64>,
    pub best_step: Option<usize>,
    pub artifact_dir: String,
    pub wall_seconds: f64,
}

impl ReportRow {
    fn empty(key: &CellKey) -> Self {
        ReportRow {
            image: key.image.clone(),
            kernel: key.kernel.clone(),
            reconstructor: key.recon.name().to_string(),
            mode: key.mode.name().to_string(),
            epsilon: key.eps.label.clone(),
            epsilon_value: key.eps.value,
            status: String::new(),
            clean_psnr_source: None,
            clean_ncc_source: None,
            attacked_psnr_source: None,
            attacked_ncc_source: None,
            clean_psnr_target: None,
            clean_ncc_target: None,
            attacked_psnr_target: None,
            attacked_ncc_target: None,
            transfer_clean_psnr_source: None,
            transfer_attacked_psnr_source: None,
            transfer_attacked_ncc_source: None,
            delta_inf_max: None,
            best_step: None,
            artifact_dir: String::new(),
            wall_seconds: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
struct CellKey {
    order: (usize, usize, usize, usize, usize),
    image: String,
    kernel: String,
    recon: ReconChoice,
    mode: AttackMode,
    eps: EpsilonSpec,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub rows: Vec<ReportRow>,
    pub report_path: PathBuf,
    pub timings_path: PathBuf,
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn io_ctx(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

struct GridContext<'a> {
    spec: &'a ExperimentSpec,
    dataset: Vec<DatasetCell>,
    cnn: Option<CnnConfig>,
    fixed_target: Option<Image>,
    patch: Option<(Image, Rect)>,
}

impl GridContext<'_> {
    fn reconstructor(&self, choice: ReconChoice, kernel: &Kernel) -> Result<Reconstructor> {
        match choice {
            ReconChoice::Wiener => Ok(Reconstructor::wiener(
                WienerConfig::new(self.spec.wiener_lambda)?,
                kernel.clone(),
            )),
            ReconChoice::Unrolled => Ok(Reconstructor::unrolled(
                UnrolledConfig::new(
                    self.spec.unrolled_craft_steps,
                    self.spec.unrolled_step_size,
                    self.spec.unrolled_tv_weight,
                    self.spec.unrolled_charbonnier_eps,
                )?,
                kernel.clone(),
            )),
            ReconChoice::Cnn => {
                Ok(Reconstructor::cnn(self.cnn.clone().ok_or_else(|| {
                    Error::InvalidConfig("cnn weights not loaded".into())
                })?))
            }
        }
    }

    fn target_for(&self, mode: AttackMode, clean: &Image) -> Result<Option<Image>> {
        if mode != AttackMode::Targeted {
            return Ok(None);
        }
        match (&self.fixed_target, &self.patch) {
            (Some(t), _) => Ok(Some(t.clone())),
            (None, Some((patch, rect))) => Ok(Some(compose_localized_target(clean, patch, rect)?)),
            (None, None) => Err(Error::MissingTarget),
        }
    }
}

/// Amplified, offset copy of the perturbation for human viewing; the raw
/// copy is stored exactly.
fn delta_view(delta: &Image, gain: f32) -> Image {
    let data = delta.data().iter().map(|&v| 0.5 + gain * v).collect();
    Image::new(delta.width(), delta.height(), delta.channels(), data).expect("view construction")
}

fn run_cell(ctx: &GridContext<'_>, cell: &DatasetCell, key: &CellKey) -> Result<ReportRow> {
    let spec = ctx.spec;
    let mut row = ReportRow::empty(key);
    let recon = ctx.reconstructor(key.recon, &cell.kernel)?;
    let clean = recon.reconstruct(&cell.blurry)?;
    row.clean_psnr_source = Some(psnr(&clean, &cell.source)?);
    row.clean_ncc_source = Some(ncc(&clean, &cell.source)?);

    let target = ctx.target_for(key.mode, &clean)?;
    if let Some(t) = &target {
        row.clean_psnr_target = Some(psnr(&clean, t)?);
        row.clean_ncc_target = Some(ncc(&clean, t)?);
    }

    let base = match key.mode {
        AttackMode::Untargeted => AttackConfig::untargeted(key.eps.value),
        AttackMode::Targeted => AttackConfig::targeted(key.eps.value),
    };
    let cfg = AttackConfig {
        num_steps: match key.mode {
            AttackMode::Untargeted => spec.untargeted_steps,
            AttackMode::Targeted => spec.targeted_steps,
        },
        step_size: spec.attack_step_size,
        seed: derive_seed(
            spec.master_seed,
            &[
                "attack",
                &key.image,
                &key.kernel,
                key.recon.name(),
                key.mode.name(),
                &key.eps.label,
            ],
        ),
        clamp_input: spec.clamp_input,
        ..base
    };
    let result = pgd_attack(&recon, &cell.blurry, &cfg, target.as_ref())?;

    row.attacked_psnr_source = Some(psnr(&result.adversarial_output, &cell.source)?);
    row.attacked_ncc_source = Some(ncc(&result.adversarial_output, &cell.source)?);
    if let Some(t) = &target {
        row.attacked_psnr_target = Some(psnr(&result.adversarial_output, t)?);
        row.attacked_ncc_target = Some(ncc(&result.adversarial_output, t)?);
    }
    row.delta_inf_max = Some(result.delta_inf_trace.iter().cloned().fold(0.0, f64::max));
    row.best_step = Some(result.best_step);

    // craft at the low unrolled step count, evaluate robustness at the high one
    if key.recon == ReconChoice::Unrolled {
        let eval = recon.with_unrolled_steps(spec.unrolled_eval_steps);
        let clean_eval = eval.reconstruct(&cell.blurry)?;
        row.transfer_clean_psnr_source = Some(psnr(&clean_eval, &cell.source)?);
        let transfer = transfer_eval(
            &recon,
            &eval,
            &result,
            &cell.blurry,
            &cell.source,
            target.as_ref(),
        )?;
        row.transfer_attacked_psnr_source = Some(transfer.psnr_source);
        row.transfer_attacked_ncc_source = Some(transfer.ncc_source);
    }

    // artifacts
    let rel_dir = PathBuf::from(sanitize(&key.image))
        .join(sanitize(&key.kernel))
        .join(key.recon.name())
        .join(key.mode.name())
        .join(sanitize(&key.eps.label));
    let dir = spec.output_dir.join(&rel_dir);
    std::fs::create_dir_all(&dir).map_err(io_ctx(&dir))?;
    save_raw(&clean, &dir.join("clean.dbim"))?;
    save_raw(&result.adversarial_input, &dir.join("adv_input.dbim"))?;
    save_raw(&result.delta, &dir.join("delta.dbim"))?;
    save_raw(&result.adversarial_output, &dir.join("adv_output.dbim"))?;
    if let Some(t) = &target {
        save_raw(t, &dir.join("target.dbim"))?;
    }
    let view_name = if result.delta.channels() == 1 {
        "delta_view.pgm"
    } else {
        "delta_view.ppm"
    };
    save_view8(&delta_view(&result.delta, 8.0), &dir.join(view_name))?;
    let trace_path = dir.join("trace.csv");
    std::fs::write(&trace_path, crate::attack::trace_csv(&result)).map_err(io_ctx(&trace_path))?;
    row.artifact_dir = rel_dir.to_string_lossy().replace('\\', "/");
    row.status = "ok".to_string();
    Ok(row)
}

/// Run the full image x kernel x reconstructor x mode x epsilon grid.
/// Per-cell failures are recorded in the report and the run continues.
pub fn run_grid(spec: &ExperimentSpec) -> Result<GridOutcome> {
    spec.validate()?;
    let cnn = match spec.reconstructors.contains(&ReconChoice::Cnn) {
        true => Some(CnnConfig::load(spec.cnn_weights.as_ref().ok_or_else(
            || Error::InvalidConfig("cnn reconstructor requires cnn_weights".into()),
        )?)?),
        false => None,
    };
    let fixed_target = match &spec.target_policy {
        Some(TargetPolicy::FixedImage(path)) => Some(load_raw(path)?),
        _ => None,
    };
    let patch = match &spec.target_policy {
        Some(TargetPolicy::LocalizedPatch { patch, rect }) => Some((load_raw(patch)?, *rect)),
        _ => None,
    };
    let dataset = build_dataset(spec)?;

    std::fs::create_dir_all(&spec.output_dir).map_err(io_ctx(&spec.output_dir))?;
    for cell in &dataset {
        let dir = spec
            .output_dir
            .join(sanitize(&cell.image_id))
            .join(sanitize(&cell.kernel_id));
        std::fs::create_dir_all(&dir).map_err(io_ctx(&dir))?;
        save_raw(&cell.blurry, &dir.join("blurry.dbim"))?;
        save_raw(&cell.source, &dir.join("source.dbim"))?;
    }

    let ctx = GridContext {
        spec,
        dataset,
        cnn,
        fixed_target,
        patch,
    };

    let mut keys = Vec::new();
    for (di, cell) in ctx.dataset.iter().enumerate() {
        for (ri, recon) in spec.reconstructors.iter().enumerate() {
            for (mi, mode) in spec.modes.iter().enumerate() {
                for (ei, eps) in spec.epsilons.iter().enumerate() {
                    keys.push((
                        di,
                        CellKey {
                            order: (di, 0, ri, mi, ei),
                            image: cell.image_id.clone(),
                            kernel: cell.kernel_id.clone(),
                            recon: *recon,
                            mode: *mode,
                            eps: eps.clone(),
                        },
                    ));
                }
            }
        }
    }

    let mut rows: Vec<(CellKey, ReportRow)> = keys
        .into_par_iter()
        .map(|(di, key)| {
            let started = std::time::Instant::now();
            let cell = &ctx.dataset[di];
            let mut row = match run_cell(&ctx, cell, &key) {
                Ok(row) => row,
                Err(err) => {
                    let mut row = ReportRow::empty(&key);
                    row.status = format!("error: {err}").replace(',', ";");
                    row
                }
            };
            row.wall_seconds = started.elapsed().as_secs_f64();
            (key, row)
        })
        .collect();
    rows.sort_by_key(|(key, _)| key.order);
    let rows: Vec<ReportRow> = rows.into_iter().map(|(_, row)| row).collect();

    let report_path = spec.output_dir.join("report.csv");
    let timings_path = spec.output_dir.join("timings.csv");
    std::fs::write(&report_path, report::grid_report_csv(spec, &rows))
        .map_err(io_ctx(&report_path))?;
    std::fs::write(&timings_path, report::timings_csv(&rows)).map_err(io_ctx(&timings_path))?;
    Ok(GridOutcome {
        rows,
        report_path,
        timings_path,
    })
}

/// One row of the kernel-size sweep: targeted localized attacks at the
/// fixed budget, aggregated (mean) over the spec's images.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub size: usize,
    pub reconstructor: String,
    pub clean_psnr_target: f64,
    pub clean_ncc_target: f64,
    pub attacked_psnr_target: f64,
    pub attacked_ncc_target: f64,
    pub attacked_psnr_source: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub report_path: PathBuf,
}

/// The budget the sweep fixes the attack to.
pub const SWEEP_EPSILON_255: u32 = 4;

/// Localized targeted attacks at epsilon = 4/255 across blur kernel sizes.
pub fn kernel_size_sweep(spec: &ExperimentSpec, sizes: &[usize]) -> Result<SweepOutcome> {
    spec.validate()?;
    for (i, &size) in sizes.iter().enumerate() {
        if sizes[..i].contains(&size) {
            return Err(Error::DuplicateSweepPoint(size));
        }
    }
    let (patch, rect) =
        match &spec.target_policy {
            Some(TargetPolicy::LocalizedPatch { patch, rect }) => (load_raw(patch)?, *rect),
            _ => return Err(Error::InvalidConfig(
                "kernel size sweep requires a localized target policy (target_patch + target_rect)"
                    .into(),
            )),
        };
    let images = load_images(&spec.images)?;
    let kernels = load_kernels(&spec.kernels)?;
    let kernel_of = |size: usize| -> Result<&(String, Kernel)> {
        kernels
            .iter()
            .find(|(_, k)| k.size() == size)
            .ok_or(Error::MissingSweepKernel(size))
    };
    let cnn = match spec.reconstructors.contains(&ReconChoice::Cnn) {
        true => Some(CnnConfig::load(spec.cnn_weights.as_ref().ok_or_else(
            || Error::InvalidConfig("cnn reconstructor requires cnn_weights".into()),
        )?)?),
        false => None,
    };
    let ctx = GridContext {
        spec,
        dataset: Vec::new(),
        cnn,
        fixed_target: None,
        patch: Some((patch, rect)),
    };
    let eps = EpsilonSpec {
        value: f64::from(SWEEP_EPSILON_255) / 255.0,
        label: format!("{SWEEP_EPSILON_255}/255"),
    };

    let mut jobs = Vec::new();
    for (si, &size) in sizes.iter().enumerate() {
        let (kernel_id, kernel) = kernel_of(size)?;
        for (ri, recon) in spec.reconstructors.iter().enumerate() {
            jobs.push((si, size, kernel_id.clone(), kernel.clone(), ri, *recon));
        }
    }

    let mut rows: Vec<((usize, usize), SweepRow)> = jobs
        .into_par_iter()
        .map(
            |(si, size, kernel_id, kernel, ri, choice)| -> Result<((usize, usize), SweepRow)> {
                let recon = ctx.reconstructor(choice, &kernel)?;
                let mut sums = [0.0f64; 5];
                for (image_id, source) in &images {
                    let seed = derive_seed(spec.master_seed, &["blur", image_id, &kernel_id]);
                    let model = BlurModel::new(kernel.clone(), spec.noise_sigma, seed)?;
                    let blurry = make_blurry(source, &model)?;
                    let clean = recon.reconstruct(&blurry)?;
                    let target = ctx
                        .target_for(AttackMode::Targeted, &clean)?
                        .expect("patch policy present");
                    let cfg = AttackConfig {
                        num_steps: spec.targeted_steps,
                        step_size: spec.attack_step_size,
                        seed: derive_seed(
                            spec.master_seed,
                            &["sweep", image_id, &kernel_id, choice.name(), &eps.label],
                        ),
                        clamp_input: spec.clamp_input,
                        ..AttackConfig::targeted(eps.value)
                    };
                    let result = pgd_attack(&recon, &blurry, &cfg, Some(&target))?;
                    sums[0] += psnr(&clean, &target)?;
                    sums[1] += ncc(&clean, &target)?;
                    sums[2] += psnr(&result.adversarial_output, &target)?;
                    sums[3] += ncc(&result.adversarial_output, &target)?;
                    sums[4] += psnr(&result.adversarial_output, source)?;
                }
                let n = images.len() as f64;
                Ok((
                    (si, ri),
                    SweepRow {
                        size,
                        reconstructor: choice.name().to_string(),
                        clean_psnr_target: sums[0] / n,
                        clean_ncc_target: sums[1] / n,
                        attacked_psnr_target: sums[2] / n,
                        attacked_ncc_target: sums[3] / n,
                        attacked_psnr_source: sums[4] / n,
                    },
                ))
            },
        )
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|(order, _)| *order);
    let rows: Vec<SweepRow> = rows.into_iter().map(|(_, row)| row).collect();

    std::fs::create_dir_all(&spec.output_dir).map_err(io_ctx(&spec.output_dir))?;
    let report_path = spec.output_dir.join("sweep_report.csv");
    std::fs::write(&report_path, report::sweep_report_csv(spec, &rows))
        .map_err(io_ctx(&report_path))?;
    Ok(SweepOutcome { rows, report_path })
}

#[cfg(test)]
mod tests;
