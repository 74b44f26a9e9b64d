//! Command-line interface for the deblurring attack testbed.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad flags, malformed
//! specs, inconsistent inputs), 2 on runtime failures.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use deblur_core::attack::{pgd_attack, AttackConfig, DeltaInit};
use deblur_core::fixtures;
use deblur_core::harness::{self, load_spec};
use deblur_core::io::{load_raw, save_raw, save_view8};
use deblur_core::recon::{cnn_train, CnnConfig, TrainOptions, UnrolledConfig, WienerConfig};
use deblur_core::{make_blurry, ncc, psnr, BlurModel, Error, Image, Kernel, Reconstructor};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "deblur",
    version,
    about = "Adversarial attacks on differentiable image deblurring operators"
)]
struct Cli {
    /// Override the master seed of the loaded spec (grid, sweep-kernel).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path; meaning depends on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for grid and sweep runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convolve an image with a blur kernel and add seeded Gaussian noise.
    Blur(BlurArgs),
    /// Train the CNN reconstructor on blurry/sharp pairs.
    TrainCnn(TrainArgs),
    /// Run a single attack cell with every knob exposed.
    Attack(AttackArgs),
    /// Run the full experiment grid described by a spec file.
    Grid(GridArgs),
    /// Localized targeted attacks across blur kernel sizes.
    SweepKernel(SweepArgs),
    /// Print PSNR and NCC between two RAW images.
    Metrics(MetricsArgs),
    /// Write the procedural fixture tree (images, kernels, training set,
    /// ready-to-run spec files).
    GenFixtures(GenFixturesArgs),
}

#[derive(Args)]
struct BlurArgs {
    /// Sharp input image (RAW .dbim).
    #[arg(long)]
    input: PathBuf,
    /// Blur kernel (text format).
    #[arg(long)]
    kernel: PathBuf,
    /// Gaussian noise standard deviation.
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of NNNN.blurry.dbim / NNNN.sharp.dbim pairs.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 2e-3)]
    lr: f64,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Hidden channels per conv layer.
    #[arg(long, default_value_t = 32)]
    channels: usize,
    /// Number of conv layers.
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// Training seed (weight init and shuffling).
    #[arg(long, default_value_t = 0)]
    train_seed: u64,
    /// Add Gaussian noise of this sigma to blurry inputs during training
    /// (0 trains on clean blurry data).
    #[arg(long, default_value_t = 0.0)]
    train_noise: f64,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ReconArg {
    Wiener,
    Unrolled,
    Cnn,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Targeted,
    Untargeted,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum InitArg {
    Zeros,
    Random,
}

#[derive(Args)]
struct AttackArgs {
    /// Blurry observation to attack (RAW .dbim).
    #[arg(long)]
    input: PathBuf,
    /// Reconstruction operator under attack.
    #[arg(long, value_enum)]
    recon: ReconArg,
    /// Blur kernel (required for wiener and unrolled).
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// Trained weights (required for cnn).
    #[arg(long)]
    cnn_weights: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Target image (required for targeted mode).
    #[arg(long)]
    target: Option<PathBuf>,
    /// L-infinity budget, e.g. 4/255 or 0.0157.
    #[arg(long, default_value = "4/255")]
    eps: String,
    /// PGD iterations (default: 250 untargeted, 500 targeted).
    #[arg(long)]
    steps: Option<usize>,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    step_size: f64,
    /// Perturbation init (default: random for untargeted, zeros for targeted).
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    /// Attack seed.
    #[arg(long, default_value_t = 0)]
    attack_seed: u64,
    /// Clamp y + delta into [0, 1] after each projection.
    #[arg(long)]
    clamp_input: bool,
    /// Wiener regularization weight.
    #[arg(long, default_value_t = WienerConfig::default().lambda)]
    wiener_lambda: f64,
    /// Unrolled iteration count.
    #[arg(long, default_value_t = UnrolledConfig::craft_default().steps)]
    unrolled_steps: usize,
    /// Sharp source image for PSNR/NCC reporting (optional).
    #[arg(long)]
    source: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// Experiment spec file.
    spec: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment spec file with a localized target policy.
    spec: PathBuf,
    /// Kernel sizes to sweep, comma separated.
    #[arg(long, default_value = "25,17,11")]
    sizes: String,
}

#[derive(Args)]
struct MetricsArgs {
    a: PathBuf,
    b: PathBuf,
}

#[derive(Args)]
struct GenFixturesArgs {
    /// Number of CNN training pairs to write.
    #[arg(long, default_value_t = 200)]
    train_count: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: could not size the worker pool: {err}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_validation() { 1 } else { 2 })
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Blur(args) => cmd_blur(args, cli.out),
        Command::TrainCnn(args) => cmd_train(args, cli.out),
        Command::Attack(args) => cmd_attack(args, cli.out),
        Command::Grid(args) => cmd_grid(args, cli.seed, cli.out),
        Command::SweepKernel(args) => cmd_sweep(args, cli.seed, cli.out),
        Command::Metrics(args) => cmd_metrics(args),
        Command::GenFixtures(args) => cmd_gen_fixtures(args, cli.out),
    }
}

fn cmd_blur(args: BlurArgs, out: Option<PathBuf>) -> Result<(), Error> {
    let out = out.ok_or_else(|| invalid("blur requires --out <file.dbim>"))?;
    let image = load_raw(&args.input)?;
    let kernel = Kernel::load(&args.kernel)?;
    let model = BlurModel::new(kernel, args.sigma, args.noise_seed)?;
    let blurry = make_blurry(&image, &model)?;
    save_raw(&blurry, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_train(args: TrainArgs, out: Option<PathBuf>) -> Result<(), Error> {
    let out = out.ok_or_else(|| invalid("train-cnn requires --out <weights.dbnn>"))?;
    let pairs = fixtures::load_training_dir(&args.data)?;
    let channels = pairs[0].0.channels();
    let start = CnnConfig::random_init(channels, args.channels, args.depth, args.train_seed);
    let opts = TrainOptions {
        epochs: args.epochs,
        learning_rate: args.lr,
        batch_size: args.batch,
        seed: args.train_seed,
        noise_sigma: args.train_noise,
    };
    let outcome = cnn_train(&start, &pairs, &opts)?;
    outcome.config.save(&out)?;
    let first = outcome.epoch_loss.first().unwrap_or(&0.0);
    let last = outcome.epoch_loss.last().unwrap_or(&0.0);
    println!(
        "trained {} pairs for {} epochs: loss {first:.6e} -> {last:.6e}",
        pairs.len(),
        args.epochs
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn build_reconstructor(args: &AttackArgs) -> Result<Reconstructor, Error> {
    match args.recon {
        ReconArg::Wiener => {
            let kernel = args
                .kernel
                .as_ref()
                .ok_or_else(|| invalid("--recon wiener requires --kernel"))?;
            Ok(Reconstructor::wiener(
                WienerConfig::new(args.wiener_lambda)?,
                Kernel::load(kernel)?,
            ))
        }
        ReconArg::Unrolled => {
            let kernel = args
                .kernel
                .as_ref()
                .ok_or_else(|| invalid("--recon unrolled requires --kernel"))?;
            let cfg = UnrolledConfig {
                steps: args.unrolled_steps,
                ..UnrolledConfig::craft_default()
            };
            Ok(Reconstructor::unrolled(cfg, Kernel::load(kernel)?))
        }
        ReconArg::Cnn => {
            let weights = args
                .cnn_weights
                .as_ref()
                .ok_or_else(|| invalid("--recon cnn requires --cnn-weights"))?;
            Ok(Reconstructor::cnn(CnnConfig::load(weights)?))
        }
    }
}

fn cmd_attack(args: AttackArgs, out: Option<PathBuf>) -> Result<(), Error> {
    let out = out.ok_or_else(|| invalid("attack requires --out <directory>"))?;
    if args.mode == ModeArg::Targeted && args.target.is_none() {
        return Err(invalid("--mode targeted requires --target"));
    }
    let y = load_raw(&args.input)?;
    let recon = build_reconstructor(&args)?;
    let eps = harness::parse_epsilon(&args.eps)?;
    let mut cfg = match args.mode {
        ModeArg::Targeted => AttackConfig::targeted(eps.value),
        ModeArg::Untargeted => AttackConfig::untargeted(eps.value),
    };
    if let Some(steps) = args.steps {
        cfg.num_steps = steps;
    }
    cfg.step_size = args.step_size;
    cfg.seed = args.attack_seed;
    cfg.clamp_input = args.clamp_input;
    if let Some(init) = args.init {
        cfg.init = match init {
            InitArg::Zeros => DeltaInit::Zeros,
            InitArg::Random => DeltaInit::UniformRandom,
        };
    }
    let target = args.target.as_ref().map(|p| load_raw(p)).transpose()?;
    let result = pgd_attack(&recon, &y, &cfg, target.as_ref())?;

    std::fs::create_dir_all(&out).map_err(|source| Error::Io {
        path: out.display().to_string(),
        source,
    })?;
    save_raw(&result.delta, &out.join("delta.dbim"))?;
    save_raw(&result.adversarial_input, &out.join("adv_input.dbim"))?;
    save_raw(&result.adversarial_output, &out.join("adv_output.dbim"))?;
    let view = {
        let data = result.delta.data().iter().map(|&v| 0.5 + 8.0 * v).collect();
        Image::new(
            result.delta.width(),
            result.delta.height(),
            result.delta.channels(),
            data,
        )?
    };
    let view_name = if view.channels() == 1 {
        "delta_view.pgm"
    } else {
        "delta_view.ppm"
    };
    save_view8(&view, &out.join(view_name))?;
    let trace_path = out.join("trace.csv");
    std::fs::write(&trace_path, deblur_core::attack::trace_csv(&result)).map_err(|source| {
        Error::Io {
            path: trace_path.display().to_string(),
            source,
        }
    })?;

    println!(
        "best step {} of {}: objective {:.6e}",
        result.best_step, cfg.num_steps, result.objective_trace[result.best_step]
    );
    if let Some(source_path) = &args.source {
        let source = load_raw(source_path)?;
        println!(
            "attacked vs source: psnr={:.3} ncc={:.6}",
            psnr(&result.adversarial_output, &source)?,
            ncc(&result.adversarial_output, &source)?
        );
    }
    if let Some(t) = &target {
        println!(
            "attacked vs target: psnr={:.3} ncc={:.6}",
            psnr(&result.adversarial_output, t)?,
            ncc(&result.adversarial_output, t)?
        );
    }
    println!("wrote artifacts to {}", out.display());
    Ok(())
}

fn cmd_grid(args: GridArgs, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Error> {
    let mut spec = load_spec(&args.spec)?;
    if let Some(seed) = seed {
        spec.master_seed = seed;
    }
    if let Some(out) = out {
        spec.output_dir = out;
    }
    let outcome = harness::run_grid(&spec)?;
    let failed = outcome
        .rows
        .iter()
        .filter(|r| r.status.starts_with("error"))
        .count();
    println!(
        "{} cells ({} failed); report at {}",
        outcome.rows.len(),
        failed,
        outcome.report_path.display()
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Error> {
    let mut spec = load_spec(&args.spec)?;
    if let Some(seed) = seed {
        spec.master_seed = seed;
    }
    if let Some(out) = out {
        spec.output_dir = out;
    }
    let sizes: Vec<usize> = args
        .sizes
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| invalid(format!("bad sweep size '{t}'")))
        })
        .collect::<Result<_, Error>>()?;
    let outcome = harness::kernel_size_sweep(&spec, &sizes)?;
    for row in &outcome.rows {
        println!(
            "size {:>3} {:>9}: psnr-to-target {:.3} (clean {:.3})",
            row.size, row.reconstructor, row.attacked_psnr_target, row.clean_psnr_target
        );
    }
    println!("report at {}", outcome.report_path.display());
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> Result<(), Error> {
    let a = load_raw(&args.a)?;
    let b = load_raw(&args.b)?;
    println!("psnr={:.3} ncc={:.6}", psnr(&a, &b)?, ncc(&a, &b)?);
    Ok(())
}

fn cmd_gen_fixtures(args: GenFixturesArgs, out: Option<PathBuf>) -> Result<(), Error> {
    let root = out.unwrap_or_else(|| PathBuf::from("fixtures"));
    let tree = fixtures::write_fixture_tree(&root, args.train_count, 7)?;
    println!("fixture tree at {}", tree.root.display());
    println!("  grid spec:  {}", tree.grid_spec.display());
    println!("  sweep spec: {}", tree.sweep_spec.display());
    println!(
        "  training:   {} ({} pairs)",
        tree.train_dir.display(),
        args.train_count
    );
    println!(
        "train the CNN first: deblur train-cnn --data {} --out {}",
        tree.train_dir.display(),
        tree.root.join("cnn.dbnn").display()
    );
    Ok(())
}
