use super::report::{grid_report_csv, summarize_means};
use super::*;
use crate::io::save_raw;
use crate::recon::CnnConfig;
use crate::rng::CounterRng;
use tempfile::TempDir;

fn random_image(w: usize, h: usize, seed: u64) -> Image {
    let rng = CounterRng::new(seed);
    let data: Vec<f32> = (0..w * h).map(|i| rng.unit_at(i as u64) as f32).collect();
    Image::new(w, h, 1, data).unwrap()
}

/// Tiny on-disk experiment tree: 16x16 images, 3x3 kernels, short attacks.
struct TestTree {
    _dir: TempDir,
    spec: ExperimentSpec,
}

fn test_tree(images: usize, kernels: usize, recons: Vec<ReconChoice>) -> TestTree {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    let mut spec = ExperimentSpec {
        master_seed: 7,
        noise_sigma: 0.0,
        untargeted_steps: 6,
        targeted_steps: 6,
        unrolled_craft_steps: 3,
        unrolled_eval_steps: 6,
        output_dir: root.join("out"),
        reconstructors: recons,
        ..ExperimentSpec::default()
    };
    for i in 0..images {
        let path = root.join(format!("img{i}.dbim"));
        save_raw(&random_image(16, 16, 100 + i as u64), &path).unwrap();
        spec.images.push(path);
    }
    for k in 0..kernels {
        let path = root.join(format!("ker{k}.kern"));
        let rng = CounterRng::new(200 + k as u64);
        let kernel = Kernel::new(3, (0..9).map(|i| rng.unit_at(i as u64)).collect()).unwrap();
        kernel.save(&path).unwrap();
        spec.kernels.push(path);
    }
    let target_path = root.join("target.dbim");
    save_raw(&random_image(16, 16, 999), &target_path).unwrap();
    spec.target_policy = Some(TargetPolicy::FixedImage(target_path));
    if spec.reconstructors.contains(&ReconChoice::Cnn) {
        let weights = root.join("cnn.dbnn");
        CnnConfig::random_init(1, 2, 2, 5).save(&weights).unwrap();
        spec.cnn_weights = Some(weights);
    }
    TestTree { _dir: dir, spec }
}

#[test]
fn dataset_is_cartesian_and_deterministic() {
    let tree = test_tree(2, 3, vec![ReconChoice::Wiener]);
    let mut spec = tree.spec.clone();
    spec.noise_sigma = 0.02;
    let a = build_dataset(&spec).unwrap();
    assert_eq!(a.len(), 6);
    let b = build_dataset(&spec).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.blurry, y.blurry);
        assert_eq!(x.image_id, y.image_id);
    }
    // distinct cells get distinct noise
    assert_ne!(a[0].blurry, a[1].blurry);
}

#[test]
fn dataset_identity_kernel_no_noise_is_source() {
    let dir = TempDir::new().unwrap();
    let img_path = dir.path().join("x.dbim");
    let source = random_image(8, 8, 4);
    save_raw(&source, &img_path).unwrap();
    let ker_path = dir.path().join("delta.kern");
    Kernel::delta().save(&ker_path).unwrap();
    let spec = ExperimentSpec {
        images: vec![img_path],
        kernels: vec![ker_path],
        reconstructors: vec![ReconChoice::Wiener],
        noise_sigma: 0.0,
        modes: vec![AttackMode::Untargeted],
        ..ExperimentSpec::default()
    };
    let cells = build_dataset(&spec).unwrap();
    let err = cells[0]
        .blurry
        .data()
        .iter()
        .zip(source.data())
        .map(|(&a, &b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(err < 1e-6);
}

#[test]
fn localized_target_composition() {
    let clean = Image::constant(64, 64, 1, 0.25);
    let patch = Image::constant(8, 8, 1, 0.9);

    let whole = compose_localized_target(
        &Image::constant(8, 8, 1, 0.25),
        &patch,
        &Rect {
            x: 0,
            y: 0,
            w: 8,
            h: 8,
        },
    )
    .unwrap();
    assert_eq!(whole, patch);

    let zero_rect = Rect {
        x: 5,
        y: 5,
        w: 0,
        h: 0,
    };
    assert_eq!(
        compose_localized_target(&clean, &patch, &zero_rect).unwrap(),
        clean
    );

    let rect = Rect {
        x: 24,
        y: 24,
        w: 8,
        h: 8,
    };
    let composed = compose_localized_target(&clean, &patch, &rect).unwrap();
    let differing = composed
        .data()
        .iter()
        .zip(clean.data())
        .filter(|(a, b)| a != b)
        .count();
    assert_eq!(differing, 64);

    assert!(matches!(
        compose_localized_target(
            &clean,
            &patch,
            &Rect {
                x: 60,
                y: 60,
                w: 8,
                h: 8
            }
        ),
        Err(Error::RectOutOfBounds { .. })
    ));
    assert!(compose_localized_target(
        &clean,
        &patch,
        &Rect {
            x: 0,
            y: 0,
            w: 4,
            h: 8
        }
    )
    .is_err());
}

#[test]
fn grid_row_count_matches_cartesian_product() {
    let mut tree = test_tree(2, 2, vec![ReconChoice::Wiener, ReconChoice::Unrolled]);
    tree.spec.epsilons = vec![parse_epsilon("4/255").unwrap()];
    let outcome = run_grid(&tree.spec).unwrap();
    assert_eq!(outcome.rows.len(), 2 * 2 * 2 * 2);
    assert!(outcome.rows.iter().all(|r| r.status == "ok"));
}

#[test]
fn grid_epsilon_zero_leaves_metrics_clean() {
    let mut tree = test_tree(1, 1, vec![ReconChoice::Wiener, ReconChoice::Unrolled]);
    tree.spec.epsilons = vec![parse_epsilon("0").unwrap()];
    let outcome = run_grid(&tree.spec).unwrap();
    for row in &outcome.rows {
        assert_eq!(row.status, "ok");
        assert_eq!(row.clean_psnr_source, row.attacked_psnr_source, "{row:?}");
        assert_eq!(row.clean_ncc_source, row.attacked_ncc_source);
        if row.mode == "targeted" {
            assert_eq!(row.clean_psnr_target, row.attacked_psnr_target);
        }
        assert_eq!(row.delta_inf_max, Some(0.0));
    }
}

#[test]
fn grid_artifacts_exist_and_roundtrip() {
    let mut tree = test_tree(1, 1, vec![ReconChoice::Wiener]);
    tree.spec.epsilons = vec![parse_epsilon("8/255").unwrap()];
    tree.spec.modes = vec![AttackMode::Targeted];
    let outcome = run_grid(&tree.spec).unwrap();
    for row in &outcome.rows {
        let dir = tree.spec.output_dir.join(&row.artifact_dir);
        for name in [
            "clean.dbim",
            "adv_input.dbim",
            "delta.dbim",
            "adv_output.dbim",
            "target.dbim",
        ] {
            let img = crate::io::load_raw(&dir.join(name)).unwrap();
            assert_eq!(img.width(), 16, "{name}");
        }
        assert!(dir.join("delta_view.pgm").exists());
        assert!(dir.join("trace.csv").exists());
    }
    // shared observation saved once per (image, kernel)
    let first = &outcome.rows[0];
    let pair_dir = tree.spec.output_dir.join(&first.image).join(&first.kernel);
    assert!(pair_dir.join("blurry.dbim").exists());
    assert!(pair_dir.join("source.dbim").exists());
}

#[test]
fn grid_report_is_deterministic_across_runs_and_workers() {
    let mut tree = test_tree(2, 1, vec![ReconChoice::Wiener, ReconChoice::Cnn]);
    tree.spec.epsilons = vec![parse_epsilon("4/255").unwrap()];
    tree.spec.noise_sigma = 0.01;

    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let first = single.install(|| run_grid(&tree.spec)).unwrap();
    let bytes_single = std::fs::read(&first.report_path).unwrap();

    let wide = rayon::ThreadPoolBuilder::new()
        .num_threads(8)
        .build()
        .unwrap();
    let second = wide.install(|| run_grid(&tree.spec)).unwrap();
    let bytes_wide = std::fs::read(&second.report_path).unwrap();

    assert_eq!(bytes_single, bytes_wide);
    assert!(!bytes_single.is_empty());
}

#[test]
fn targeted_rows_never_move_away_from_target() {
    let mut tree = test_tree(2, 1, vec![ReconChoice::Wiener, ReconChoice::Unrolled]);
    tree.spec.modes = vec![AttackMode::Targeted];
    tree.spec.epsilons = vec![parse_epsilon("8/255").unwrap()];
    tree.spec.targeted_steps = 12;
    let outcome = run_grid(&tree.spec).unwrap();
    for row in &outcome.rows {
        assert_eq!(row.status, "ok");
        let clean = row.clean_psnr_target.unwrap();
        let attacked = row.attacked_psnr_target.unwrap();
        assert!(
            attacked >= clean,
            "{}/{}: attacked {attacked} < clean {clean}",
            row.image,
            row.reconstructor
        );
    }
}

#[test]
fn constraint_column_respects_epsilon() {
    let mut tree = test_tree(1, 1, vec![ReconChoice::Wiener]);
    tree.spec.epsilons = vec![
        parse_epsilon("4/255").unwrap(),
        parse_epsilon("12/255").unwrap(),
    ];
    let outcome = run_grid(&tree.spec).unwrap();
    for row in &outcome.rows {
        let sup = row.delta_inf_max.unwrap();
        assert!(sup <= row.epsilon_value + 1e-9, "{row:?}");
    }
}

#[test]
fn report_header_carries_protocol_defaults_verbatim() {
    let tree = test_tree(1, 1, vec![ReconChoice::Wiener]);
    let csv = grid_report_csv(&tree.spec, &[]);
    assert!(csv.contains("step_size=1e-3"), "{csv}");
    assert!(csv.contains("untargeted_steps=250"));
    assert!(csv.contains("targeted_steps=500"));
    assert!(csv.contains("epsilon_grid=4/255,8/255,12/255"));
}

#[test]
fn summary_block_averages_over_cells() {
    let mut tree = test_tree(2, 2, vec![ReconChoice::Wiener]);
    tree.spec.epsilons = vec![parse_epsilon("4/255").unwrap()];
    tree.spec.modes = vec![AttackMode::Untargeted];
    let outcome = run_grid(&tree.spec).unwrap();
    let means = summarize_means(&outcome.rows);
    assert_eq!(means.len(), 1);
    let expected = outcome
        .rows
        .iter()
        .map(|r| r.attacked_psnr_source.unwrap())
        .sum::<f64>()
        / outcome.rows.len() as f64;
    assert!((means[0].attacked_psnr_source.unwrap() - expected).abs() < 1e-12);
    let csv = grid_report_csv(&tree.spec, &outcome.rows);
    assert!(csv.lines().any(|l| l.starts_with("mean,all,wiener,")));
}

#[test]
fn failed_cells_are_recorded_and_run_continues() {
    // a constant source image makes its NCC degenerate: those cells fail,
    // the healthy cells still succeed, and the report carries both
    let dir = TempDir::new().unwrap();
    let flat_path = dir.path().join("flat.dbim");
    save_raw(&Image::constant(16, 16, 1, 0.5), &flat_path).unwrap();
    let good_path = dir.path().join("good.dbim");
    save_raw(&random_image(16, 16, 3), &good_path).unwrap();
    let ker_path = dir.path().join("k.kern");
    Kernel::box_filter(3).unwrap().save(&ker_path).unwrap();
    let spec = ExperimentSpec {
        images: vec![flat_path, good_path],
        kernels: vec![ker_path],
        reconstructors: vec![ReconChoice::Wiener],
        modes: vec![AttackMode::Untargeted],
        epsilons: vec![parse_epsilon("4/255").unwrap()],
        untargeted_steps: 4,
        noise_sigma: 0.0,
        output_dir: dir.path().join("out"),
        ..ExperimentSpec::default()
    };
    let outcome = run_grid(&spec).unwrap();
    assert_eq!(outcome.rows.len(), 2);
    assert!(
        outcome.rows[0].status.starts_with("error:"),
        "{:?}",
        outcome.rows[0].status
    );
    assert_eq!(outcome.rows[1].status, "ok");
    assert!(outcome.report_path.exists());
}

#[test]
fn sweep_validates_sizes_and_policy() {
    let mut tree = test_tree(1, 1, vec![ReconChoice::Wiener]);
    let patch_path = tree.spec.images[0].parent().unwrap().join("patch.dbim");
    save_raw(&Image::constant(4, 4, 1, 0.9), &patch_path).unwrap();

    // duplicate size
    tree.spec.target_policy = Some(TargetPolicy::LocalizedPatch {
        patch: patch_path.clone(),
        rect: Rect {
            x: 4,
            y: 4,
            w: 4,
            h: 4,
        },
    });
    assert!(matches!(
        kernel_size_sweep(&tree.spec, &[3, 3]),
        Err(Error::DuplicateSweepPoint(3))
    ));
    // size not among the spec kernels
    assert!(matches!(
        kernel_size_sweep(&tree.spec, &[3, 5]),
        Err(Error::MissingSweepKernel(5))
    ));
    // fixed-image policy is not localized
    let mut fixed = tree.spec.clone();
    fixed.target_policy = Some(TargetPolicy::FixedImage(tree.spec.images[0].clone()));
    assert!(kernel_size_sweep(&fixed, &[3]).is_err());
}

#[test]
fn sweep_produces_one_row_per_size_and_recon() {
    let mut tree = test_tree(2, 1, vec![ReconChoice::Wiener, ReconChoice::Unrolled]);
    let root = tree.spec.images[0].parent().unwrap().to_path_buf();
    // add a delta kernel as a size-1 control point
    let delta_path = root.join("delta.kern");
    Kernel::delta().save(&delta_path).unwrap();
    tree.spec.kernels.push(delta_path);
    let patch_path = root.join("patch.dbim");
    save_raw(&Image::constant(4, 4, 1, 0.9), &patch_path).unwrap();
    tree.spec.target_policy = Some(TargetPolicy::LocalizedPatch {
        patch: patch_path,
        rect: Rect {
            x: 6,
            y: 6,
            w: 4,
            h: 4,
        },
    });
    tree.spec.targeted_steps = 8;
    let outcome = kernel_size_sweep(&tree.spec, &[3, 1]).unwrap();
    assert_eq!(outcome.rows.len(), 4);
    assert_eq!(outcome.rows[0].size, 3);
    assert_eq!(outcome.rows[3].size, 1);
    assert!(outcome.report_path.exists());
    // attacks never move away from the target
    for row in &outcome.rows {
        assert!(
            row.attacked_psnr_target >= row.clean_psnr_target - 1e-9,
            "{row:?}"
        );
    }
}

#[test]
fn spec_requires_target_policy_for_targeted_mode() {
    let mut tree = test_tree(1, 1, vec![ReconChoice::Wiener]);
    tree.spec.target_policy = None;
    assert!(tree.spec.validate().is_err());
    tree.spec.modes = vec![AttackMode::Untargeted];
    assert!(tree.spec.validate().is_ok());
}

#[test]
fn spec_requires_weights_for_cnn() {
    let mut tree = test_tree(1, 1, vec![ReconChoice::Cnn]);
    tree.spec.cnn_weights = None;
    assert!(tree.spec.validate().is_err());
}
