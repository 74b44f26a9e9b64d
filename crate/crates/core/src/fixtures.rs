//! Procedurally generated test images and blur kernels.
//!
//! Everything here is a pure function of fixed seeds, so the experiment
//! fixtures require no downloads and reproduce bit-identically in CI. The
//! kernel seeds were chosen so that the 64x64 transfer functions stay well
//! away from zero (no DFT nulls), which the exact Wiener-inversion checks
//! rely on.

use crate::blur::convolve_circular;
use crate::error::Result;
use crate::image::Image;
use crate::kernel::Kernel;
use crate::rng::CounterRng;

pub const FIXTURE_SIZE: usize = 64;

/// Checkerboard with a bright disk: strong edges at two scales.
pub fn checker_disk(size: usize) -> Image {
    let mut data = vec![0.0f32; size * size];
    let cell = (size / 8).max(1);
    let center = (size as f64 - 1.0) / 2.0;
    let radius = size as f64 * 0.22;
    for y in 0..size {
        for x in 0..size {
            let swatch = ((x / cell) + (y / cell)) % 2;
            let mut v = if swatch == 0 { 0.25 } else { 0.75 };
            let d = ((x as f64 - center).powi(2) + (y as f64 - center).powi(2)).sqrt();
            if d < radius - 0.5 {
                v = 0.92;
            } else if d < radius + 0.5 {
                // one-pixel soft edge
                let t = (radius + 0.5 - d).clamp(0.0, 1.0);
                v = v * (1.0 - t) + 0.92 * t;
            }
            data[y * size + x] = v as f32;
        }
    }
    Image::new(size, size, 1, data).expect("fixture construction")
}

/// Smoothed random field: low-frequency natural-image stand-in.
pub fn smooth_field(size: usize, seed: u64) -> Image {
    let rng = CounterRng::new(seed);
    let noise: Vec<f32> = (0..size * size)
        .map(|i| rng.unit_at(i as u64) as f32)
        .collect();
    let mut img = Image::new(size, size, 1, noise).expect("fixture construction");
    let box5 = Kernel::box_filter(5).expect("box kernel");
    for _ in 0..3 {
        img = convolve_circular(&img, &box5).expect("fixture smoothing");
    }
    // stretch to a fixed range
    let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
    for &v in img.data() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = (hi - lo).max(1e-6);
    let data = img
        .data()
        .iter()
        .map(|&v| 0.1 + 0.85 * (v - lo) / span)
        .collect();
    Image::new(size, size, 1, data).expect("fixture construction")
}

/// Text-like glyph grid: dense high-frequency strokes.
pub fn glyph_grid(size: usize, seed: u64) -> Image {
    let rng = CounterRng::new(seed);
    let mut data = vec![0.1f32; size * size];
    let cell = 8usize;
    for gy in 0..size / cell {
        for gx in 0..size / cell {
            let glyph = rng.u64_at((gy * (size / cell) + gx) as u64);
            // 5x7-ish glyph inside the cell with 1px margins
            for row in 0..6 {
                for col in 0..5 {
                    if (glyph >> (row * 5 + col)) & 1 == 1 {
                        let y = gy * cell + 1 + row;
                        let x = gx * cell + 1 + col;
                        if y < size && x < size {
                            data[y * size + x] = 0.95;
                        }
                    }
                }
            }
        }
    }
    Image::new(size, size, 1, data).expect("fixture construction")
}

/// Diagonal stripes with a filled disk: the fixed target for the
/// Table-1-shaped grid, distinct from all three source images.
pub fn target_pattern(size: usize) -> Image {
    let mut data = vec![0.0f32; size * size];
    let center = (size as f64 - 1.0) / 2.0;
    let radius = size as f64 * 0.16;
    for y in 0..size {
        for x in 0..size {
            let stripe = ((x + y) / 4) % 2;
            let mut v = if stripe == 0 { 0.2 } else { 0.8 };
            let d = ((x as f64 - center).powi(2) + (y as f64 - center).powi(2)).sqrt();
            if d < radius {
                v = 0.95;
            }
            data[y * size + x] = v as f32;
        }
    }
    Image::new(size, size, 1, data).expect("fixture construction")
}

/// Bright cross on a dark square: localized feature for patch targets.
pub fn cross_patch(size: usize) -> Image {
    let mut data = vec![0.05f32; size * size];
    let bar = (size / 4).max(1);
    let lo = (size - bar) / 2;
    for y in 0..size {
        for x in 0..size {
            if (lo..lo + bar).contains(&x) || (lo..lo + bar).contains(&y) {
                data[y * size + x] = 0.9;
            }
        }
    }
    Image::new(size, size, 1, data).expect("fixture construction")
}

/// Motion-blur kernel from a seeded random walk with momentum: the path is
/// deposited bilinearly, lightly smoothed, then normalized.
pub fn motion_kernel(size: usize, seed: u64) -> Kernel {
    let rng = CounterRng::new(seed);
    let mut weights = vec![0.0f64; size * size];
    let center = (size as f64 - 1.0) / 2.0;
    let (mut px, mut py) = (center, center);
    let mut angle = rng.unit_at(0) * std::f64::consts::TAU;
    let steps = size * 3;
    let reach = center - 0.5;
    for t in 0..steps {
        angle += (rng.unit_at(t as u64 + 1) - 0.5) * 1.2;
        px = (px + 0.55 * angle.cos()).clamp(center - reach, center + reach);
        py = (py + 0.55 * angle.sin()).clamp(center - reach, center + reach);
        let (x0, y0) = (px.floor() as usize, py.floor() as usize);
        let (fx, fy) = (px - px.floor(), py - py.floor());
        for (dx, dy, w) in [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            let (x, y) = (x0 + dx, y0 + dy);
            if x < size && y < size {
                weights[y * size + x] += w;
            }
        }
    }
    // light 3x3 smoothing, then a small center tap so the transfer
    // function keeps a floor everywhere
    let mut smoothed = vec![0.0f64; size * size];
    for y in 0..size {
        for x in 0..size {
            let mut acc = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (sx, sy) = (x as i64 + dx, y as i64 + dy);
                    if sx >= 0 && sx < size as i64 && sy >= 0 && sy < size as i64 {
                        acc += weights[sy as usize * size + sx as usize];
                    }
                }
            }
            smoothed[y * size + x] = acc / 9.0;
        }
    }
    let total: f64 = smoothed.iter().sum();
    let c = size / 2;
    smoothed[c * size + c] += total * 0.25;
    Kernel::new(size, smoothed).expect("fixture kernel")
}

/// Seeds picked by scanning for the largest minimum transfer magnitude on
/// the 64x64 grid.
pub const KERNEL_SEEDS: [(usize, u64); 3] = [(11, 46), (17, 37), (25, 37)];

pub fn fixture_kernels() -> Vec<(String, Kernel)> {
    KERNEL_SEEDS
        .iter()
        .map(|&(size, seed)| (format!("walk{size}"), motion_kernel(size, seed)))
        .collect()
}

pub fn fixture_images() -> Vec<(String, Image)> {
    vec![
        ("checker".to_string(), checker_disk(FIXTURE_SIZE)),
        ("smooth".to_string(), smooth_field(FIXTURE_SIZE, 101)),
        ("glyphs".to_string(), glyph_grid(FIXTURE_SIZE, 202)),
    ]
}

pub fn fixture_target() -> Image {
    target_pattern(FIXTURE_SIZE)
}

/// Blurry/sharp patch pairs for CNN training: crops of procedural textures
/// convolved with the fixture kernels in rotation, no added noise.
pub fn training_pairs(count: usize, patch: usize, seed: u64) -> Result<Vec<(Image, Image)>> {
    let kernels: Vec<Kernel> = fixture_kernels().into_iter().map(|(_, k)| k).collect();
    let base_size = 96usize;
    let textures = [
        checker_disk(base_size),
        smooth_field(base_size, seed ^ 0x51),
        glyph_grid(base_size, seed ^ 0x52),
        smooth_field(base_size, seed ^ 0x53),
    ];
    let rng = CounterRng::new(seed);
    let mut pairs = Vec::with_capacity(count);
    for i in 0..count {
        let texture = &textures[i % textures.len()];
        let max_off = base_size - patch;
        let ox = (rng.u64_at(2 * i as u64) % max_off as u64) as usize;
        let oy = (rng.u64_at(2 * i as u64 + 1) % max_off as u64) as usize;
        let mut crop = vec![0.0f32; patch * patch];
        for y in 0..patch {
            for x in 0..patch {
                crop[y * patch + x] = texture.get(ox + x, oy + y, 0);
            }
        }
        let sharp = Image::new(patch, patch, 1, crop)?;
        let blurry = convolve_circular(&sharp, &kernels[i % kernels.len()])?;
        pairs.push((blurry, sharp));
    }
    Ok(pairs)
}

/// Materialized fixture tree, ready for the grid and sweep commands.
#[derive(Debug, Clone)]
pub struct FixtureTree {
    pub root: std::path::PathBuf,
    pub grid_spec: std::path::PathBuf,
    pub sweep_spec: std::path::PathBuf,
    pub train_dir: std::path::PathBuf,
}

/// Write images, kernels, training pairs, and ready-to-run spec files under
/// `root`. The specs reference `cnn.dbnn` next to them; train the CNN with
/// the training directory to produce it.
pub fn write_fixture_tree(
    root: &std::path::Path,
    train_count: usize,
    master_seed: u64,
) -> Result<FixtureTree> {
    use crate::io::{save_pgm8, save_raw};
    let images_dir = root.join("images");
    let kernels_dir = root.join("kernels");
    let train_dir = root.join("train");
    for dir in [&images_dir, &kernels_dir, &train_dir] {
        std::fs::create_dir_all(dir).map_err(|source| crate::error::Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }

    let mut image_names = Vec::new();
    for (name, image) in fixture_images() {
        save_raw(&image, &images_dir.join(format!("{name}.dbim")))?;
        save_pgm8(&image, &images_dir.join(format!("{name}.pgm")))?;
        image_names.push(name);
    }
    let target = fixture_target();
    save_raw(&target, &images_dir.join("target.dbim"))?;
    save_pgm8(&target, &images_dir.join("target.pgm"))?;
    let patch = cross_patch(16);
    save_raw(&patch, &images_dir.join("patch.dbim"))?;
    save_pgm8(&patch, &images_dir.join("patch.pgm"))?;

    let mut kernel_names = Vec::new();
    for (name, kernel) in fixture_kernels() {
        kernel.save(&kernels_dir.join(format!("{name}.kern")))?;
        kernel_names.push(name);
    }

    for (i, (blurry, sharp)) in training_pairs(train_count, 32, master_seed ^ 0xC0FFEE)?
        .iter()
        .enumerate()
    {
        save_raw(blurry, &train_dir.join(format!("{i:04}.blurry.dbim")))?;
        save_raw(sharp, &train_dir.join(format!("{i:04}.sharp.dbim")))?;
    }

    let image_list = image_names
        .iter()
        .map(|n| format!("images/{n}.dbim"))
        .collect::<Vec<_>>()
        .join(", ");
    let kernel_list = kernel_names
        .iter()
        .map(|n| format!("kernels/{n}.kern"))
        .collect::<Vec<_>>()
        .join(", ");

    let grid_spec = root.join("fixture.spec");
    let grid_text = format!(
        "# fixture attack grid\n\
         images = {image_list}\n\
         kernels = {kernel_list}\n\
         reconstructors = wiener, unrolled, cnn\n\
         cnn_weights = cnn.dbnn\n\
         epsilons = 4/255, 8/255, 12/255\n\
         modes = untargeted, targeted\n\
         target = images/target.dbim\n\
         noise_sigma = 0.01\n\
         master_seed = {master_seed}\n\
         output_dir = out\n"
    );
    std::fs::write(&grid_spec, grid_text).map_err(|source| crate::error::Error::Io {
        path: grid_spec.display().to_string(),
        source,
    })?;

    let sweep_spec = root.join("sweep.spec");
    let sweep_text = format!(
        "# kernel-size sweep: localized targeted attacks on the non-blind operators\n\
         images = {image_list}\n\
         kernels = {kernel_list}\n\
         reconstructors = wiener, unrolled\n\
         target_patch = images/patch.dbim\n\
         target_rect = 24,24,16,16\n\
         noise_sigma = 0.01\n\
         master_seed = {master_seed}\n\
         output_dir = sweep_out\n"
    );
    std::fs::write(&sweep_spec, sweep_text).map_err(|source| crate::error::Error::Io {
        path: sweep_spec.display().to_string(),
        source,
    })?;

    Ok(FixtureTree {
        root: root.to_path_buf(),
        grid_spec,
        sweep_spec,
        train_dir,
    })
}

/// Load `NNNN.blurry.dbim` / `NNNN.sharp.dbim` pairs from a training
/// directory, sorted by name for deterministic order.
pub fn load_training_dir(dir: &std::path::Path) -> Result<Vec<(Image, Image)>> {
    use crate::io::load_raw;
    let read_err = |source: std::io::Error| crate::error::Error::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut stems: Vec<String> = std::fs::read_dir(dir)
        .map_err(read_err)?
        .filter_map(|entry| {
            let name = entry.ok()?.file_name().to_string_lossy().into_owned();
            name.strip_suffix(".blurry.dbim").map(str::to_string)
        })
        .collect();
    stems.sort();
    let mut pairs = Vec::with_capacity(stems.len());
    for stem in stems {
        let blurry = load_raw(&dir.join(format!("{stem}.blurry.dbim")))?;
        let sharp = load_raw(&dir.join(format!("{stem}.sharp.dbim")))?;
        pairs.push((blurry, sharp));
    }
    if pairs.is_empty() {
        return Err(crate::error::Error::EmptyDataset);
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::kernel_spectrum;

    #[test]
    fn fixtures_are_deterministic() {
        assert_eq!(checker_disk(64), checker_disk(64));
        assert_eq!(smooth_field(64, 1), smooth_field(64, 1));
        assert_ne!(smooth_field(64, 1), smooth_field(64, 2));
        assert_eq!(glyph_grid(64, 9), glyph_grid(64, 9));
        assert_eq!(
            motion_kernel(11, 3).weights(),
            motion_kernel(11, 3).weights()
        );
    }

    #[test]
    fn fixture_images_are_in_range_and_distinct() {
        let images = fixture_images();
        assert_eq!(images.len(), 3);
        for (name, img) in &images {
            assert_eq!(img.width(), 64, "{name}");
            assert!(img.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert_ne!(images[0].1, images[1].1);
        assert_ne!(images[1].1, images[2].1);
    }

    #[test]
    fn fixture_kernels_have_no_transfer_nulls() {
        for (name, kernel) in fixture_kernels() {
            let spec = kernel_spectrum(&kernel, 64, 64);
            let min_mag = spec
                .coefficients
                .iter()
                .map(|c| c.norm())
                .fold(f64::INFINITY, f64::min);
            assert!(min_mag > 0.05, "{name}: min transfer magnitude {min_mag}");
            let sum: f64 = kernel.weights().iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn fixture_tree_writes_specs_and_training_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let tree = write_fixture_tree(dir.path(), 6, 3).unwrap();
        let spec = crate::harness::load_spec(&tree.grid_spec).unwrap();
        assert_eq!(spec.images.len(), 3);
        assert_eq!(spec.kernels.len(), 3);
        assert_eq!(spec.master_seed, 3);
        let sweep = crate::harness::load_spec(&tree.sweep_spec).unwrap();
        assert_eq!(sweep.reconstructors.len(), 2);
        let pairs = load_training_dir(&tree.train_dir).unwrap();
        assert_eq!(pairs.len(), 6);
        // stable order
        let again = load_training_dir(&tree.train_dir).unwrap();
        assert_eq!(pairs[0], again[0]);
    }

    #[test]
    fn training_pairs_have_consistent_shapes() {
        let pairs = training_pairs(12, 32, 7).unwrap();
        assert_eq!(pairs.len(), 12);
        for (blurry, sharp) in &pairs {
            assert!(blurry.same_shape(sharp));
            assert_eq!(blurry.width(), 32);
        }
        // blurring actually changed the patches
        assert_ne!(pairs[0].0, pairs[0].1);
        // deterministic
        assert_eq!(training_pairs(12, 32, 7).unwrap()[3], pairs[3]);
    }
}
