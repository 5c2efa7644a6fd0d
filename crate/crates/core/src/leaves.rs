//! Dead-leaves test images and external corpus loading.
//!
//! Discs with power-law radii `p(r) ∝ r^-α` on `[r_min, r_max]` are dropped
//! front to back: each new disc lies beneath every earlier one and only paints
//! pixels that are still uncovered. Construction stops once every pixel is
//! covered, which yields an exact sample of the occlusion model. `α = 3` is the
//! scale-invariant case.
//!
//! Randomness comes from `ChaCha8Rng`. Image `i` of a corpus uses
//! `seed_from_u64(seed)` with stream `i`, so corpora are bit-identical across
//! platforms and thread counts.

use std::path::Path;

use image::imageops::FilterType;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{max_value, ImageGrid};

/// Parameters for one dead-leaves image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeavesConfig {
    pub size: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub exponent: f64,
    pub seed: u64,
    pub bit_depth: u8,
}

impl LeavesConfig {
    /// Scale-invariant defaults: `r_min = 2`, `r_max = size / 2`, exponent 3, 16-bit.
    pub fn new(size: usize, seed: u64) -> Self {
        Self { size, r_min: 2.0, r_max: size as f64 / 2.0, exponent: 3.0, seed, bit_depth: 16 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::Config("image size must be positive".into()));
        }
        if !(self.r_min > 0.0 && self.r_min < self.r_max) {
            return Err(Error::Config(format!("need 0 < r_min < r_max, got {} and {}", self.r_min, self.r_max)));
        }
        if self.r_max > self.size as f64 {
            return Err(Error::Config(format!("r_max {} exceeds image size {}", self.r_max, self.size)));
        }
        if !self.exponent.is_finite() {
            return Err(Error::Config("exponent must be finite".into()));
        }
        if self.bit_depth != 8 && self.bit_depth != 16 {
            return Err(Error::Config(format!("unsupported bit depth {}", self.bit_depth)));
        }
        Ok(())
    }
}

/// One disc of the construction, in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leaf {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub intensity: u16,
}

/// Inverse-CDF draw from the truncated power law on `[r_min, r_max]`.
pub fn sample_radius<R: Rng + ?Sized>(rng: &mut R, r_min: f64, r_max: f64, exponent: f64) -> f64 {
    let u: f64 = rng.random();
    let k = 1.0 - exponent;
    if k.abs() < 1e-12 {
        return r_min * (r_max / r_min).powf(u);
    }
    let (a, b) = (r_min.powf(k), r_max.powf(k));
    (a + u * (b - a)).powf(1.0 / k).clamp(r_min, r_max)
}

/// Independent generator for one stream of a seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn generate_dead_leaves(config: &LeavesConfig) -> Result<ImageGrid> {
    generate_dead_leaves_with_discs(config).map(|(img, _)| img)
}

/// Generates an image and returns every disc drawn, visible or not.
pub fn generate_dead_leaves_with_discs(config: &LeavesConfig) -> Result<(ImageGrid, Vec<Leaf>)> {
    config.validate()?;
    build(config, &mut stream_rng(config.seed, 0))
}

/// `count` images; image `i` uses stream `i` of `config.seed`.
pub fn generate_corpus(config: &LeavesConfig, count: usize) -> Result<Vec<ImageGrid>> {
    config.validate()?;
    (0..count as u64).into_par_iter().map(|i| build(config, &mut stream_rng(config.seed, i)).map(|(img, _)| img)).collect()
}

fn build(config: &LeavesConfig, rng: &mut ChaCha8Rng) -> Result<(ImageGrid, Vec<Leaf>)> {
    let n = config.size;
    let top = max_value(config.bit_depth) as u32;
    let mut pixels = vec![0u16; n * n];
    let mut covered = vec![false; n * n];
    let mut remaining = n * n;
    let mut leaves = Vec::new();
    while remaining > 0 {
        let radius = sample_radius(rng, config.r_min, config.r_max, config.exponent);
        let cx = rng.random::<f64>() * n as f64;
        let cy = rng.random::<f64>() * n as f64;
        let intensity = rng.random_range(0..=top) as u16;
        leaves.push(Leaf { cx, cy, radius, intensity });

        // pixel (r, c) has its centre at (c + 0.5, r + 0.5)
        let c0 = (cx - radius - 0.5).ceil().max(0.0) as usize;
        let c1 = ((cx + radius - 0.5).floor().max(-1.0) as i64).min(n as i64 - 1);
        let r0 = (cy - radius - 0.5).ceil().max(0.0) as usize;
        let r1 = ((cy + radius - 0.5).floor().max(-1.0) as i64).min(n as i64 - 1);
        if c1 < 0 || r1 < 0 {
            continue;
        }
        let r2 = radius * radius;
        for r in r0..=r1 as usize {
            let dy = r as f64 + 0.5 - cy;
            for c in c0..=c1 as usize {
                let dx = c as f64 + 0.5 - cx;
                let idx = r * n + c;
                if !covered[idx] && dx * dx + dy * dy <= r2 {
                    covered[idx] = true;
                    pixels[idx] = intensity;
                    remaining -= 1;
                }
            }
        }
    }
    Ok((ImageGrid::new(n, n, config.bit_depth, pixels)?, leaves))
}

/// Loads every readable image in `dir` (sorted by file name): grayscale, centre-crop
/// to a square, resample to `target_size`, then rescale to `bit_depth`.
///
/// Unreadable files are skipped with a warning.
pub fn load_image_corpus(dir: impl AsRef<Path>, target_size: usize, bit_depth: u8) -> Result<Vec<ImageGrid>> {
    let dir = dir.as_ref();
    if target_size == 0 {
        return Err(Error::Config("target size must be positive".into()));
    }
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|source| Error::File { path: dir.into(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut images = Vec::new();
    for path in &paths {
        match load_one(path, target_size, bit_depth) {
            Ok(img) => images.push(img),
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    if images.is_empty() {
        return Err(Error::Empty("image corpus directory"));
    }
    Ok(images)
}

fn load_one(path: &Path, target_size: usize, bit_depth: u8) -> Result<ImageGrid> {
    let gray = image::open(path)?.to_luma16();
    let (w, h) = gray.dimensions();
    let (x0, y0, side) = centre_crop(w, h);
    let cropped = image::imageops::crop_imm(&gray, x0, y0, side, side).to_image();
    let resized = if side as usize == target_size {
        cropped
    } else {
        image::imageops::resize(&cropped, target_size as u32, target_size as u32, FilterType::Triangle)
    };
    ImageGrid::new(target_size, target_size, 16, resized.into_raw())?.convert_depth(bit_depth)
}

/// Centre-crop geometry used by the loader: `(x_offset, y_offset, side)`.
pub fn centre_crop(width: u32, height: u32) -> (u32, u32, u32) {
    let side = width.min(height);
    ((width - side) / 2, (height - side) / 2, side)
}
