//! Synthetic images whose class signal lives only in designated key cells.
//!
//! Every image is a smooth random background plus pixel noise. A random
//! number of non-key cells (uniform in `0..=distractor_count`) receive the
//! motif as a distractor, identically for both classes. KL-2 images
//! additionally carry the motif in every key cell. The motif is a pair of
//! bright vertical ellipses hugging the left and right edges of its cell.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::pgm::quantize;
use crate::augment::KeySet;
use crate::error::{Error, Result};
use crate::grade::Grade;
use crate::raster::Raster;
use crate::rng::{rng_for, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub image_side: usize,
    pub patch_pixels: usize,
    pub key_cells: KeySet,
    pub amplitude: f64,
    pub noise_sigma: f64,
    /// Upper bound on distractor motifs per image.
    pub distractor_count: usize,
    /// `(KL-0 count, KL-2 count)`.
    pub class_counts: (usize, usize),
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            image_side: 48,
            patch_pixels: 16,
            key_cells: KeySet::default(),
            amplitude: 0.08,
            noise_sigma: 0.12,
            distractor_count: 4,
            class_counts: (320, 210),
            seed: 1,
        }
    }
}

impl SyntheticConfig {
    pub fn grid_side(&self) -> usize {
        self.image_side / self.patch_pixels
    }

    pub fn positions(&self) -> usize {
        self.grid_side() * self.grid_side()
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_pixels == 0 || self.image_side == 0 || !self.image_side.is_multiple_of(self.patch_pixels) {
            return Err(Error::Config(format!(
                "image side {} is not a multiple of patch size {}",
                self.image_side, self.patch_pixels
            )));
        }
        self.key_cells.check_range(self.positions())?;
        if !(self.amplitude >= 0.0) || !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("amplitude and noise must be non-negative".into()));
        }
        let free = self.positions() - self.key_cells.len();
        if self.distractor_count > free {
            return Err(Error::Config(format!(
                "{} distractors do not fit in {free} non-key cells",
                self.distractor_count
            )));
        }
        Ok(())
    }

    /// Grade of sample `id`: the first `n0` ids are KL-0, the rest KL-2.
    pub fn grade_of(&self, id: u64) -> Grade {
        if (id as usize) < self.class_counts.0 {
            Grade::Kl0
        } else {
            Grade::Kl2
        }
    }

    pub fn total(&self) -> usize {
        self.class_counts.0 + self.class_counts.1
    }
}

fn add_motif(img: &mut Raster, cell: usize, row: usize, col: usize, amplitude: f64) {
    let (x0, y0) = ((col * cell) as f64, (row * cell) as f64);
    let c = cell as f64;
    // ellipse centres near the left and right edges, mid-height
    let centres = [(x0 + 0.2 * c, y0 + 0.5 * c), (x0 + 0.8 * c, y0 + 0.5 * c)];
    let (sx, sy) = (0.09 * c, 0.22 * c);
    for y in row * cell..(row + 1) * cell {
        for x in col * cell..(col + 1) * cell {
            let mut v = 0.0;
            for (cx, cy) in centres {
                let dx = (x as f64 - cx) / sx;
                let dy = (y as f64 - cy) / sy;
                v += (-0.5 * (dx * dx + dy * dy)).exp();
            }
            let p = img.get(x, y) + amplitude * v;
            img.set(x, y, p);
        }
    }
}

/// Generates image `id` of the configured corpus, quantised to 8 bits.
pub fn synthesize_image(config: &SyntheticConfig, id: u64) -> Raster {
    let mut rng = rng_for(config.seed, &[stream::GENERATE, id]);
    let side = config.image_side;
    let cell = config.patch_pixels;
    let grid = config.grid_side();

    // smooth background: base level plus a few low-frequency waves
    let base = rng.gen_range(0.25..0.4);
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(0.02..0.06),
                rng.gen_range(0.3..1.5),
                rng.gen_range(0.3..1.5),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let mut img = Raster::filled(side, side, 0.0);
    for y in 0..side {
        for x in 0..side {
            let (u, v) = (x as f64 / side as f64, y as f64 / side as f64);
            let bg: f64 = waves
                .iter()
                .map(|(a, fx, fy, ph)| a * (std::f64::consts::TAU * (fx * u + fy * v) + ph).cos())
                .sum();
            img.set(x, y, base + bg);
        }
    }

    let free: Vec<usize> = (1..=grid * grid).filter(|k| !config.key_cells.contains(*k)).collect();
    let n_distractors = rng.gen_range(0..=config.distractor_count);
    let chosen: Vec<usize> = free.choose_multiple(&mut rng, n_distractors).copied().collect();
    let amplitude = config.amplitude;
    for k in chosen {
        add_motif(&mut img, cell, (k - 1) / grid, (k - 1) % grid, amplitude);
    }
    if config.grade_of(id) == Grade::Kl2 {
        for &k in config.key_cells.indices() {
            add_motif(&mut img, cell, (k - 1) / grid, (k - 1) % grid, amplitude);
        }
    }

    if config.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, config.noise_sigma).expect("valid sd");
        for p in img.pixels_mut() {
            *p += noise.sample(&mut rng);
        }
    }
    for p in img.pixels_mut() {
        *p = quantize(*p) as f64 / 255.0;
    }
    img
}
