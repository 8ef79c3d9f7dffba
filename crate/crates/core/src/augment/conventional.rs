use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::raster::Raster;

/// Ranges for the photometric/geometric jitter applied before patching.
/// A factor range `[lo, hi]` is sampled uniformly; rotation is sampled from
/// `[-rotation_degrees, rotation_degrees]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub rotation_degrees: f64,
    pub brightness: (f64, f64),
    pub contrast: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotation_degrees: 5.0,
            brightness: (0.9, 1.1),
            contrast: (0.9, 1.1),
        }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        AugmentConfig {
            rotation_degrees: 0.0,
            brightness: (1.0, 1.0),
            contrast: (1.0, 1.0),
        }
    }
}

fn sample<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Nearest-neighbour rotation about the image centre, counter-clockwise as
/// displayed (y pointing down). Pixels sourced from outside are zero.
pub fn rotate_nearest(image: &Raster, degrees: f64) -> Raster {
    if degrees == 0.0 {
        return image.clone();
    }
    let (w, h) = (image.width(), image.height());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let mut out = Raster::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            // inverse map: undo a visual counter-clockwise turn
            let sx = (cos * dx - sin * dy + cx).round();
            let sy = (sin * dx + cos * dy + cy).round();
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h {
                out.set(x, y, image.get(sx as usize, sy as usize));
            }
        }
    }
    out
}

pub fn adjust_brightness(image: &mut Raster, factor: f64) {
    if factor != 1.0 {
        image.pixels_mut().iter_mut().for_each(|p| *p *= factor);
    }
}

/// Scales deviations from the image mean by `factor`.
pub fn adjust_contrast(image: &mut Raster, factor: f64) {
    if factor != 1.0 {
        let mean = image.pixels().iter().sum::<f64>() / image.pixels().len() as f64;
        image
            .pixels_mut()
            .iter_mut()
            .for_each(|p| *p = (*p - mean) * factor + mean);
    }
}

/// Random rotation, brightness and contrast; the result is clamped to `[0, 1]`.
pub fn conventional_augment<R: Rng + ?Sized>(image: &Raster, rng: &mut R, config: &AugmentConfig) -> Raster {
    let angle = sample(rng, (-config.rotation_degrees, config.rotation_degrees));
    let brightness = sample(rng, config.brightness);
    let contrast = sample(rng, config.contrast);
    let mut out = rotate_nearest(image, angle);
    adjust_brightness(&mut out, brightness);
    adjust_contrast(&mut out, contrast);
    out.clamp_unit();
    out
}
