//! Synthetic corpus generation, P5 image I/O, the CSV manifest and
//! stratified splitting.

mod manifest;
mod pgm;
mod split;
mod synthetic;

use std::path::Path;

pub use manifest::{DatasetManifest, ManifestEntry, GENERATOR_SIDECAR, MANIFEST_FILE};
pub use pgm::{decode_pgm, encode_pgm, load_image, quantize, save_image};
pub use split::{split_dataset, Split, SplitRatio, MIN_CLASS_SIZE};
pub use synthetic::{synthesize_image, SyntheticConfig};

use crate::error::{Error, Result};
use crate::grade::Grade;
use crate::raster::Raster;
use crate::rng::{rng_for, stream};

/// A decoded image with its labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub grade: Grade,
    pub split: Split,
    pub image: Raster,
}

/// Stratified 7:1:2 split of the configured corpus.
pub fn synthetic_manifest(config: &SyntheticConfig) -> Result<DatasetManifest> {
    config.validate()?;
    let ids: Vec<(u64, Grade)> = (0..config.total() as u64).map(|id| (id, config.grade_of(id))).collect();
    let mut rng = rng_for(config.seed, &[stream::SPLIT]);
    let split = split_dataset(&ids, SplitRatio::default(), &mut rng)?;
    let entries = split
        .into_iter()
        .map(|(id, grade, split)| ManifestEntry {
            path: format!("images/{id:05}.pgm"),
            grade,
            split,
            id,
        })
        .collect();
    Ok(DatasetManifest {
        entries,
        generator: Some(config.clone()),
    })
}

/// Generates the corpus in memory, without touching the filesystem.
pub fn synthetic_samples(config: &SyntheticConfig) -> Result<Vec<Sample>> {
    let manifest = synthetic_manifest(config)?;
    Ok(manifest
        .entries
        .iter()
        .map(|e| Sample {
            id: e.id,
            grade: e.grade,
            split: e.split,
            image: synthesize_image(config, e.id),
        })
        .collect())
}

/// Writes images, `manifest.csv` and the generator sidecar under `out_dir`.
pub fn generate_synthetic(config: &SyntheticConfig, out_dir: &Path) -> Result<DatasetManifest> {
    let manifest = synthetic_manifest(config)?;
    let images = out_dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    for e in &manifest.entries {
        save_image(&synthesize_image(config, e.id), &DatasetManifest::resolve(out_dir, e))?;
    }
    manifest.save(out_dir)?;
    Ok(manifest)
}

/// Reads every image listed in the manifest stored in `dir`.
pub fn load_samples(dir: &Path) -> Result<(DatasetManifest, Vec<Sample>)> {
    let manifest = DatasetManifest::load(dir)?;
    let samples = manifest
        .entries
        .iter()
        .map(|e| {
            Ok(Sample {
                id: e.id,
                grade: e.grade,
                split: e.split,
                image: load_image(&DatasetManifest::resolve(dir, e))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, samples))
}
