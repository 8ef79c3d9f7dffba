mod common;

use std::fs;

use common::{linear_probe_accuracy, welch_p_value};
use sspe_vit::data::{
    decode_pgm, encode_pgm, generate_synthetic, load_image, load_samples, synthetic_manifest, synthetic_samples,
    DatasetManifest, Sample, Split, SyntheticConfig,
};
use sspe_vit::Grade;

fn class_split_counts(manifest: &DatasetManifest, grade: Grade) -> [usize; 3] {
    let mut out = [0; 3];
    for e in manifest.entries.iter().filter(|e| e.grade == grade) {
        out[e.split as usize] += 1;
    }
    out
}

#[test]
fn default_corpus_split_counts() {
    let m = synthetic_manifest(&SyntheticConfig::default()).unwrap();
    assert_eq!(class_split_counts(&m, Grade::Kl0), [224, 32, 64]);
    assert_eq!(class_split_counts(&m, Grade::Kl2), [147, 21, 42]);
}

#[test]
fn corpus_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SyntheticConfig {
        class_counts: (50, 50),
        ..SyntheticConfig::default()
    };
    let manifest = generate_synthetic(&cfg, dir.path()).unwrap();
    assert_eq!(manifest.entries.len(), 100);
    for e in &manifest.entries {
        let path = dir.path().join(&e.path);
        let bytes = fs::read(&path).unwrap();
        let image = load_image(&path).unwrap();
        assert_eq!(encode_pgm(&image), bytes, "{}", e.path);
        assert_eq!(decode_pgm(&bytes).unwrap(), image);
    }
    let (loaded, samples) = load_samples(dir.path()).unwrap();
    assert_eq!(loaded, manifest);
    assert_eq!(samples, synthetic_samples(&cfg).unwrap());
}

#[test]
fn generation_is_byte_reproducible() {
    let cfg = SyntheticConfig {
        class_counts: (12, 10),
        ..SyntheticConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_synthetic(&cfg, a.path()).unwrap();
    generate_synthetic(&cfg, b.path()).unwrap();
    for name in ["manifest.csv", "generator.json", "images/00000.pgm", "images/00021.pgm"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
    }
    let other = SyntheticConfig { seed: 2, ..cfg.clone() };
    assert_ne!(synthetic_samples(&other).unwrap(), synthetic_samples(&cfg).unwrap());
}

/// Pixel sum over `cells`, or over every other cell when `masked`.
fn cell_sum(s: &Sample, cells: &[usize], masked: bool) -> f64 {
    let side = s.image.width();
    let patch = side / 3;
    let mut total = 0.0;
    for y in 0..side {
        for x in 0..side {
            let k = (y / patch) * 3 + x / patch + 1;
            if cells.contains(&k) != masked {
                total += s.image.get(x, y);
            }
        }
    }
    total
}

#[test]
fn masking_key_cells_removes_the_class_difference() {
    let samples = synthetic_samples(&SyntheticConfig::default()).unwrap();
    let keys = [4, 6];
    let sums = |grade, masked| -> Vec<f64> {
        samples
            .iter()
            .filter(|s| s.grade == grade)
            .map(|s| cell_sum(s, &keys, masked))
            .collect()
    };
    let p_masked = welch_p_value(&sums(Grade::Kl0, true), &sums(Grade::Kl2, true));
    assert!(p_masked > 0.01, "masked p = {p_masked}");
    // Key cells alone do carry the signal.
    let key_only = |grade| -> Vec<f64> {
        samples
            .iter()
            .filter(|s| s.grade == grade)
            .map(|s| cell_sum(s, &keys, false))
            .collect()
    };
    let p_keys = welch_p_value(&key_only(Grade::Kl0), &key_only(Grade::Kl2));
    assert!(p_keys < 0.01, "key-cell p = {p_keys}");
}

/// 4x4 average-pooled pixels of the listed cells.
fn pooled(s: &Sample, cells: &[usize]) -> Vec<f64> {
    let patch = s.image.width() / 3;
    let mut out = Vec::new();
    for &k in cells {
        let (r, c) = ((k - 1) / 3, (k - 1) % 3);
        for by in 0..patch / 4 {
            for bx in 0..patch / 4 {
                let mut v = 0.0;
                for y in 0..4 {
                    for x in 0..4 {
                        v += s.image.get(c * patch + bx * 4 + x, r * patch + by * 4 + y);
                    }
                }
                out.push(v / 16.0);
            }
        }
    }
    out
}

fn probe(seed: u64, cells: &[usize]) -> f64 {
    let cfg = SyntheticConfig {
        class_counts: (265, 265),
        seed,
        ..SyntheticConfig::default()
    };
    let samples = synthetic_samples(&cfg).unwrap();
    let rows = |split| -> Vec<(Vec<f64>, Grade)> {
        samples
            .iter()
            .filter(|s| s.split == split)
            .map(|s| (pooled(s, cells), s.grade))
            .collect()
    };
    linear_probe_accuracy(&rows(Split::Train), &rows(Split::Test))
}

#[test]
fn class_signal_lives_in_key_cells() {
    let non_key = [1, 2, 3, 5, 7, 8, 9];
    let mean = (1..=3).map(|seed| probe(seed, &non_key)).sum::<f64>() / 3.0;
    assert!(mean < 0.55, "non-key probe accuracy {mean}");
    let key = probe(1, &[4, 6]);
    assert!(key > 0.7, "key-cell probe accuracy {key}");
}
