use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::split::Split;
use super::synthetic::SyntheticConfig;
use crate::error::{Error, Result};
use crate::grade::Grade;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const GENERATOR_SIDECAR: &str = "generator.json";

/// One row of `manifest.csv`: `path,grade,split,id`. Paths are relative to
/// the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub grade: Grade,
    pub split: Split,
    pub id: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub generator: Option<SyntheticConfig>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        for e in &self.entries {
            writer.serialize(e)?;
        }
        writer.flush().map_err(|e| Error::io(MANIFEST_FILE, e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<ManifestEntry>> {
        let mut reader = csv::Reader::from_reader(r);
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["path", "grade", "split", "id"] {
            return Err(Error::Config(format!("unexpected manifest header {headers:?}")));
        }
        let entries: Vec<ManifestEntry> = reader.deserialize().collect::<std::result::Result<_, _>>()?;
        let mut ids: Vec<u64> = entries.iter().map(|e| e.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate sample ids in manifest".into()));
        }
        Ok(entries)
    }

    /// Writes `manifest.csv` and, when known, the generator sidecar into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        self.write_csv(file)?;
        if let Some(g) = &self.generator {
            let side = dir.join(GENERATOR_SIDECAR);
            let text = serde_json::to_string_pretty(g)?;
            std::fs::write(&side, text + "\n").map_err(|e| Error::io(&side, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let entries = Self::read_csv(file)?;
        let side = dir.join(GENERATOR_SIDECAR);
        let generator = if side.exists() {
            let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
            Some(serde_json::from_str(&text)?)
        } else {
            None
        };
        Ok(DatasetManifest { entries, generator })
    }

    pub fn resolve(dir: &Path, entry: &ManifestEntry) -> PathBuf {
        dir.join(&entry.path)
    }
}
