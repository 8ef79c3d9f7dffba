use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::augment::{AugmentConfig, KeySet};
use crate::data::SyntheticConfig;
use crate::encoder::ModelConfig;
use crate::error::{Error, Result};
use crate::loss::HybridLossConfig;

/// How position rows are assigned to tokens during training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SspeMode {
    /// Identity plan (classical position embedding).
    Off,
    /// Key tokens keep their rows, the rest are shuffled.
    #[default]
    Keys,
    /// Every token's row is shuffled.
    All,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Every knob of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    /// Generator settings; also used to build the corpus in memory when
    /// `dataset_dir` is unset.
    pub data: SyntheticConfig,
    pub dataset_dir: Option<PathBuf>,
    pub key_set: KeySet,
    pub sspe: SspeMode,
    /// Probability of dropping a non-key token's position row.
    pub pe_dropout: f64,
    /// Match number: candidates exchanged against each target.
    pub exchange_n: usize,
    /// Emit the all-target combination once per target rather than once per candidate.
    pub dedupe_identity: bool,
    /// Draw fresh candidates every epoch (otherwise once per run).
    pub resample_candidates: bool,
    pub loss: HybridLossConfig,
    pub augment: AugmentConfig,
    /// Cells zeroed in every image before training and evaluation.
    pub mask_cells: Vec<usize>,
    pub oversample: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    /// Seeds used by multi-seed ablation suites.
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelConfig::default(),
            data: SyntheticConfig::default(),
            dataset_dir: None,
            key_set: KeySet::default(),
            sspe: SspeMode::Keys,
            pe_dropout: 0.0,
            exchange_n: 2,
            dedupe_identity: false,
            resample_candidates: true,
            loss: HybridLossConfig::default(),
            augment: AugmentConfig::default(),
            mask_cells: Vec::new(),
            oversample: true,
            epochs: 30,
            batch_size: 32,
            optimizer: OptimizerConfig::default(),
            seed: 1,
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

impl ExperimentConfig {
    /// Plain ViT: identity plans, no exchange, CE only.
    pub fn baseline() -> Self {
        ExperimentConfig {
            sspe: SspeMode::Off,
            exchange_n: 0,
            loss: HybridLossConfig {
                alpha: 0.0,
                beta: 1.0,
                ..HybridLossConfig::default()
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        let positions = self.model.positions();
        self.key_set.check_range(positions)?;
        if self.dataset_dir.is_none() {
            self.data.validate()?;
            if self.data.image_side != self.model.image_side || self.data.patch_pixels != self.model.patch_pixels {
                return Err(Error::Config("data and model geometry differ".into()));
            }
        }
        if !(0.0..1.0).contains(&self.pe_dropout) {
            return Err(Error::Config(format!("pe_dropout {} outside [0, 1)", self.pe_dropout)));
        }
        if let Some(&bad) = self.mask_cells.iter().find(|&&k| k == 0 || k > positions) {
            return Err(Error::Config(format!("mask cell {bad} outside 1..={positions}")));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Applies a `dotted.path=value` override. The value is parsed as JSON
    /// when possible and taken as a string otherwise.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut root = serde_json::to_value(&*self)?;
        let mut node = &mut root;
        for part in path.split('.') {
            node = node
                .as_object_mut()
                .and_then(|o| o.get_mut(part))
                .ok_or_else(|| Error::Config(format!("unknown config key {path:?}")))?;
        }
        *node = value;
        *self = serde_json::from_value(root).map_err(|e| Error::Config(format!("{path}: {e}")))?;
        Ok(())
    }
}
