use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::position::{grid_2d_pe, relative_pe, sinusoidal_pe, PeKind, PositionTable};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Architecture of the toy encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub image_side: usize,
    pub patch_pixels: usize,
    pub d: usize,
    pub heads: usize,
    pub depth: usize,
    pub mlp_hidden: usize,
    pub pe_kind: PeKind,
    /// Train the absolute table (initialised from the sinusoid) instead of keeping it fixed.
    pub pe_learnable: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            image_side: 48,
            patch_pixels: 16,
            d: 32,
            heads: 4,
            depth: 2,
            mlp_hidden: 64,
            pe_kind: PeKind::Sinusoidal1d,
            pe_learnable: false,
        }
    }
}

impl ModelConfig {
    pub fn grid_side(&self) -> usize {
        self.image_side / self.patch_pixels
    }

    pub fn positions(&self) -> usize {
        self.grid_side() * self.grid_side()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.patch_pixels == 0 || self.image_side == 0 || !self.image_side.is_multiple_of(self.patch_pixels) {
            return fail(format!(
                "image side {} is not a multiple of patch size {}",
                self.image_side, self.patch_pixels
            ));
        }
        if self.d == 0 || !self.d.is_multiple_of(2) {
            return fail(format!("embedding width {} must be even", self.d));
        }
        if self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return fail(format!("embedding width {} is not divisible by {} heads", self.d, self.heads));
        }
        if self.depth == 0 {
            return fail("depth must be at least 1".into());
        }
        if self.mlp_hidden == 0 {
            return fail("mlp_hidden must be positive".into());
        }
        if self.pe_kind == PeKind::Grid2d && !self.d.is_multiple_of(4) {
            return fail(format!("2-D embedding needs d divisible by 4, got {}", self.d));
        }
        Ok(())
    }
}

/// Weights of one pre-norm transformer block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    pub ln1_gain: Matrix,
    pub ln1_bias: Matrix,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub bo: Matrix,
    pub ln2_gain: Matrix,
    pub ln2_bias: Matrix,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl BlockParams {
    const COUNT: usize = 13;

    fn matrices(&self) -> [&Matrix; Self::COUNT] {
        [
            &self.ln1_gain,
            &self.ln1_bias,
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
            &self.bo,
            &self.ln2_gain,
            &self.ln2_bias,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
        ]
    }

    fn matrices_mut(&mut self) -> [&mut Matrix; Self::COUNT] {
        [
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

/// All learnable weights of the encoder, plus its position table.
///
/// Declaration order (used by checkpoints and optimisers): patch projection,
/// patch bias, class token, each block in order, final norm gain and bias,
/// head, head bias, and finally the position table when it is trainable.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub config: ModelConfig,
    pub patch_projection: Matrix,
    pub patch_bias: Matrix,
    pub class_token: Matrix,
    pub blocks: Vec<BlockParams>,
    pub final_gain: Matrix,
    pub final_bias: Matrix,
    pub head: Matrix,
    pub head_bias: Matrix,
    pub position: PositionTable,
}

/// Number of output classes (KL-0, KL-2).
pub const CLASSES: usize = 2;

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit);
    Matrix::from_fn(rows, cols, |_, _| dist.sample(rng))
}

/// Builds the position table selected by `config`.
pub fn position_table_for<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<PositionTable> {
    let side = config.grid_side();
    match config.pe_kind {
        PeKind::None => Ok(PositionTable::none(side, side)),
        PeKind::Sinusoidal1d => {
            let t = sinusoidal_pe(config.positions() + 1, config.d)?;
            Ok(PositionTable::from_parts(PeKind::Sinusoidal1d, t.table().clone(), side, side))
        }
        PeKind::Grid2d => grid_2d_pe(side, side, config.d),
        PeKind::Relative => relative_pe(side, side, config.heads, rng),
    }
}

impl EncoderParams {
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        let area = config.patch_pixels * config.patch_pixels;
        let small = Normal::new(0.0, 0.02).expect("valid sd");
        let patch_projection = glorot(area, d, rng);
        let class_token = Matrix::from_fn(1, d, |_, _| small.sample(rng));
        let blocks = (0..config.depth)
            .map(|_| BlockParams {
                ln1_gain: Matrix::filled(1, d, 1.0),
                ln1_bias: Matrix::zeros(1, d),
                wq: glorot(d, d, rng),
                wk: glorot(d, d, rng),
                wv: glorot(d, d, rng),
                wo: glorot(d, d, rng),
                bo: Matrix::zeros(1, d),
                ln2_gain: Matrix::filled(1, d, 1.0),
                ln2_bias: Matrix::zeros(1, d),
                w1: glorot(d, config.mlp_hidden, rng),
                b1: Matrix::zeros(1, config.mlp_hidden),
                w2: glorot(config.mlp_hidden, d, rng),
                b2: Matrix::zeros(1, d),
            })
            .collect();
        let head = glorot(d, CLASSES, rng);
        let position = position_table_for(&config, rng)?;
        Ok(EncoderParams {
            patch_projection,
            patch_bias: Matrix::zeros(1, d),
            class_token,
            blocks,
            final_gain: Matrix::filled(1, d, 1.0),
            final_bias: Matrix::zeros(1, d),
            head,
            head_bias: Matrix::zeros(1, CLASSES),
            position,
            config,
        })
    }

    /// Whether the position table is part of the trainable set.
    pub fn position_trainable(&self) -> bool {
        match self.config.pe_kind {
            PeKind::Relative => true,
            PeKind::Sinusoidal1d | PeKind::Grid2d => self.config.pe_learnable,
            PeKind::None => false,
        }
    }

    /// Trainable matrices in declaration order.
    pub fn matrices(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.patch_projection, &self.patch_bias, &self.class_token];
        for b in &self.blocks {
            out.extend(b.matrices());
        }
        out.extend([&self.final_gain, &self.final_bias, &self.head, &self.head_bias]);
        if self.position_trainable() {
            out.push(self.position.table());
        }
        out
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let trainable = self.position_trainable();
        let mut out = vec![&mut self.patch_projection, &mut self.patch_bias, &mut self.class_token];
        for b in &mut self.blocks {
            out.extend(b.matrices_mut());
        }
        out.extend([
            &mut self.final_gain,
            &mut self.final_bias,
            &mut self.head,
            &mut self.head_bias,
        ]);
        if trainable {
            out.push(self.position.table_mut());
        }
        out
    }

    /// Zeroed matrices shaped like [`Self::matrices`].
    pub fn zeros_like(&self) -> Vec<Matrix> {
        self.matrices()
            .into_iter()
            .map(|m| Matrix::zeros(m.rows(), m.cols()))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.matrices().iter().map(|m| m.len()).sum()
    }

    /// Copy of these parameters with the trainable matrices replaced by `values`.
    pub fn with_matrices(&self, values: &[Matrix]) -> Result<Self> {
        let mut out = self.clone();
        {
            let slots = out.matrices_mut();
            if slots.len() != values.len() {
                return Err(Error::shape("matrix count differs from parameter layout"));
            }
            for (slot, v) in slots.into_iter().zip(values) {
                if slot.shape() != v.shape() {
                    return Err(Error::shape("matrix shape differs from parameter layout"));
                }
                slot.clone_from(v);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn default_config_is_valid() {
        ModelConfig::default().validate().unwrap();
        assert_eq!(ModelConfig::default().positions(), 9);
    }

    #[test]
    fn invalid_configs() {
        let bad_heads = ModelConfig { heads: 5, ..Default::default() };
        assert!(bad_heads.validate().is_err());
        let odd = ModelConfig { d: 31, heads: 1, ..Default::default() };
        assert!(odd.validate().is_err());
        let zero_depth = ModelConfig { depth: 0, ..Default::default() };
        assert!(zero_depth.validate().is_err());
        let grid = ModelConfig { d: 6, heads: 2, pe_kind: PeKind::Grid2d, ..Default::default() };
        assert!(grid.validate().is_err());
    }

    #[test]
    fn trainable_layout() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p = EncoderParams::init(ModelConfig::default(), &mut rng).unwrap();
        assert_eq!(p.matrices().len(), 3 + 2 * 13 + 4);
        let rel = EncoderParams::init(
            ModelConfig { pe_kind: PeKind::Relative, ..Default::default() },
            &mut rng,
        )
        .unwrap();
        assert_eq!(rel.matrices().len(), 3 + 2 * 13 + 4 + 1);
    }
}
