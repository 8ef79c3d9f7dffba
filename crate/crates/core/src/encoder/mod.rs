//! Toy Vision Transformer: patch tokens, position tables, pre-norm
//! attention/MLP blocks and a class-token head.

mod checkpoint;
mod forward;
mod params;
mod position;
mod tokens;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use forward::{
    batch_gradients, batch_loss, encode, encode_slots, multi_head_attention, relative_bias, AttentionOutput,
    WeightedSequence,
};
pub use params::{position_table_for, BlockParams, EncoderParams, ModelConfig, CLASSES};
pub use position::{grid_2d_pe, relative_pe, sinusoidal_entry, sinusoidal_pe, PeKind, PositionTable};
pub use tokens::{embed_patches, TokenGrid};
