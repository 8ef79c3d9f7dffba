//! Position plans, key-patch exchange, conventional jitter and oversampling.

mod conventional;
mod exchange;
mod oversample;
mod plan;

pub use conventional::{adjust_brightness, adjust_contrast, conventional_augment, rotate_nearest, AugmentConfig};
pub use exchange::{
    assign_label, exchange_key_patches, original_sequence, KeySource, LabeledGrid, LabeledSequence, Provenance,
    SetTag,
};
pub use oversample::bootstrap_oversample;
pub use plan::{make_sspe_plan, pe_dropout_plan, shuffle_all_plan, DroppedPlan, KeySet, PositionPlan};
