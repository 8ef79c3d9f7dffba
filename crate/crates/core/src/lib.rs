//! Toy Vision Transformer toolkit for studying selective shuffled position
//! embedding, key-patch exchange with label composition, and a hybrid
//! label-smoothing loss on synthetic images with localised class signal.

pub mod augment;
pub mod data;
pub mod encoder;
mod error;
mod grade;
pub mod harness;
pub mod loss;
pub mod numerics;
mod raster;
pub mod rng;

pub use error::{Error, Result};
pub use grade::Grade;
pub use raster::Raster;
