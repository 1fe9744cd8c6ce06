//! Binary hypervector algebra, item memories, quantization, and the HD codec.
//!
//! Binding is XOR, bundling is a strict per-position majority, and distance
//! is normalized Hamming. An [`ItemMemory`] holds one random seed vector per
//! input feature plus a table of level vectors whose pairwise distances grow
//! linearly with the level gap; encoding binds each feature seed to the level
//! vector of its quantized value and bundles the results.

mod hypervector;
mod memory;
mod quantizer;

use thiserror::Error;

pub use hypervector::{bundle, Hypervector};
pub use memory::{generate_level_table, ItemMemory};
pub use quantizer::{QuantizedSample, Quantizer, CONSTANT_COLUMN_EPS};

pub(crate) use quantizer::{level_in, midpoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HdError {
    #[error("hypervector dimension must be at least 1")]
    InvalidDimension,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot bundle an empty list of hypervectors")]
    EmptyBundle,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("feature {feature}: level {level} outside 1..={q}")]
    LevelOutOfRange { feature: usize, level: u32, q: usize },
    #[error("invalid bit character {0:?}")]
    InvalidBitChar(char),
    #[error("packed words have bits set beyond the vector dimension")]
    DirtyTail,
}
