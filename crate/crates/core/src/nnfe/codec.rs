use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::NnError;
use crate::hdcore::{level_in, midpoint, ItemMemory, QuantizedSample, Quantizer};

/// HD parameters of the codec inserted between feature extractor and head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CodecSpec {
    pub dim: usize,
    pub levels: usize,
    pub seed: u64,
}

/// Encode→decode round trip applied to PACT outputs.
///
/// The quantizer range of every feature is `[0, alpha]`, read from the
/// current PACT bound on each call; seeds and level table never change.
/// Its backward pass is the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct CodecLayer {
    memory: ItemMemory,
}

impl CodecLayer {
    pub fn new(features: usize, spec: CodecSpec) -> Result<Self, NnError> {
        let quantizer = Quantizer::uniform(features, 0.0, 1.0, spec.levels)?;
        Ok(Self { memory: ItemMemory::generate(quantizer, spec.dim, spec.seed)? })
    }

    pub(crate) fn from_memory(memory: ItemMemory) -> Self {
        Self { memory }
    }

    pub fn spec(&self) -> CodecSpec {
        CodecSpec { dim: self.memory.dim(), levels: self.memory.levels(), seed: self.memory.rng_seed() }
    }

    pub fn features(&self) -> usize {
        self.memory.features()
    }

    /// The stored memory; its quantizer range is a placeholder, use
    /// [`memory_for_alpha`](Self::memory_for_alpha) for encoding.
    pub fn memory(&self) -> &ItemMemory {
        &self.memory
    }

    /// The item memory with every feature range set to `[0, alpha]`.
    pub fn memory_for_alpha(&self, alpha: f64) -> Result<ItemMemory, NnError> {
        let quantizer = Quantizer::uniform(self.features(), 0.0, alpha, self.memory.levels())?;
        Ok(self.memory.with_quantizer(quantizer)?)
    }

    /// Applies the codec to every row of `features`.
    pub fn forward(&self, features: ArrayView2<'_, f64>, alpha: f64) -> Result<Array2<f64>, NnError> {
        let q = self.memory.levels();
        let rows: Vec<Vec<f64>> = (0..features.nrows())
            .into_par_iter()
            .map(|i| {
                let row = features.index_axis(Axis(0), i);
                let levels: Vec<u32> = row.iter().map(|&v| level_in(v, 0.0, alpha, q)).collect();
                let encoded = self.memory.encode(&QuantizedSample::new(levels, q)?)?;
                let decoded = self.memory.decode(&encoded)?;
                Ok(decoded.levels().iter().map(|&l| midpoint(l, 0.0, alpha, q)).collect())
            })
            .collect::<Result<_, NnError>>()?;
        let cols = features.ncols();
        Ok(Array2::from_shape_vec((rows.len(), cols), rows.into_iter().flatten().collect())
            .expect("rows have the feature width"))
    }
}
