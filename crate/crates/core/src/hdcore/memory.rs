//! Item memory: feature seeds, level hypervectors, and the HD codec.

use ndarray::ArrayView2;
use rand::RngCore;
use rayon::prelude::*;

use super::hypervector::{words_for, Hypervector, MajorityCounter};
use super::quantizer::{QuantizedSample, Quantizer};
use super::HdError;
use crate::rng::{self, stream_rng};

/// Builds `q` level hypervectors: the first is random and each later one
/// flips `floor(dim / q)` bits of its predecessor that no earlier level has
/// flipped, so levels `i` and `j` differ in exactly `|i − j|·p` bits.
pub fn generate_level_table<R: RngCore + ?Sized>(
    dim: usize,
    q: usize,
    rng: &mut R,
) -> Result<Vec<Hypervector>, HdError> {
    if q < 2 {
        return Err(HdError::InvalidParameter(format!("need at least 2 levels, got {q}")));
    }
    if q > dim {
        return Err(HdError::InvalidParameter(format!(
            "{q} levels do not fit in {dim} dimensions (no bits left to flip)"
        )));
    }
    let p = dim / q;
    let first = Hypervector::random(dim, rng)?;
    let mut order: Vec<usize> = (0..dim).collect();
    rng::shuffle(&mut order, rng);

    let mut table = Vec::with_capacity(q);
    table.push(first);
    for step in 1..q {
        let mut next = table[step - 1].clone();
        for &k in &order[(step - 1) * p..step * p] {
            next.flip(k);
        }
        table.push(next);
    }
    Ok(table)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItemMemory {
    dim: usize,
    rng_seed: u64,
    quantizer: Quantizer,
    feature_seeds: Vec<Hypervector>,
    level_table: Vec<Hypervector>,
}

impl ItemMemory {
    /// Draws `S` and `Q` from `rng_seed`; feature count and `q` come from
    /// the quantizer. Same inputs always give the same memory.
    pub fn generate(quantizer: Quantizer, dim: usize, rng_seed: u64) -> Result<Self, HdError> {
        if dim == 0 {
            return Err(HdError::InvalidDimension);
        }
        let mut seed_rng = stream_rng(rng_seed, rng::stream::FEATURE_SEEDS);
        let feature_seeds = (0..quantizer.features())
            .map(|_| Hypervector::random(dim, &mut seed_rng))
            .collect::<Result<Vec<_>, _>>()?;
        let mut level_rng = stream_rng(rng_seed, rng::stream::LEVEL_TABLE);
        let level_table = generate_level_table(dim, quantizer.levels(), &mut level_rng)?;
        Ok(Self { dim, rng_seed, quantizer, feature_seeds, level_table })
    }

    /// Assembles a memory from stored parts (model loading, hand-built tests).
    pub fn from_parts(
        quantizer: Quantizer,
        rng_seed: u64,
        feature_seeds: Vec<Hypervector>,
        level_table: Vec<Hypervector>,
    ) -> Result<Self, HdError> {
        let dim = feature_seeds.first().map(Hypervector::dim).ok_or(HdError::InvalidDimension)?;
        if feature_seeds.len() != quantizer.features() {
            return Err(HdError::DimensionMismatch { expected: quantizer.features(), found: feature_seeds.len() });
        }
        if level_table.len() != quantizer.levels() {
            return Err(HdError::DimensionMismatch { expected: quantizer.levels(), found: level_table.len() });
        }
        if let Some(bad) = feature_seeds.iter().chain(&level_table).find(|hv| hv.dim() != dim) {
            return Err(HdError::DimensionMismatch { expected: dim, found: bad.dim() });
        }
        Ok(Self { dim, rng_seed, quantizer, feature_seeds, level_table })
    }

    /// Same seeds and level table under a different quantizer with the same
    /// feature count and level count.
    pub fn with_quantizer(&self, quantizer: Quantizer) -> Result<Self, HdError> {
        if quantizer.features() != self.quantizer.features() {
            return Err(HdError::DimensionMismatch {
                expected: self.quantizer.features(),
                found: quantizer.features(),
            });
        }
        if quantizer.levels() != self.quantizer.levels() {
            return Err(HdError::DimensionMismatch { expected: self.quantizer.levels(), found: quantizer.levels() });
        }
        Ok(Self { quantizer, ..self.clone() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> usize {
        self.feature_seeds.len()
    }

    pub fn levels(&self) -> usize {
        self.level_table.len()
    }

    pub fn flip_count(&self) -> usize {
        self.dim / self.levels()
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn quantizer(&self) -> &Quantizer {
        &self.quantizer
    }

    pub fn feature_seeds(&self) -> &[Hypervector] {
        &self.feature_seeds
    }

    pub fn level_table(&self) -> &[Hypervector] {
        &self.level_table
    }

    /// True when both memories would encode every input identically.
    pub fn same_codebook(&self, other: &Self) -> bool {
        self == other
    }

    /// Bundle over `j` of `S_j ⊕ Q[level_j]`.
    pub fn encode(&self, sample: &QuantizedSample) -> Result<Hypervector, HdError> {
        if sample.len() != self.features() {
            return Err(HdError::DimensionMismatch { expected: self.features(), found: sample.len() });
        }
        let q = self.levels();
        if let Some((feature, &level)) = sample.levels().iter().enumerate().find(|(_, &l)| l == 0 || l as usize > q) {
            return Err(HdError::LevelOutOfRange { feature, level, q });
        }
        Ok(self.encode_unchecked(sample.levels()))
    }

    fn encode_unchecked(&self, levels: &[u32]) -> Hypervector {
        let mut counter = MajorityCounter::new(self.dim, levels.len());
        for (seed, &level) in self.feature_seeds.iter().zip(levels) {
            let value = &self.level_table[level as usize - 1];
            counter.add_words(seed.words().iter().zip(value.words()).map(|(a, b)| a ^ b));
        }
        counter.majority()
    }

    /// Quantize with this memory's quantizer, then encode.
    pub fn encode_values(&self, x: &[f64]) -> Result<Hypervector, HdError> {
        let sample = self.quantizer.quantize(x)?;
        Ok(self.encode_unchecked(sample.levels()))
    }

    /// Unbinds each feature seed and cleans up against the level table;
    /// ties resolve to the lowest level.
    pub fn decode(&self, encoded: &Hypervector) -> Result<QuantizedSample, HdError> {
        if encoded.dim() != self.dim {
            return Err(HdError::DimensionMismatch { expected: self.dim, found: encoded.dim() });
        }
        let words = words_for(self.dim);
        let levels = self
            .feature_seeds
            .iter()
            .map(|seed| {
                let mut best = (usize::MAX, 0u32);
                for (k, level) in self.level_table.iter().enumerate() {
                    let mut dist = 0usize;
                    for w in 0..words {
                        dist += (encoded.words()[w] ^ seed.words()[w] ^ level.words()[w]).count_ones() as usize;
                    }
                    if dist < best.0 {
                        best = (dist, k as u32 + 1);
                    }
                }
                best.1
            })
            .collect();
        Ok(QuantizedSample::from_raw(levels))
    }

    /// `dequantize(decode(encode(quantize(x))))`.
    pub fn codec(&self, x: &[f64]) -> Result<Vec<f64>, HdError> {
        let encoded = self.encode_values(x)?;
        let decoded = self.decode(&encoded)?;
        self.quantizer.dequantize(&decoded)
    }

    /// Mean and population standard deviation of
    /// `|codec(x)_j − x_j| / (hi_j − lo_j)` over every entry of `x`.
    pub fn reconstruction_error(&self, x: ArrayView2<'_, f64>) -> Result<(f64, f64), HdError> {
        if x.ncols() != self.features() {
            return Err(HdError::DimensionMismatch { expected: self.features(), found: x.ncols() });
        }
        if x.nrows() == 0 {
            return Err(HdError::InvalidParameter("reconstruction error of an empty matrix".into()));
        }
        let rows: Vec<Vec<f64>> = (0..x.nrows())
            .into_par_iter()
            .map(|i| {
                let row = x.row(i).to_vec();
                let decoded = self.codec(&row)?;
                Ok(row
                    .iter()
                    .zip(&decoded)
                    .zip(self.quantizer.ranges())
                    .map(|((v, d), (lo, hi))| (d - v).abs() / (hi - lo))
                    .collect())
            })
            .collect::<Result<_, HdError>>()?;
        let count = (x.nrows() * x.ncols()) as f64;
        let mean = rows.iter().flatten().sum::<f64>() / count;
        let var = rows.iter().flatten().map(|e| (e - mean) * (e - mean)).sum::<f64>() / count;
        Ok((mean, var.sqrt()))
    }
}
