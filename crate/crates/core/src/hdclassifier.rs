//! One-pass nearest-centroid HD classifier with lossless incremental updates.
//!
//! Each class keeps a per-position count of 1-bits over its encoded samples
//! plus a sample count; the binarized centroid is the strict majority of
//! those counts. Training and updating only ever add to the counts, so a
//! model trained on `A` and updated with `B` is bit-identical to one trained
//! on `A ∪ B` in any order.
//!
//! Class labels are 1-based (`1..=classes`) at this API boundary.

use ndarray::ArrayView2;
use rayon::prelude::*;
use thiserror::Error;

use crate::hdcore::{HdError, Hypervector, ItemMemory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error(transparent)]
    Hd(#[from] HdError),
    #[error("label {label} at row {row} outside 1..={classes}")]
    LabelOutOfRange { row: usize, label: usize, classes: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("every class is empty; nothing to predict with")]
    NoTrainedClasses,
    #[error("item memories differ (seed {ours} vs {theirs}, or dimensions/quantizer)")]
    ItemMemoryMismatch { ours: u64, theirs: u64 },
    #[error("class count must be at least 1")]
    NoClasses,
    #[error("inconsistent stored model: {0}")]
    Inconsistent(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct HdModel {
    memory: ItemMemory,
    classes: usize,
    class_counts: Vec<u32>,
    /// Row-major `classes × dim`.
    accumulators: Vec<u32>,
    centroids: Vec<Hypervector>,
}

impl HdModel {
    /// A model with no samples in any class.
    pub fn empty(memory: ItemMemory, classes: usize) -> Result<Self, ClassifierError> {
        if classes == 0 {
            return Err(ClassifierError::NoClasses);
        }
        let dim = memory.dim();
        let zero = Hypervector::zeros(dim)?;
        Ok(Self {
            memory,
            classes,
            class_counts: vec![0; classes],
            accumulators: vec![0; classes * dim],
            centroids: vec![zero; classes],
        })
    }

    /// Encodes every row of `features` and bundles each class.
    pub fn train(
        memory: ItemMemory,
        features: ArrayView2<'_, f64>,
        labels: &[usize],
        classes: usize,
    ) -> Result<Self, ClassifierError> {
        if features.nrows() == 0 {
            return Err(ClassifierError::EmptyDataset);
        }
        let mut model = Self::empty(memory, classes)?;
        model.update(features, labels)?;
        Ok(model)
    }

    /// Adds new samples to the accumulators and re-binarizes. Earlier
    /// samples are never needed. An empty batch leaves the model unchanged.
    pub fn update(&mut self, features: ArrayView2<'_, f64>, labels: &[usize]) -> Result<(), ClassifierError> {
        self.check_batch(features.nrows(), labels)?;
        if features.ncols() != self.memory.features() {
            return Err(HdError::DimensionMismatch { expected: self.memory.features(), found: features.ncols() }.into());
        }
        let encoded = self.encode_batch(features)?;
        self.accumulate(&encoded, labels);
        Ok(())
    }

    /// Like [`update`](Self::update) for samples already encoded with this
    /// model's item memory.
    pub fn update_encoded(&mut self, encoded: &[Hypervector], labels: &[usize]) -> Result<(), ClassifierError> {
        self.check_batch(encoded.len(), labels)?;
        if let Some(bad) = encoded.iter().find(|hv| hv.dim() != self.memory.dim()) {
            return Err(HdError::DimensionMismatch { expected: self.memory.dim(), found: bad.dim() }.into());
        }
        self.accumulate(encoded, labels);
        Ok(())
    }

    /// Folds another model's statistics into this one. Both must share the
    /// same item memory and class count.
    pub fn merge(&mut self, other: &HdModel) -> Result<(), ClassifierError> {
        if !self.memory.same_codebook(&other.memory) {
            return Err(ClassifierError::ItemMemoryMismatch {
                ours: self.memory.rng_seed(),
                theirs: other.memory.rng_seed(),
            });
        }
        if other.classes != self.classes {
            return Err(ClassifierError::Inconsistent(format!(
                "class counts differ: {} vs {}",
                self.classes, other.classes
            )));
        }
        for (a, b) in self.accumulators.iter_mut().zip(&other.accumulators) {
            *a += b;
        }
        for (a, b) in self.class_counts.iter_mut().zip(&other.class_counts) {
            *a += b;
        }
        self.binarize();
        Ok(())
    }

    fn check_batch(&self, rows: usize, labels: &[usize]) -> Result<(), ClassifierError> {
        if rows != labels.len() {
            return Err(ClassifierError::LengthMismatch { features: rows, labels: labels.len() });
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l == 0 || l > self.classes) {
            return Err(ClassifierError::LabelOutOfRange { row, label, classes: self.classes });
        }
        Ok(())
    }

    fn accumulate(&mut self, encoded: &[Hypervector], labels: &[usize]) {
        if encoded.is_empty() {
            return;
        }
        let dim = self.memory.dim();
        for (hv, &label) in encoded.iter().zip(labels) {
            let k = label - 1;
            self.class_counts[k] += 1;
            let row = &mut self.accumulators[k * dim..(k + 1) * dim];
            for (w, &word) in hv.words().iter().enumerate() {
                let mut bits = word;
                while bits != 0 {
                    let b = bits.trailing_zeros() as usize;
                    row[w * 64 + b] += 1;
                    bits &= bits - 1;
                }
            }
        }
        self.binarize();
    }

    /// Recomputes every centroid from the accumulators: bit `j` of class
    /// `k` is set iff `acc[k][j] > count[k] / 2`. Empty classes get an
    /// all-zero centroid and are skipped by prediction.
    pub fn binarize(&mut self) {
        let dim = self.memory.dim();
        for k in 0..self.classes {
            let count = self.class_counts[k];
            let row = &self.accumulators[k * dim..(k + 1) * dim];
            let mut hv = Hypervector::zeros(dim).expect("dim checked at construction");
            for (j, &acc) in row.iter().enumerate() {
                if 2 * acc > count {
                    hv.set(j, true);
                }
            }
            self.centroids[k] = hv;
        }
    }

    pub fn encode_batch(&self, features: ArrayView2<'_, f64>) -> Result<Vec<Hypervector>, ClassifierError> {
        (0..features.nrows())
            .into_par_iter()
            .map(|i| {
                let row = features.row(i);
                let encoded = match row.as_slice() {
                    Some(slice) => self.memory.encode_values(slice),
                    None => self.memory.encode_values(&row.to_vec()),
                };
                encoded.map_err(ClassifierError::from)
            })
            .collect()
    }

    /// Nearest non-empty centroid by Hamming distance; ties go to the
    /// smallest class label.
    pub fn predict_encoded(&self, encoded: &Hypervector) -> Result<usize, ClassifierError> {
        let mut best: Option<(usize, usize)> = None;
        for (k, centroid) in self.centroids.iter().enumerate() {
            if self.class_counts[k] == 0 {
                continue;
            }
            let d = centroid.hamming_bits(encoded)?;
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, k + 1));
            }
        }
        best.map(|(_, label)| label).ok_or(ClassifierError::NoTrainedClasses)
    }

    pub fn predict(&self, features: &[f64]) -> Result<usize, ClassifierError> {
        let encoded = self.memory.encode_values(features)?;
        self.predict_encoded(&encoded)
    }

    pub fn predict_batch(&self, features: ArrayView2<'_, f64>) -> Result<Vec<usize>, ClassifierError> {
        if self.class_counts.iter().all(|&c| c == 0) {
            return Err(ClassifierError::NoTrainedClasses);
        }
        let encoded = self.encode_batch(features)?;
        encoded.par_iter().map(|hv| self.predict_encoded(hv)).collect()
    }

    /// Fraction of rows predicted correctly.
    pub fn evaluate(&self, features: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64, ClassifierError> {
        if features.nrows() != labels.len() {
            return Err(ClassifierError::LengthMismatch { features: features.nrows(), labels: labels.len() });
        }
        let predicted = self.predict_batch(features)?;
        accuracy(&predicted, labels)
    }

    pub fn memory(&self) -> &ItemMemory {
        &self.memory
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn class_counts(&self) -> &[u32] {
        &self.class_counts
    }

    /// Row-major `classes × dim` bit counts.
    pub fn accumulators(&self) -> &[u32] {
        &self.accumulators
    }

    pub fn centroids(&self) -> &[Hypervector] {
        &self.centroids
    }

    pub fn is_class_empty(&self, label: usize) -> bool {
        self.class_counts.get(label.wrapping_sub(1)).is_none_or(|&c| c == 0)
    }

    /// Rebuilds a model from stored statistics, verifying the stored
    /// centroids against the accumulators.
    pub fn from_parts(
        memory: ItemMemory,
        class_counts: Vec<u32>,
        accumulators: Vec<u32>,
        centroids: Vec<Hypervector>,
    ) -> Result<Self, ClassifierError> {
        let classes = class_counts.len();
        let mut model = Self::empty(memory, classes)?;
        let dim = model.memory.dim();
        if accumulators.len() != classes * dim {
            return Err(ClassifierError::Inconsistent(format!(
                "expected {} accumulators, found {}",
                classes * dim,
                accumulators.len()
            )));
        }
        for k in 0..classes {
            if let Some(&bad) = accumulators[k * dim..(k + 1) * dim].iter().find(|&&a| a > class_counts[k]) {
                return Err(ClassifierError::Inconsistent(format!(
                    "class {} accumulator {bad} exceeds its sample count {}",
                    k + 1,
                    class_counts[k]
                )));
            }
        }
        model.class_counts = class_counts;
        model.accumulators = accumulators;
        model.binarize();
        if model.centroids != centroids {
            return Err(ClassifierError::Inconsistent("stored centroids disagree with accumulators".into()));
        }
        Ok(model)
    }
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64, ClassifierError> {
    if truth.is_empty() {
        return Err(ClassifierError::EmptyTestSet);
    }
    if predicted.len() != truth.len() {
        return Err(ClassifierError::LengthMismatch { features: predicted.len(), labels: truth.len() });
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdcore::{bundle, Quantizer};
    use ndarray::{array, Array2};

    fn memory(features: usize, dim: usize, q: usize, seed: u64) -> ItemMemory {
        ItemMemory::generate(Quantizer::uniform(features, 0.0, 1.0, q).unwrap(), dim, seed).unwrap()
    }

    #[test]
    fn one_sample_per_class_gives_its_encoding() {
        let mem = memory(3, 64, 4, 1);
        let x = array![[0.1, 0.9, 0.5], [0.8, 0.2, 0.3]];
        let model = HdModel::train(mem.clone(), x.view(), &[1, 2], 2).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            assert_eq!(model.centroids()[i], mem.encode_values(&row.to_vec()).unwrap());
            assert_eq!(model.predict(&row.to_vec()).unwrap(), i + 1);
        }
    }

    #[test]
    fn three_samples_match_literal_bundle() {
        let mem = memory(4, 8, 2, 3);
        let x = array![[0.1, 0.9, 0.5, 0.2], [0.7, 0.2, 0.3, 0.9], [0.4, 0.6, 0.8, 0.1]];
        let model = HdModel::train(mem.clone(), x.view(), &[1, 1, 1], 1).unwrap();
        let encodings: Vec<_> = x.rows().into_iter().map(|r| mem.encode_values(&r.to_vec()).unwrap()).collect();
        assert_eq!(model.centroids()[0], bundle(&encodings).unwrap());
    }

    #[test]
    fn duplicates_double_accumulators() {
        let mem = memory(3, 32, 4, 5);
        let x = array![[0.1, 0.5, 0.9]];
        let once = HdModel::train(mem.clone(), x.view(), &[1], 1).unwrap();
        let xx = array![[0.1, 0.5, 0.9], [0.1, 0.5, 0.9]];
        let twice = HdModel::train(mem, xx.view(), &[1, 1], 1).unwrap();
        assert!(once.accumulators().iter().zip(twice.accumulators()).all(|(a, b)| 2 * a == *b));
        assert_eq!(once.centroids(), twice.centroids());
    }

    #[test]
    fn errors() {
        let mem = memory(2, 16, 2, 0);
        let x = array![[0.1, 0.2]];
        assert!(matches!(
            HdModel::train(mem.clone(), x.view(), &[3], 2),
            Err(ClassifierError::LabelOutOfRange { label: 3, .. })
        ));
        assert!(matches!(
            HdModel::train(mem.clone(), x.view(), &[0], 2),
            Err(ClassifierError::LabelOutOfRange { label: 0, .. })
        ));
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(HdModel::train(mem.clone(), empty.view(), &[], 2), Err(ClassifierError::EmptyDataset)));
        let model = HdModel::empty(mem.clone(), 2).unwrap();
        assert!(matches!(model.predict(&[0.1, 0.2]), Err(ClassifierError::NoTrainedClasses)));
        let trained = HdModel::train(mem, x.view(), &[1], 2).unwrap();
        assert!(matches!(trained.evaluate(empty.view(), &[]), Err(ClassifierError::EmptyTestSet)));
    }

    #[test]
    fn empty_update_is_a_no_op_and_new_class_becomes_predictable() {
        let mem = memory(2, 64, 4, 7);
        let x = array![[0.1, 0.2]];
        let mut model = HdModel::train(mem, x.view(), &[1], 2).unwrap();
        let before = model.clone();
        model.update(Array2::zeros((0, 2)).view(), &[]).unwrap();
        assert_eq!(model, before);
        assert!(model.is_class_empty(2));
        let new = array![[0.9, 0.95]];
        model.update(new.view(), &[2]).unwrap();
        assert!(!model.is_class_empty(2));
        assert_eq!(model.predict(&[0.9, 0.95]).unwrap(), 2);
    }

    #[test]
    fn merge_rejects_different_memory() {
        let x = array![[0.1, 0.2]];
        let mut a = HdModel::train(memory(2, 64, 4, 1), x.view(), &[1], 1).unwrap();
        let b = HdModel::train(memory(2, 64, 4, 2), x.view(), &[1], 1).unwrap();
        assert!(matches!(a.merge(&b), Err(ClassifierError::ItemMemoryMismatch { .. })));
        let c = HdModel::train(memory(2, 64, 4, 1), x.view(), &[1], 1).unwrap();
        a.merge(&c).unwrap();
        assert_eq!(a.class_counts(), &[2]);
    }

    #[test]
    fn binarize_threshold_examples() {
        let qz = Quantizer::uniform(1, 0.0, 1.0, 2).unwrap();
        let mem = ItemMemory::from_parts(
            qz,
            0,
            vec![Hypervector::from_bit_str("00").unwrap()],
            vec![Hypervector::from_bit_str("00").unwrap(), Hypervector::from_bit_str("11").unwrap()],
        )
        .unwrap();
        let mut model = HdModel::empty(mem, 3).unwrap();
        model.class_counts = vec![3, 0, 2];
        model.accumulators = vec![3, 1, 0, 0, 1, 1];
        model.binarize();
        assert_eq!(model.centroids()[0], Hypervector::from_bit_str("10").unwrap());
        assert_eq!(model.centroids()[1], Hypervector::from_bit_str("00").unwrap());
        assert!(model.is_class_empty(2));
        assert_eq!(model.centroids()[2], Hypervector::from_bit_str("00").unwrap());
    }

    #[test]
    fn equidistant_centroids_pick_smaller_label() {
        let qz = Quantizer::uniform(1, 0.0, 1.0, 2).unwrap();
        let mem = ItemMemory::from_parts(
            qz,
            0,
            vec![Hypervector::from_bit_str("0000").unwrap()],
            vec![Hypervector::from_bit_str("1100").unwrap(), Hypervector::from_bit_str("0011").unwrap()],
        )
        .unwrap();
        let x = array![[0.9], [0.1]];
        let model = HdModel::train(mem, x.view(), &[1, 2], 2).unwrap();
        let query = Hypervector::from_bit_str("1010").unwrap();
        assert_eq!(model.predict_encoded(&query).unwrap(), 1);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[2, 1], &[1, 2]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 1, 2, 2], &[1, 2, 2, 1]).unwrap(), 0.5);
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn from_parts_round_trip_and_validation() {
        let mem = memory(2, 16, 2, 9);
        let x = array![[0.1, 0.2], [0.9, 0.8], [0.5, 0.5]];
        let model = HdModel::train(mem.clone(), x.view(), &[1, 2, 1], 2).unwrap();
        let rebuilt = HdModel::from_parts(
            mem.clone(),
            model.class_counts().to_vec(),
            model.accumulators().to_vec(),
            model.centroids().to_vec(),
        )
        .unwrap();
        assert_eq!(rebuilt, model);
        let mut bad_acc = model.accumulators().to_vec();
        bad_acc[0] = 99;
        assert!(HdModel::from_parts(mem, model.class_counts().to_vec(), bad_acc, model.centroids().to_vec()).is_err());
    }
}
