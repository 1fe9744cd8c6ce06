//! The two-step flow and its baselines.
//!
//! * `hdl`: HD classifier on raw features.
//! * `nn_hdl`: MLP trained without the codec; HD classifier on its
//!   features with a quantizer fitted to them.
//! * `synergic`: MLP trained with the codec in the loop; the HD classifier
//!   reuses the codec's item memory, quantizing over `[0, alpha]`.
//!
//! Every run is a deterministic function of the spec, the data, and the
//! run seed. Repetition `r` runs with the master seed when `r = 0` and
//! `derive_seed(master, r)` otherwise.

use std::io::Write;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DataSplits, Dataset, DatasetError, LabelMap};
use crate::hdclassifier::{ClassifierError, HdModel};
use crate::hdcore::{HdError, ItemMemory, Quantizer};
use crate::nnfe::{self, Architecture, CodecSpec, MlpModel, NnError, TrainConfig};
use crate::rng::{self, derive_seed, stream_rng};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error(transparent)]
    Hd(#[from] HdError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Hdl,
    NnHdl,
    Synergic,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Hdl, ModelKind::NnHdl, ModelKind::Synergic];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Hdl => "hdl",
            ModelKind::NnHdl => "nn_hdl",
            ModelKind::Synergic => "synergic",
        }
    }

    pub fn uses_network(self) -> bool {
        self != ModelKind::Hdl
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "hdl" => Ok(ModelKind::Hdl),
            "nn_hdl" => Ok(ModelKind::NnHdl),
            "synergic" => Ok(ModelKind::Synergic),
            other => Err(format!("unknown model kind {other:?} (expected hdl, nn-hdl or synergic)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Free-form dataset identifier echoed into results.
    pub dataset: String,
    pub kind: ModelKind,
    pub dh: usize,
    pub q: usize,
    /// Width of both hidden layers; `None` uses the input width.
    pub feature_dim: Option<usize>,
    pub train: TrainConfig,
    /// Fraction of the training set seen before the one-pass update.
    pub ratio: f64,
    pub rng_seed: u64,
    pub repetitions: usize,
}

impl ExperimentSpec {
    pub fn new(dataset: impl Into<String>, kind: ModelKind, dh: usize, q: usize) -> Self {
        Self {
            dataset: dataset.into(),
            kind,
            dh,
            q,
            feature_dim: None,
            train: TrainConfig::default(),
            ratio: 1.0,
            rng_seed: 0,
            repetitions: 1,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Spec(m));
        if self.dh == 0 {
            return bad("d^h must be at least 1".into());
        }
        if self.q < 2 || self.q > self.dh {
            return bad(format!("q must be in 2..=d^h ({}), got {}", self.dh, self.q));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return bad(format!("ratio must be in (0, 1], got {}", self.ratio));
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.feature_dim == Some(0) {
            return bad("feature dimension must be at least 1".into());
        }
        if self.kind.uses_network() {
            self.train.validate()?;
        }
        Ok(())
    }

    pub fn run_seed(&self, repetition: usize) -> u64 {
        if repetition == 0 {
            self.rng_seed
        } else {
            derive_seed(self.rng_seed, repetition as u64)
        }
    }

    pub fn architecture(&self, input_dim: usize, classes: usize) -> Architecture {
        Architecture::two_layer(input_dim, self.feature_dim.unwrap_or(input_dim), classes)
    }
}

/// A fitted model of any kind.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedPipeline {
    pub kind: ModelKind,
    pub seed: u64,
    pub extractor: Option<MlpModel>,
    pub classifier: HdModel,
    pub label_map: LabelMap,
}

impl TrainedPipeline {
    /// Inputs as seen by the HD classifier.
    pub fn features(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, PipelineError> {
        Ok(match &self.extractor {
            Some(mlp) => mlp.extract_features(x)?,
            None => x.to_owned(),
        })
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>, PipelineError> {
        Ok(self.classifier.predict_batch(self.features(x)?.view())?)
    }

    pub fn evaluate(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64, PipelineError> {
        Ok(self.classifier.evaluate(self.features(x)?.view(), labels)?)
    }

    /// One-pass update of the HD classifier; the extractor stays frozen.
    pub fn finetune(&mut self, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<(), PipelineError> {
        if self.kind == ModelKind::NnHdl {
            return Err(PipelineError::Unsupported("finetune supports hdl and synergic models".into()));
        }
        let features = self.features(x)?;
        self.classifier.update(features.view(), labels)?;
        Ok(())
    }
}

/// Fits a model of `spec.kind` on `train` with the given run seed.
pub fn fit(spec: &ExperimentSpec, train: &Dataset, seed: u64) -> Result<TrainedPipeline, PipelineError> {
    fit_with_ranges(spec, train, seed, None)
}

/// As [`fit`]; for `hdl` the quantizer ranges come from `quantizer_data`
/// when given.
fn fit_with_ranges(
    spec: &ExperimentSpec,
    train: &Dataset,
    seed: u64,
    quantizer_data: Option<ArrayView2<'_, f64>>,
) -> Result<TrainedPipeline, PipelineError> {
    spec.validate()?;
    let classes = train.classes();
    let (extractor, memory, features) = match spec.kind {
        ModelKind::Hdl => {
            let quantizer = Quantizer::fit(quantizer_data.unwrap_or(train.features.view()), spec.q)?;
            (None, ItemMemory::generate(quantizer, spec.dh, seed)?, train.features.clone())
        }
        ModelKind::NnHdl | ModelKind::Synergic => {
            let arch = spec.architecture(train.dim(), classes);
            let config = TrainConfig { rng_seed: seed, ..spec.train.clone() };
            let codec = (spec.kind == ModelKind::Synergic).then_some(CodecSpec { dim: spec.dh, levels: spec.q, seed });
            let mlp = nnfe::train(train.features.view(), &train.labels, &arch, codec, &config)?;
            let features = mlp.extract_features(train.features.view())?;
            let memory = match (mlp.codec(), mlp.feature_alpha()) {
                (Some(codec), Some(alpha)) => codec.memory_for_alpha(alpha)?,
                _ => ItemMemory::generate(Quantizer::fit(features.view(), spec.q)?, spec.dh, seed)?,
            };
            (Some(mlp), memory, features)
        }
    };
    let classifier = HdModel::train(memory, features.view(), &train.labels, classes)?;
    Ok(TrainedPipeline { kind: spec.kind, seed, extractor, classifier, label_map: train.label_map.clone() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Excluded from serialized records so they stay reproducible.
    #[serde(skip)]
    pub wall_clock: Duration,
}

impl ExperimentResult {
    fn new(spec: &ExperimentSpec, seeds: Vec<u64>, accuracies: Vec<f64>, wall_clock: Duration) -> Self {
        let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
        let min = accuracies.iter().copied().fold(f64::INFINITY, f64::min);
        let max = accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { spec: spec.clone(), seeds, accuracies, mean, min, max, wall_clock }
    }

    pub fn spread(&self) -> f64 {
        self.max - self.min
    }

    /// One flat row per repetition.
    pub fn records(&self) -> Vec<Record> {
        self.seeds
            .iter()
            .zip(&self.accuracies)
            .map(|(&seed, &accuracy)| Record {
                model_kind: Some(self.spec.kind.name().into()),
                dh: Some(self.spec.dh),
                q: Some(self.spec.q),
                seed: Some(seed),
                ratio: Some(self.spec.ratio),
                accuracy: Some(accuracy),
                ..Record::default()
            })
            .collect()
    }
}

fn check_kind(spec: &ExperimentSpec, kind: ModelKind) -> Result<(), PipelineError> {
    if spec.kind != kind {
        return Err(PipelineError::Spec(format!("expected a {kind} spec, got {}", spec.kind)));
    }
    Ok(())
}

/// Trains and evaluates once per repetition.
pub fn run_experiment(spec: &ExperimentSpec, data: &DataSplits) -> Result<ExperimentResult, PipelineError> {
    spec.validate()?;
    let start = Instant::now();
    let (mut seeds, mut accuracies) = (Vec::new(), Vec::new());
    for r in 0..spec.repetitions {
        let seed = spec.run_seed(r);
        let model = fit(spec, &data.train, seed)?;
        accuracies.push(model.evaluate(data.test.features.view(), &data.test.labels)?);
        seeds.push(seed);
    }
    Ok(ExperimentResult::new(spec, seeds, accuracies, start.elapsed()))
}

pub fn run_hdl(spec: &ExperimentSpec, data: &DataSplits) -> Result<ExperimentResult, PipelineError> {
    check_kind(spec, ModelKind::Hdl)?;
    run_experiment(spec, data)
}

pub fn run_nn_hdl(spec: &ExperimentSpec, data: &DataSplits) -> Result<ExperimentResult, PipelineError> {
    check_kind(spec, ModelKind::NnHdl)?;
    run_experiment(spec, data)
}

pub fn run_synergic(spec: &ExperimentSpec, data: &DataSplits) -> Result<ExperimentResult, PipelineError> {
    check_kind(spec, ModelKind::Synergic)?;
    run_experiment(spec, data)
}

/// Per class, a seeded random `ratio` share (at least one sample) goes to
/// the initial set. Both returned index lists are ascending.
pub fn stratified_split(labels: &[usize], ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let classes = labels.iter().copied().max().unwrap_or(0);
    let mut by_class = vec![Vec::new(); classes + 1];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = stream_rng(seed, rng::stream::SPLIT);
    let (mut initial, mut rest) = (Vec::new(), Vec::new());
    for mut members in by_class.into_iter().filter(|m| !m.is_empty()) {
        rng::shuffle(&mut members, &mut rng);
        let take = ((ratio * members.len() as f64).round() as usize).clamp(1, members.len());
        initial.extend_from_slice(&members[..take]);
        rest.extend_from_slice(&members[take..]);
    }
    initial.sort_unstable();
    rest.sort_unstable();
    (initial, rest)
}

/// Trains on the initial `ratio` share, then applies one one-pass update
/// with the remainder.
///
/// For `synergic` the network sees only the initial share and stays frozen
/// during the update. For `hdl` the model is also trained on the full set
/// in one go, and the two must agree bit for bit; the quantizer ranges come
/// from the full training set in both cases.
pub fn run_incremental(spec: &ExperimentSpec, data: &DataSplits) -> Result<ExperimentResult, PipelineError> {
    spec.validate()?;
    if spec.kind == ModelKind::NnHdl {
        return Err(PipelineError::Unsupported("incremental runs support hdl and synergic models".into()));
    }
    let start = Instant::now();
    let train = &data.train;
    let (mut seeds, mut accuracies) = (Vec::new(), Vec::new());
    for r in 0..spec.repetitions {
        let seed = spec.run_seed(r);
        let (initial_idx, rest_idx) = stratified_split(&train.labels, spec.ratio, seed);
        check_partition(&initial_idx, &rest_idx, train.len())?;
        let initial = train.subset(&initial_idx);
        let rest = train.subset(&rest_idx);

        let ranges = (spec.kind == ModelKind::Hdl).then(|| train.features.view());
        let mut model = fit_with_ranges(spec, &initial, seed, ranges)?;
        model.finetune(rest.features.view(), &rest.labels)?;

        if spec.kind == ModelKind::Hdl {
            let full = fit_with_ranges(spec, train, seed, ranges)?;
            if full.classifier != model.classifier {
                return Err(PipelineError::Invariant(format!(
                    "hdl model after a {} split differs from the one-shot model",
                    spec.ratio
                )));
            }
        }
        accuracies.push(model.evaluate(data.test.features.view(), &data.test.labels)?);
        seeds.push(seed);
    }
    Ok(ExperimentResult::new(spec, seeds, accuracies, start.elapsed()))
}

fn check_partition(initial: &[usize], rest: &[usize], n: usize) -> Result<(), PipelineError> {
    let mut seen = vec![false; n];
    for &i in initial.iter().chain(rest) {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(PipelineError::Invariant(format!("sample {i} is in both the initial and the update set")));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(PipelineError::Invariant("initial and update sets do not cover the training set".into()));
    }
    Ok(())
}

/// `k` repetitions of the same spec; reports the accuracy spread.
pub fn seed_sweep(spec: &ExperimentSpec, data: &DataSplits, k: usize) -> Result<ExperimentResult, PipelineError> {
    if k < 2 {
        return Err(PipelineError::Spec(format!("a seed sweep needs at least 2 seeds, got {k}")));
    }
    run_experiment(&ExperimentSpec { repetitions: k, ..spec.clone() }, data)
}

/// Mean and deviation of the codec's normalized error, averaged over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconPoint {
    pub dh: usize,
    pub q: usize,
    pub seeds: Vec<u64>,
    pub mean_err: f64,
    pub std_err: f64,
}

impl ReconPoint {
    pub fn record(&self) -> Record {
        Record {
            dh: Some(self.dh),
            q: Some(self.q),
            seed: self.seeds.first().copied(),
            mean_err: Some(self.mean_err),
            std_err: Some(self.std_err),
            ..Record::default()
        }
    }
}

/// Reconstruction error of raw features for every `(d^h, q)` pair, with
/// the quantizer fitted on `x`.
pub fn reconstruction_sweep(
    x: ArrayView2<'_, f64>,
    dh_list: &[usize],
    q_list: &[usize],
    seeds: &[u64],
) -> Result<Vec<ReconPoint>, PipelineError> {
    if seeds.is_empty() {
        return Err(PipelineError::Spec("at least one seed is required".into()));
    }
    let mut points = Vec::new();
    for &dh in dh_list {
        for &q in q_list {
            let quantizer = Quantizer::fit(x, q)?;
            let (mut mean, mut std) = (0.0, 0.0);
            for &seed in seeds {
                let (m, s) = ItemMemory::generate(quantizer.clone(), dh, seed)?.reconstruction_error(x)?;
                mean += m;
                std += s;
            }
            let n = seeds.len() as f64;
            points.push(ReconPoint { dh, q, seeds: seeds.to_vec(), mean_err: mean / n, std_err: std / n });
        }
    }
    Ok(points)
}

pub const RECORD_COLUMNS: [&str; 10] =
    ["model_kind", "dh", "q", "seed", "ratio", "accuracy", "mean_err", "std_err", "cycles", "us"];

/// Flat, plot-ready result row; inapplicable columns are empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub model_kind: Option<String>,
    pub dh: Option<usize>,
    pub q: Option<usize>,
    pub seed: Option<u64>,
    pub ratio: Option<f64>,
    pub accuracy: Option<f64>,
    pub mean_err: Option<f64>,
    pub std_err: Option<f64>,
    pub cycles: Option<u64>,
    pub us: Option<f64>,
}

/// CSV with a header row, even when `records` is empty.
pub fn write_records_csv<W: Write>(records: &[Record], out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: std::io::Read>(input: R) -> Result<Vec<Record>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut out: W) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
