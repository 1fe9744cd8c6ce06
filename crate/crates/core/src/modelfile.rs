//! Binary model container.
//!
//! ```text
//! "SYHD" | version u16 | sections u16 | payload length u64 | crc32 u32
//! payload = section table (tag [u8;4], offset u64, length u64)* ++ bodies
//! ```
//!
//! All integers and floats are little-endian; offsets are relative to the
//! payload start and the checksum covers the whole payload. Sections:
//!
//! * `META`: JSON with the model kind, run seed, RNG name and original labels.
//! * `ITEM`: item memory: `d^l, d^h, q, p, seed` as u64, per-feature
//!   `(lo, hi)` as f64, then `S` and `Q` rows as packed u64 words.
//! * `HDCL`: classifier: `c, d^h` as u64, class counts and row-major
//!   accumulators as u32, then centroid words.
//! * `MLPN`: network (absent for `hdl`): normalizer, layers with f64
//!   weights, head, optional codec item memory, training config as JSON,
//!   loss history.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabelMap;
use crate::hdclassifier::{ClassifierError, HdModel};
use crate::hdcore::{HdError, Hypervector, ItemMemory, Quantizer};
use crate::nnfe::{Activation, CodecLayer, DenseLayer, FeatureLayer, MlpModel, NnError, Standardizer, TrainConfig};
use crate::pipeline::{ModelKind, TrainedPipeline};
use crate::rng::RNG_NAME;

pub const MAGIC: [u8; 4] = *b"SYHD";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 2 + 8 + 4;
const ENTRY_LEN: usize = 4 + 8 + 8;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not a model file (magic {0:?})")]
    BadMagic(Vec<u8>),
    #[error("unsupported model file version {found} (this build reads {VERSION})")]
    UnsupportedVersion { found: u16 },
    #[error("checksum failure: {0}")]
    Checksum(String),
    #[error("missing section {0}")]
    MissingSection(&'static str),
    #[error("section {section}: {reason}")]
    Malformed { section: &'static str, reason: String },
    #[error("model was generated with RNG {0:?}, this build uses {RNG_NAME:?}")]
    Rng(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Hd(#[from] HdError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

impl ModelFileError {
    /// Stable identifier for each failure class.
    pub fn code(&self) -> &'static str {
        match self {
            ModelFileError::BadMagic(_) => "bad-magic",
            ModelFileError::UnsupportedVersion { .. } => "unsupported-version",
            ModelFileError::Checksum(_) => "checksum",
            ModelFileError::MissingSection(_) => "missing-section",
            ModelFileError::Malformed { .. } => "malformed",
            ModelFileError::Rng(_) => "rng",
            ModelFileError::Io(_) => "io",
            ModelFileError::Hd(_) | ModelFileError::Classifier(_) | ModelFileError::Nn(_) => "inconsistent",
        }
    }
}

#[derive(Default)]
struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) {
        vs.into_iter().for_each(|&v| self.f64(v));
    }
    fn hv(&mut self, hv: &Hypervector) {
        hv.words().iter().for_each(|&w| self.u64(w));
    }
    fn blob(&mut self, bytes: &[u8]) {
        self.len(bytes.len());
        self.0.extend_from_slice(bytes);
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Dec<'a> {
    fn new(buf: &'a [u8], section: &'static str) -> Self {
        Self { buf, pos: 0, section }
    }

    fn err(&self, reason: impl Into<String>) -> ModelFileError {
        ModelFileError::Malformed { section: self.section, reason: reason.into() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelFileError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| self.err(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ModelFileError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, ModelFileError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, ModelFileError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, ModelFileError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64, ModelFileError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    /// A count that must fit in the remaining bytes at `unit` bytes each.
    fn len(&mut self, unit: usize) -> Result<usize, ModelFileError> {
        let v = self.u64()?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if v.saturating_mul(unit.max(1) as u64) > remaining {
            return Err(self.err(format!("count {v} exceeds the section size")));
        }
        Ok(v as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, ModelFileError> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn hv(&mut self, dim: usize) -> Result<Hypervector, ModelFileError> {
        let words = (0..dim.div_ceil(64)).map(|_| self.u64()).collect::<Result<_, _>>()?;
        Ok(Hypervector::from_words(dim, words)?)
    }

    fn blob(&mut self) -> Result<&'a [u8], ModelFileError> {
        let n = self.len(1)?;
        self.take(n)
    }

    fn finish(self) -> Result<(), ModelFileError> {
        if self.pos != self.buf.len() {
            return Err(self.err(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn encode_item_memory(mem: &ItemMemory) -> Vec<u8> {
    let mut e = Enc::default();
    for v in [mem.features(), mem.dim(), mem.levels(), mem.flip_count()] {
        e.len(v);
    }
    e.u64(mem.rng_seed());
    for &(lo, hi) in mem.quantizer().ranges() {
        e.f64(lo);
        e.f64(hi);
    }
    mem.feature_seeds().iter().chain(mem.level_table()).for_each(|hv| e.hv(hv));
    e.0
}

fn read_item_memory(d: &mut Dec<'_>) -> Result<ItemMemory, ModelFileError> {
    let features = d.len(16)?;
    let dim = d.u64()? as usize;
    let q = d.u64()? as usize;
    let p = d.u64()? as usize;
    let seed = d.u64()?;
    if dim == 0 || q < 2 || p != dim / q {
        return Err(d.err(format!("inconsistent header d^h={dim} q={q} p={p}")));
    }
    let mut ranges = Vec::with_capacity(features);
    for _ in 0..features {
        ranges.push((d.f64()?, d.f64()?));
    }
    let quantizer = Quantizer::new(ranges, q)?;
    let seeds = (0..features).map(|_| d.hv(dim)).collect::<Result<Vec<_>, _>>()?;
    let levels = (0..q).map(|_| d.hv(dim)).collect::<Result<Vec<_>, _>>()?;
    Ok(ItemMemory::from_parts(quantizer, seed, seeds, levels)?)
}

pub fn decode_item_memory(bytes: &[u8]) -> Result<ItemMemory, ModelFileError> {
    let mut d = Dec::new(bytes, "ITEM");
    let mem = read_item_memory(&mut d)?;
    d.finish()?;
    Ok(mem)
}

fn encode_classifier(model: &HdModel) -> Vec<u8> {
    let mut e = Enc::default();
    e.len(model.classes());
    e.len(model.memory().dim());
    model.class_counts().iter().for_each(|&c| e.u32(c));
    model.accumulators().iter().for_each(|&a| e.u32(a));
    model.centroids().iter().for_each(|hv| e.hv(hv));
    e.0
}

fn decode_classifier(bytes: &[u8], memory: ItemMemory) -> Result<HdModel, ModelFileError> {
    let mut d = Dec::new(bytes, "HDCL");
    let classes = d.len(4)?;
    let dim = d.u64()? as usize;
    if dim != memory.dim() {
        return Err(d.err(format!("d^h {dim} differs from the item memory's {}", memory.dim())));
    }
    let counts = (0..classes).map(|_| d.u32()).collect::<Result<Vec<_>, _>>()?;
    let acc = (0..classes * dim).map(|_| d.u32()).collect::<Result<Vec<_>, _>>()?;
    let centroids = (0..classes).map(|_| d.hv(dim)).collect::<Result<Vec<_>, _>>()?;
    d.finish()?;
    Ok(HdModel::from_parts(memory, counts, acc, centroids)?)
}

fn write_dense(e: &mut Enc, layer: &DenseLayer) {
    e.len(layer.d_in());
    e.len(layer.d_out());
    e.f64s(layer.weights.iter());
    e.f64s(layer.biases.iter());
}

fn read_dense(d: &mut Dec<'_>) -> Result<DenseLayer, ModelFileError> {
    let d_in = d.len(8)?;
    let d_out = d.len(8)?;
    let weights = d.f64s(d_in.saturating_mul(d_out))?;
    let biases = d.f64s(d_out)?;
    Ok(DenseLayer {
        weights: Array2::from_shape_vec((d_out, d_in), weights).expect("length matches shape"),
        biases: Array1::from(biases),
    })
}

fn encode_mlp(mlp: &MlpModel) -> Vec<u8> {
    let mut e = Enc::default();
    e.u8(u8::from(mlp.normalizer().is_some()) | (u8::from(mlp.codec().is_some()) << 1));
    e.len(mlp.layers().len());
    if let Some(norm) = mlp.normalizer() {
        e.len(norm.mean.len());
        e.f64s(norm.mean.iter());
        e.f64s(norm.scale.iter());
    }
    for layer in mlp.layers() {
        match layer.activation {
            Activation::Relu => {
                e.u8(0);
                e.f64(0.0);
            }
            Activation::Pact { alpha } => {
                e.u8(1);
                e.f64(alpha);
            }
        }
        write_dense(&mut e, &layer.dense);
    }
    write_dense(&mut e, mlp.head());
    if let Some(codec) = mlp.codec() {
        e.blob(&encode_item_memory(codec.memory()));
    }
    e.blob(&serde_json::to_vec(mlp.config()).expect("config serializes"));
    e.len(mlp.loss_history().len());
    e.f64s(mlp.loss_history());
    e.0
}

fn decode_mlp(bytes: &[u8]) -> Result<MlpModel, ModelFileError> {
    let mut d = Dec::new(bytes, "MLPN");
    let flags = d.u8()?;
    if flags > 3 {
        return Err(d.err(format!("unknown flags {flags:#x}")));
    }
    let n_layers = d.len(1)?;
    let normalizer = if flags & 1 != 0 {
        let width = d.len(16)?;
        Some(Standardizer { mean: Array1::from(d.f64s(width)?), scale: Array1::from(d.f64s(width)?) })
    } else {
        None
    };
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let kind = d.u8()?;
        let alpha = d.f64()?;
        let activation = match kind {
            0 => Activation::Relu,
            1 => Activation::Pact { alpha },
            other => return Err(d.err(format!("unknown activation {other}"))),
        };
        layers.push(FeatureLayer { dense: read_dense(&mut d)?, activation });
    }
    let head = read_dense(&mut d)?;
    let codec = if flags & 2 != 0 { Some(CodecLayer::from_memory(decode_item_memory(d.blob()?)?)) } else { None };
    let config: TrainConfig = serde_json::from_slice(d.blob()?).map_err(|e| d.err(format!("config: {e}")))?;
    let n = d.len(8)?;
    let history = d.f64s(n)?;
    d.finish()?;
    Ok(MlpModel::from_parts(normalizer, layers, codec, head, config, history)?)
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: ModelKind,
    seed: u64,
    rng: String,
    labels: Vec<i64>,
}

/// Assembles the container from tagged sections.
fn write_container(sections: &[([u8; 4], Vec<u8>)]) -> Vec<u8> {
    let mut payload = Vec::new();
    let mut offset = (sections.len() * ENTRY_LEN) as u64;
    for (tag, body) in sections {
        payload.extend_from_slice(tag);
        payload.extend_from_slice(&offset.to_le_bytes());
        payload.extend_from_slice(&(body.len() as u64).to_le_bytes());
        offset += body.len() as u64;
    }
    for (_, body) in sections {
        payload.extend_from_slice(body);
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(sections.len() as u16).to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

/// Tag and body of one section.
type Section<'a> = ([u8; 4], &'a [u8]);

/// Validates magic, version and checksum; returns the tagged section bodies.
fn read_container(bytes: &[u8]) -> Result<Vec<Section<'_>>, ModelFileError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(ModelFileError::BadMagic(bytes[..bytes.len().min(4)].to_vec()));
    }
    if bytes.len() < 6 {
        return Err(ModelFileError::Checksum("file ends inside the header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(ModelFileError::UnsupportedVersion { found: version });
    }
    if bytes.len() < HEADER_LEN {
        return Err(ModelFileError::Checksum("file ends inside the header".into()));
    }
    let count = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let declared = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let stored = u32::from_le_bytes(bytes[16..20].try_into().expect("4 bytes"));
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != declared {
        return Err(ModelFileError::Checksum(format!("payload is {} bytes, header says {declared}", payload.len())));
    }
    let computed = crc32fast::hash(payload);
    if computed != stored {
        return Err(ModelFileError::Checksum(format!("stored {stored:08x}, computed {computed:08x}")));
    }
    let mut table = Dec::new(payload, "table");
    let mut sections = Vec::with_capacity(count);
    for _ in 0..count {
        let tag = table.array::<4>()?;
        let offset = table.u64()? as usize;
        let len = table.u64()? as usize;
        let body = offset
            .checked_add(len)
            .and_then(|end| payload.get(offset..end))
            .ok_or_else(|| table.err(format!("section {} out of bounds", String::from_utf8_lossy(&tag))))?;
        sections.push((tag, body));
    }
    Ok(sections)
}

fn section<'a>(sections: &[([u8; 4], &'a [u8])], tag: &'static str) -> Result<&'a [u8], ModelFileError> {
    sections.iter().find(|(t, _)| t == tag.as_bytes()).map(|(_, b)| *b).ok_or(ModelFileError::MissingSection(tag))
}

pub fn encode_pipeline(model: &TrainedPipeline) -> Vec<u8> {
    let meta =
        Meta { kind: model.kind, seed: model.seed, rng: RNG_NAME.into(), labels: model.label_map.values().to_vec() };
    let mut sections = vec![
        (*b"META", serde_json::to_vec(&meta).expect("meta serializes")),
        (*b"ITEM", encode_item_memory(model.classifier.memory())),
        (*b"HDCL", encode_classifier(&model.classifier)),
    ];
    if let Some(mlp) = &model.extractor {
        sections.push((*b"MLPN", encode_mlp(mlp)));
    }
    write_container(&sections)
}

pub fn decode_pipeline(bytes: &[u8]) -> Result<TrainedPipeline, ModelFileError> {
    let sections = read_container(bytes)?;
    let meta: Meta = serde_json::from_slice(section(&sections, "META")?)
        .map_err(|e| ModelFileError::Malformed { section: "META", reason: e.to_string() })?;
    if meta.rng != RNG_NAME {
        return Err(ModelFileError::Rng(meta.rng));
    }
    let memory = decode_item_memory(section(&sections, "ITEM")?)?;
    let classifier = decode_classifier(section(&sections, "HDCL")?, memory)?;
    let extractor = match section(&sections, "MLPN") {
        Ok(bytes) => Some(decode_mlp(bytes)?),
        Err(_) if meta.kind == ModelKind::Hdl => None,
        Err(e) => return Err(e),
    };
    let label_map = LabelMap::from_values(meta.labels);
    if label_map.classes() != classifier.classes() {
        return Err(ModelFileError::Malformed {
            section: "META",
            reason: format!("{} labels for {} classes", label_map.classes(), classifier.classes()),
        });
    }
    Ok(TrainedPipeline { kind: meta.kind, seed: meta.seed, extractor, classifier, label_map })
}

pub fn save_model(path: &Path, model: &TrainedPipeline) -> Result<(), ModelFileError> {
    fs::write(path, encode_pipeline(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedPipeline, ModelFileError> {
    decode_pipeline(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DataSplits, RawTable};
    use crate::pipeline::{fit, ExperimentSpec};
    use ndarray::array;

    fn data() -> DataSplits {
        let x = array![
            [0.0, 1.0, 2.0],
            [1.0, 0.5, 0.0],
            [2.0, 2.0, 1.0],
            [0.2, 1.1, 1.9],
            [1.2, 0.4, 0.1],
            [1.9, 2.1, 0.8]
        ];
        let raw = RawTable { features: x, labels: vec![7, 8, 9, 7, 8, 9] };
        DataSplits::from_raw(raw.clone(), raw).unwrap()
    }

    fn model(kind: ModelKind) -> TrainedPipeline {
        let mut spec = ExperimentSpec::new("toy", kind, 70, 4);
        spec.feature_dim = Some(5);
        spec.train = TrainConfig { epochs: 3, batch_size: 4, steps_per_epoch: 2, ..TrainConfig::default() };
        fit(&spec, &data().train, 17).unwrap()
    }

    #[test]
    fn round_trip_every_kind() {
        let dir = tempfile::tempdir().unwrap();
        for kind in ModelKind::ALL {
            let m = model(kind);
            let path = dir.path().join(format!("{kind}.syhd"));
            save_model(&path, &m).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(back, m);
            assert_eq!(encode_pipeline(&back), fs::read(&path).unwrap());
        }
    }

    #[test]
    fn item_memory_round_trip_is_bit_exact() {
        let m = model(ModelKind::Hdl);
        let mem = m.classifier.memory();
        let bytes = encode_item_memory(mem);
        assert_eq!(&decode_item_memory(&bytes).unwrap(), mem);
        assert!(decode_item_memory(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn distinct_failures() {
        let bytes = encode_pipeline(&model(ModelKind::Synergic));

        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert_eq!(decode_pipeline(&magic).unwrap_err().code(), "bad-magic");

        let mut version = bytes.clone();
        version[4..6].copy_from_slice(&(VERSION + 1).to_le_bytes());
        assert!(
            matches!(decode_pipeline(&version), Err(ModelFileError::UnsupportedVersion { found }) if found == VERSION + 1)
        );

        for cut in [bytes.len() - 1, bytes.len() / 2, 10] {
            assert_eq!(decode_pipeline(&bytes[..cut]).unwrap_err().code(), "checksum", "cut {cut}");
        }
        let mut flipped = bytes.clone();
        *flipped.last_mut().unwrap() ^= 1;
        assert_eq!(decode_pipeline(&flipped).unwrap_err().code(), "checksum");
    }

    #[test]
    fn header_layout() {
        let bytes = encode_pipeline(&model(ModelKind::Hdl));
        assert_eq!(&bytes[..4], b"SYHD");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), VERSION);
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 3);
        assert_eq!(&bytes[HEADER_LEN..HEADER_LEN + 4], b"META");
    }
}
