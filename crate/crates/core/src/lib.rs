//! Hyperdimensional learning with encoder-aware neural feature extraction.
//!
//! * [`hdcore`]: binary hypervectors, item memories, quantization, codec.
//! * [`hdclassifier`]: one-pass, incrementally updatable nearest-centroid model.
//! * [`nnfe`]: MLP feature extractor trained with the HD codec in the loop.
//! * [`pipeline`]: HDL / NN+HDL / encoder-aware experiments.
//! * [`perfsim`]: analytic latency model and schedule search for the accelerator.
//! * [`dataset`] and [`modelfile`]: ingestion and persistence.

pub mod dataset;
pub mod hdclassifier;
pub mod hdcore;
pub mod modelfile;
pub mod nnfe;
pub mod perfsim;
pub mod pipeline;
pub mod rng;
