use std::path::PathBuf;

use syhd_core::dataset::DatasetError;
use syhd_core::hdclassifier::ClassifierError;
use syhd_core::hdcore::HdError;
use syhd_core::modelfile::ModelFileError;
use syhd_core::nnfe::NnError;
use syhd_core::perfsim::PerfError;
use syhd_core::pipeline::PipelineError;
use thiserror::Error;

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const PARSE: i32 = 3;
    pub const NUMERIC: i32 = 4;
    pub const IO: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}: {source} [{}]", source.code())]
    Model { path: PathBuf, source: ModelFileError },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Perf(#[from] PerfError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn model(path: impl Into<PathBuf>, source: ModelFileError) -> Self {
        Self::Model { path: path.into(), source }
    }

    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Dataset(e) => dataset_code(e),
            CliError::Model { source: ModelFileError::Io(_), .. } => exit::IO,
            CliError::Model { .. } => exit::PARSE,
            CliError::Pipeline(e) => pipeline_code(e),
            CliError::Perf(PerfError::Parse(_)) => exit::PARSE,
            CliError::Perf(_) => exit::USAGE,
            CliError::Io { .. } | CliError::Csv { .. } => exit::IO,
        }
    }
}

fn dataset_code(e: &DatasetError) -> i32 {
    match e {
        DatasetError::Io { .. } | DatasetError::NotFound(_) => exit::IO,
        _ => exit::PARSE,
    }
}

fn hd_code(e: &HdError) -> i32 {
    match e {
        HdError::InvalidParameter(_) | HdError::InvalidDimension => exit::USAGE,
        HdError::DimensionMismatch { .. } => exit::PARSE,
        _ => exit::NUMERIC,
    }
}

fn pipeline_code(e: &PipelineError) -> i32 {
    match e {
        PipelineError::Spec(_) | PipelineError::Unsupported(_) => exit::USAGE,
        PipelineError::Dataset(e) => dataset_code(e),
        PipelineError::Hd(e)
        | PipelineError::Nn(NnError::Hd(e))
        | PipelineError::Classifier(ClassifierError::Hd(e)) => hd_code(e),
        PipelineError::Nn(NnError::Config(_) | NnError::Architecture(_)) => exit::USAGE,
        PipelineError::Nn(NnError::Shape { .. })
        | PipelineError::Classifier(ClassifierError::LengthMismatch { .. } | ClassifierError::LabelOutOfRange { .. }) => {
            exit::PARSE
        }
        _ => exit::NUMERIC,
    }
}
