//! Command-line surface. Every flag can also be set through an `SYHD_*`
//! environment variable; an explicit flag wins.

use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use syhd_core::nnfe::TrainConfig;
use syhd_core::pipeline::{ExperimentSpec, ModelKind};

#[derive(Debug, Parser)]
#[command(name = "syhd", version, about = "Binary hyperdimensional learning experiments")]
pub struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and save it.
    Train(TrainCmd),
    /// Print predicted labels for every input row.
    Predict(PredictCmd),
    /// Accuracy of a saved model on labeled data.
    Eval(EvalCmd),
    /// One-pass update of a saved hdl or synergic model with new samples.
    Finetune(FinetuneCmd),
    /// Codec reconstruction error of raw features over a (d^h, q) grid.
    ReconError(ReconCmd),
    /// Accuracy over a grid of model kinds, d^h and q.
    Sweep(SweepCmd),
    /// Accuracy when only a share of the training set is seen up front.
    Incremental(IncrementalCmd),
    /// Cycle and latency estimates for the accelerator.
    Perfsim(PerfsimCmd),
    /// Accuracy spread across repeated seeds.
    SeedSweep(SeedSweepCmd),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedDataset {
    Isolet,
    Har,
}

/// Where training and test data come from.
#[derive(Clone, Debug, Args, Serialize)]
pub struct DataArgs {
    /// Public dataset in its official layout under --data-dir.
    #[arg(long, env = "SYHD_DATASET", value_enum)]
    pub dataset: Option<NamedDataset>,
    #[arg(long, env = "SYHD_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    /// Training table: CSV with the label last, or whitespace features
    /// when --train-labels is given.
    #[arg(long, env = "SYHD_TRAIN", conflicts_with = "dataset")]
    pub train: Option<PathBuf>,
    #[arg(long, env = "SYHD_TRAIN_LABELS", requires = "train")]
    pub train_labels: Option<PathBuf>,
    #[arg(long, env = "SYHD_TEST", conflicts_with = "dataset")]
    pub test: Option<PathBuf>,
    #[arg(long, env = "SYHD_TEST_LABELS", requires = "test")]
    pub test_labels: Option<PathBuf>,
}

/// A single table for scoring or updating a saved model.
#[derive(Clone, Debug, Args, Serialize)]
pub struct InputArgs {
    /// CSV with the label last, or whitespace features when --labels is
    /// given.
    #[arg(long, env = "SYHD_INPUT")]
    pub input: PathBuf,
    #[arg(long, env = "SYHD_LABELS")]
    pub labels: Option<PathBuf>,
}

/// Hyperparameters of the feature extractor and run seeding.
#[derive(Clone, Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, env = "SYHD_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "SYHD_EPOCHS", default_value_t = 120)]
    pub epochs: usize,
    #[arg(long, env = "SYHD_BATCH_SIZE", default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, env = "SYHD_MAX_LR", default_value_t = 0.01)]
    pub max_lr: f64,
    #[arg(long, env = "SYHD_L2", default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long, env = "SYHD_STEPS_PER_EPOCH", default_value_t = 25)]
    pub steps_per_epoch: usize,
    #[arg(long, env = "SYHD_MOMENTUM", default_value_t = 0.9)]
    pub momentum: f64,
    /// Width of the hidden layers; defaults to the input width.
    #[arg(long, env = "SYHD_DNN")]
    pub dnn: Option<usize>,
    /// Standardize inputs with training-set statistics.
    #[arg(long, env = "SYHD_STANDARDIZE", default_value_t = true, action = ArgAction::Set)]
    pub standardize: bool,
}

impl TrainArgs {
    pub fn spec(&self, dataset: &str, kind: ModelKind, dh: usize, q: usize) -> ExperimentSpec {
        ExperimentSpec {
            feature_dim: self.dnn,
            train: TrainConfig {
                epochs: self.epochs,
                batch_size: self.batch_size,
                l2_coeff: self.l2,
                max_lr: self.max_lr,
                steps_per_epoch: self.steps_per_epoch,
                momentum: self.momentum,
                rng_seed: self.seed,
                standardize: self.standardize,
            },
            rng_seed: self.seed,
            ..ExperimentSpec::new(dataset, kind, dh, q)
        }
    }
}

/// 16 for network-backed kinds, 10,240 for raw-feature HD.
pub fn default_dh(kind: ModelKind) -> usize {
    if kind == ModelKind::Hdl {
        10_240
    } else {
        16
    }
}

/// Structured and tabular result files.
#[derive(Clone, Debug, Args)]
pub struct OutputArgs {
    /// One JSON object per result, with the effective configuration.
    #[arg(long, env = "SYHD_JSONL")]
    pub jsonl: Option<PathBuf>,
    /// Plot-ready CSV rows.
    #[arg(long, env = "SYHD_CSV")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[arg(long, env = "SYHD_KIND", default_value = "synergic")]
    pub kind: ModelKind,
    /// Hypervector dimension; 16 for nn-hdl/synergic, 10240 for hdl.
    #[arg(long, env = "SYHD_DH")]
    pub dh: Option<usize>,
    #[arg(long, env = "SYHD_Q", default_value_t = 4)]
    pub q: usize,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Model file to write.
    #[arg(long, env = "SYHD_OUT")]
    pub out: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PredictCmd {
    #[arg(long, env = "SYHD_MODEL")]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    /// Input CSV has no label column.
    #[arg(long, env = "SYHD_UNLABELED", conflicts_with = "labels")]
    pub unlabeled: bool,
    /// Destination CSV; stdout when omitted.
    #[arg(long, env = "SYHD_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalCmd {
    #[arg(long, env = "SYHD_MODEL")]
    pub model: PathBuf,
    /// Labeled table; with --dataset the official test split is used.
    #[arg(long, env = "SYHD_INPUT", required_unless_present = "dataset")]
    pub input: Option<PathBuf>,
    #[arg(long, env = "SYHD_LABELS", requires = "input")]
    pub labels: Option<PathBuf>,
    #[arg(long, env = "SYHD_DATASET", value_enum, conflicts_with = "input")]
    pub dataset: Option<NamedDataset>,
    #[arg(long, env = "SYHD_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct FinetuneCmd {
    #[arg(long, env = "SYHD_MODEL")]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    /// Updated model file.
    #[arg(long, env = "SYHD_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconCmd {
    /// Labeled table whose features are encoded; with --dataset the
    /// official training split is used.
    #[arg(long, env = "SYHD_INPUT", required_unless_present = "dataset")]
    pub input: Option<PathBuf>,
    #[arg(long, env = "SYHD_LABELS", requires = "input")]
    pub labels: Option<PathBuf>,
    #[arg(long, env = "SYHD_DATASET", value_enum, conflicts_with = "input")]
    pub dataset: Option<NamedDataset>,
    #[arg(long, env = "SYHD_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    #[arg(long, env = "SYHD_DH_LIST", value_delimiter = ',', default_value = "16,64,256,1024,10240")]
    pub dh_list: Vec<usize>,
    #[arg(long, env = "SYHD_Q_LIST", value_delimiter = ',', default_value = "4")]
    pub q_list: Vec<usize>,
    /// Item-memory seeds averaged at every point.
    #[arg(long, env = "SYHD_SEEDS", value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepCmd {
    #[arg(long, env = "SYHD_KINDS", value_delimiter = ',', default_value = "hdl,nn-hdl,synergic")]
    pub kinds: Vec<ModelKind>,
    #[arg(long, env = "SYHD_DH_LIST", value_delimiter = ',', default_value = "16,64,256,1024,10240")]
    pub dh_list: Vec<usize>,
    #[arg(long, env = "SYHD_Q_LIST", value_delimiter = ',', default_value = "2,4,8,16")]
    pub q_list: Vec<usize>,
    #[arg(long, env = "SYHD_REPETITIONS", default_value_t = 1)]
    pub repetitions: usize,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct IncrementalCmd {
    #[arg(long, env = "SYHD_KINDS", value_delimiter = ',', default_value = "hdl,synergic")]
    pub kinds: Vec<ModelKind>,
    #[arg(long, env = "SYHD_RATIOS", value_delimiter = ',', default_value = "0.25,0.5,0.75,1")]
    pub ratios: Vec<f64>,
    /// Hypervector dimension; per-kind default when omitted.
    #[arg(long, env = "SYHD_DH")]
    pub dh: Option<usize>,
    #[arg(long, env = "SYHD_Q", default_value_t = 4)]
    pub q: usize,
    #[arg(long, env = "SYHD_REPETITIONS", default_value_t = 1)]
    pub repetitions: usize,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SeedSweepCmd {
    #[arg(long, env = "SYHD_KIND", default_value = "synergic")]
    pub kind: ModelKind,
    #[arg(long, env = "SYHD_DH")]
    pub dh: Option<usize>,
    #[arg(long, env = "SYHD_Q", default_value_t = 4)]
    pub q: usize,
    /// Number of seeds, derived from --seed.
    #[arg(long, env = "SYHD_K", default_value_t = 5)]
    pub k: usize,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HdModeArg {
    Parallel,
    Sequential,
}

/// Flags override the values read from --config.
#[derive(Debug, Args)]
pub struct PerfsimCmd {
    /// TOML accelerator description.
    #[arg(long, env = "SYHD_CONFIG")]
    pub config: Option<PathBuf>,
    /// Network widths, input first.
    #[arg(long, env = "SYHD_LAYERS", value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    #[arg(long, env = "SYHD_PE_BUDGET")]
    pub pe_budget: Option<usize>,
    #[arg(long, env = "SYHD_W_SYS", requires = "h_sys")]
    pub w_sys: Option<usize>,
    #[arg(long, env = "SYHD_H_SYS", requires = "w_sys")]
    pub h_sys: Option<usize>,
    #[arg(long, env = "SYHD_CLOCK_MHZ")]
    pub clock_mhz: Option<f64>,
    /// Weight words per cycle; unlimited when omitted.
    #[arg(long, env = "SYHD_DRAM_BANDWIDTH")]
    pub dram_bandwidth: Option<f64>,
    #[arg(long, env = "SYHD_DH")]
    pub dh: Option<usize>,
    #[arg(long, env = "SYHD_DL")]
    pub dl: Option<usize>,
    #[arg(long, env = "SYHD_CLASSES")]
    pub classes: Option<usize>,
    #[arg(long, env = "SYHD_FANIN")]
    pub fanin: Option<usize>,
    #[arg(long, env = "SYHD_HD_MODE", value_enum)]
    pub hd_mode: Option<HdModeArg>,
    #[arg(long, env = "SYHD_CHUNK_WIDTH")]
    pub chunk_width: Option<usize>,
    #[arg(long, env = "SYHD_ADDER_LIMIT")]
    pub adder_limit: Option<usize>,
    /// Report CSV destination.
    #[arg(long, env = "SYHD_CSV")]
    pub csv: Option<PathBuf>,
}
