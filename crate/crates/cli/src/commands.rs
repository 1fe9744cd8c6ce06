use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use log::info;
use ndarray::Array2;
use serde::Serialize;
use syhd_core::dataset::{
    load_har, load_isolet, read_csv, read_feature_label, read_unlabeled_csv, DataSplits, Dataset, LabelMap, RawTable,
    Split,
};
use syhd_core::modelfile::{load_model, save_model};
use syhd_core::perfsim::{
    candidates, compile, format_report, report, write_report_csv, Candidate, HdSection, LoopOrder, PerfConfig,
};
use syhd_core::pipeline::{
    fit, reconstruction_sweep, run_experiment, run_incremental, seed_sweep, write_jsonl, write_records_csv,
    ExperimentResult, ModelKind, Record, TrainedPipeline,
};

use crate::args::*;
use crate::error::CliError;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_outputs<T: Serialize>(out: &OutputArgs, lines: &[T], records: &[Record]) -> Result<(), CliError> {
    if let Some(path) = &out.jsonl {
        write_jsonl(lines, create(path)?).map_err(|e| CliError::io(path, e))?;
    }
    if let Some(path) = &out.csv {
        write_records_csv(records, create(path)?).map_err(|source| CliError::Csv { path: path.clone(), source })?;
    }
    Ok(())
}

fn load_named(which: NamedDataset, dir: &Path) -> Result<DataSplits, CliError> {
    info!("loading {which:?} from {}", dir.display());
    Ok(match which {
        NamedDataset::Isolet => load_isolet(dir)?,
        NamedDataset::Har => load_har(dir)?,
    })
}

fn read_labeled(path: &Path, labels: Option<&Path>) -> Result<RawTable, CliError> {
    Ok(match labels {
        Some(labels) => read_feature_label(path, labels)?,
        None => read_csv(path)?,
    })
}

impl DataArgs {
    fn name(&self) -> String {
        match (self.dataset, &self.train) {
            (Some(NamedDataset::Isolet), _) => "isolet".into(),
            (Some(NamedDataset::Har), _) => "har".into(),
            (None, Some(p)) => p.file_stem().map_or("data".into(), |s| s.to_string_lossy().into_owned()),
            (None, None) => "data".into(),
        }
    }

    /// Training split and, when available, a test split sharing its label
    /// map.
    fn load(&self) -> Result<(Dataset, Option<Dataset>), CliError> {
        if let Some(which) = self.dataset {
            let splits = load_named(which, &self.data_dir)?;
            return Ok((splits.train, Some(splits.test)));
        }
        let train_path = self.train.as_deref().ok_or_else(|| CliError::Usage("give --dataset or --train".into()))?;
        let train = read_labeled(train_path, self.train_labels.as_deref())?;
        match &self.test {
            Some(test_path) => {
                let test = read_labeled(test_path, self.test_labels.as_deref())?;
                let splits = DataSplits::from_raw(train, test)?;
                Ok((splits.train, Some(splits.test)))
            }
            None => {
                let map = LabelMap::fit([train.labels.as_slice()]);
                Ok((Dataset::new(train, map, Split::Train)?, None))
            }
        }
    }

    fn load_splits(&self) -> Result<DataSplits, CliError> {
        match self.load()? {
            (train, Some(test)) => Ok(DataSplits { train, test }),
            (_, None) => Err(CliError::Usage("this command needs a test split (--test or --dataset)".into())),
        }
    }
}

/// Original labels mapped through the model's label map.
fn model_labels(model: &TrainedPipeline, raw: &[i64]) -> Result<Vec<usize>, CliError> {
    Ok(raw.iter().map(|&l| model.label_map.class_of(l)).collect::<Result<_, _>>()?)
}

fn load(path: &Path) -> Result<TrainedPipeline, CliError> {
    load_model(path).map_err(|e| CliError::model(path, e))
}

fn save(path: &Path, model: &TrainedPipeline) -> Result<(), CliError> {
    save_model(path, model).map_err(|e| CliError::model(path, e))
}

fn model_record(model: &TrainedPipeline, accuracy: Option<f64>) -> Record {
    let memory = model.classifier.memory();
    Record {
        model_kind: Some(model.kind.name().into()),
        dh: Some(memory.dim()),
        q: Some(memory.levels()),
        seed: Some(model.seed),
        accuracy,
        ..Record::default()
    }
}

#[derive(Serialize)]
struct TrainLine<'a> {
    command: &'static str,
    data: &'a DataArgs,
    spec: &'a syhd_core::pipeline::ExperimentSpec,
    seed: u64,
    labels: &'a [i64],
    accuracy: Option<f64>,
}

pub fn train(cmd: &TrainCmd) -> Result<(), CliError> {
    let (train, test) = cmd.data.load()?;
    let spec = cmd.train.spec(&cmd.data.name(), cmd.kind, cmd.dh.unwrap_or(default_dh(cmd.kind)), cmd.q);
    spec.validate()?;
    let seed = spec.run_seed(0);
    info!("fitting {} (d^h={}, q={}) on {} samples", spec.kind, spec.dh, spec.q, train.len());
    let model = fit(&spec, &train, seed)?;
    save(&cmd.out, &model)?;
    let accuracy = test.map(|t| model.evaluate(t.features.view(), &t.labels)).transpose()?;
    println!("model {} written to {}", spec.kind, cmd.out.display());
    if let Some(a) = accuracy {
        println!("test accuracy {a:.4}");
    }
    let line =
        TrainLine { command: "train", data: &cmd.data, spec: &spec, seed, labels: model.label_map.values(), accuracy };
    let record = Record { ratio: Some(1.0), ..model_record(&model, accuracy) };
    write_outputs(&cmd.output, &[line], &[record])
}

pub fn predict(cmd: &PredictCmd) -> Result<(), CliError> {
    let model = load(&cmd.model)?;
    let x: Array2<f64> = if cmd.unlabeled {
        read_unlabeled_csv(&cmd.input.input)?
    } else {
        read_labeled(&cmd.input.input, cmd.input.labels.as_deref())?.features
    };
    let predicted = model.predict(x.view())?;
    let write = |out: &mut dyn Write| -> io::Result<()> {
        writeln!(out, "row,label")?;
        for (i, &k) in predicted.iter().enumerate() {
            let label = model.label_map.original(k).expect("predictions are valid classes");
            writeln!(out, "{},{label}", i + 1)?;
        }
        out.flush()
    };
    match &cmd.out {
        Some(path) => write(&mut create(path)?).map_err(|e| CliError::io(path, e)),
        None => write(&mut io::stdout().lock()).map_err(|e| CliError::io("<stdout>", e)),
    }
}

#[derive(Serialize)]
struct EvalLine<'a> {
    command: &'static str,
    model: &'a Path,
    input: String,
    kind: ModelKind,
    seed: u64,
    samples: usize,
    accuracy: f64,
}

pub fn eval(cmd: &EvalCmd) -> Result<(), CliError> {
    let model = load(&cmd.model)?;
    let (raw, input) = match (cmd.dataset, &cmd.input) {
        (Some(which), _) => (load_named(which, &cmd.data_dir)?.test.to_raw(), format!("{which:?} test split")),
        (None, Some(path)) => (read_labeled(path, cmd.labels.as_deref())?, path.display().to_string()),
        (None, None) => return Err(CliError::Usage("give --input or --dataset".into())),
    };
    let labels = model_labels(&model, &raw.labels)?;
    let accuracy = model.evaluate(raw.features.view(), &labels)?;
    println!("accuracy {accuracy:.4} on {} samples", labels.len());
    let line = EvalLine {
        command: "eval",
        model: &cmd.model,
        input,
        kind: model.kind,
        seed: model.seed,
        samples: labels.len(),
        accuracy,
    };
    write_outputs(&cmd.output, &[line], &[model_record(&model, Some(accuracy))])
}

pub fn finetune(cmd: &FinetuneCmd) -> Result<(), CliError> {
    let mut model = load(&cmd.model)?;
    let raw = read_labeled(&cmd.input.input, cmd.input.labels.as_deref())?;
    let labels = model_labels(&model, &raw.labels)?;
    model.finetune(raw.features.view(), &labels)?;
    save(&cmd.out, &model)?;
    println!("added {} samples; model written to {}", labels.len(), cmd.out.display());
    Ok(())
}

#[derive(Serialize)]
struct ReconLine<'a> {
    command: &'static str,
    input: String,
    point: &'a syhd_core::pipeline::ReconPoint,
}

pub fn recon_error(cmd: &ReconCmd) -> Result<(), CliError> {
    let (x, input) = match (cmd.dataset, &cmd.input) {
        (Some(which), _) => (load_named(which, &cmd.data_dir)?.train.features, format!("{which:?} training split")),
        (None, Some(path)) => (read_labeled(path, cmd.labels.as_deref())?.features, path.display().to_string()),
        (None, None) => return Err(CliError::Usage("give --input or --dataset".into())),
    };
    let points = reconstruction_sweep(x.view(), &cmd.dh_list, &cmd.q_list, &cmd.seeds)?;
    let records: Vec<Record> = points.iter().map(|p| p.record()).collect();
    let lines: Vec<ReconLine> =
        points.iter().map(|point| ReconLine { command: "recon-error", input: input.clone(), point }).collect();
    if cmd.output.csv.is_none() {
        write_records_csv(&records, io::stdout().lock())
            .map_err(|source| CliError::Csv { path: "<stdout>".into(), source })?;
    }
    write_outputs(&cmd.output, &lines, &records)
}

#[derive(Serialize)]
struct ExperimentLine<'a> {
    command: &'static str,
    data: &'a DataArgs,
    result: &'a ExperimentResult,
}

fn finish_experiments(
    command: &'static str,
    data: &DataArgs,
    results: &[ExperimentResult],
    output: &OutputArgs,
) -> Result<(), CliError> {
    println!("{:<10} {:>7} {:>4} {:>6} {:>9} {:>9} {:>9}", "kind", "dh", "q", "ratio", "mean", "min", "max");
    for r in results {
        let s = &r.spec;
        println!(
            "{:<10} {:>7} {:>4} {:>6} {:>9.4} {:>9.4} {:>9.4}",
            s.kind.name(),
            s.dh,
            s.q,
            s.ratio,
            r.mean,
            r.min,
            r.max
        );
    }
    let lines: Vec<ExperimentLine> = results.iter().map(|result| ExperimentLine { command, data, result }).collect();
    let records: Vec<Record> = results.iter().flat_map(ExperimentResult::records).collect();
    write_outputs(output, &lines, &records)
}

pub fn sweep(cmd: &SweepCmd) -> Result<(), CliError> {
    let data = cmd.data.load_splits()?;
    let name = cmd.data.name();
    let mut results = Vec::new();
    for &kind in &cmd.kinds {
        for &dh in &cmd.dh_list {
            for &q in &cmd.q_list {
                let spec = syhd_core::pipeline::ExperimentSpec {
                    repetitions: cmd.repetitions,
                    ..cmd.train.spec(&name, kind, dh, q)
                };
                info!("sweep point {kind} d^h={dh} q={q}");
                results.push(run_experiment(&spec, &data)?);
            }
        }
    }
    finish_experiments("sweep", &cmd.data, &results, &cmd.output)
}

pub fn incremental(cmd: &IncrementalCmd) -> Result<(), CliError> {
    let data = cmd.data.load_splits()?;
    let name = cmd.data.name();
    let mut results = Vec::new();
    for &kind in &cmd.kinds {
        for &ratio in &cmd.ratios {
            let spec = syhd_core::pipeline::ExperimentSpec {
                ratio,
                repetitions: cmd.repetitions,
                ..cmd.train.spec(&name, kind, cmd.dh.unwrap_or(default_dh(kind)), cmd.q)
            };
            info!("incremental {kind} ratio={ratio}");
            results.push(run_incremental(&spec, &data)?);
        }
    }
    finish_experiments("incremental", &cmd.data, &results, &cmd.output)
}

pub fn seed_sweep_cmd(cmd: &SeedSweepCmd) -> Result<(), CliError> {
    let data = cmd.data.load_splits()?;
    let spec = cmd.train.spec(&cmd.data.name(), cmd.kind, cmd.dh.unwrap_or(default_dh(cmd.kind)), cmd.q);
    let result = seed_sweep(&spec, &data, cmd.k)?;
    println!("spread {:.4} over {} seeds", result.spread(), result.seeds.len());
    finish_experiments("seed-sweep", &cmd.data, &[result], &cmd.output)
}

/// Config file values with command-line overrides applied.
fn perf_config(cmd: &PerfsimCmd) -> Result<PerfConfig, CliError> {
    let text = match &cmd.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?,
        None => String::new(),
    };
    let mut cfg = PerfConfig::parse(&text)?;
    if let Some(layers) = &cmd.layers {
        cfg.layers = layers.clone();
    }
    cfg.pe_budget = cmd.pe_budget.unwrap_or(cfg.pe_budget);
    cfg.clock_mhz = cmd.clock_mhz.unwrap_or(cfg.clock_mhz);
    cfg.dram_bandwidth = cmd.dram_bandwidth.or(cfg.dram_bandwidth);
    if cmd.w_sys.is_some() {
        (cfg.w_sys, cfg.h_sys) = (cmd.w_sys, cmd.h_sys);
    }
    let any_hd = cmd.dh.is_some() || cmd.dl.is_some() || cmd.classes.is_some();
    if any_hd || cfg.hd.is_some() {
        let base = cfg.hd.take();
        let pick = |flag: Option<usize>, from: Option<usize>, name: &str| {
            flag.or(from).ok_or_else(|| CliError::Usage(format!("HD estimate needs --{name}")))
        };
        let mut hd = HdSection {
            dh: pick(cmd.dh, base.as_ref().map(|h| h.dh), "dh")?,
            dl: pick(cmd.dl, base.as_ref().map(|h| h.dl), "dl")?,
            classes: pick(cmd.classes, base.as_ref().map(|h| h.classes), "classes")?,
            fanin: base.as_ref().map_or(16, |h| h.fanin),
            mode: base.as_ref().map_or("parallel".into(), |h| h.mode.clone()),
            chunk_width: base.as_ref().and_then(|h| h.chunk_width),
            adder_limit: base.as_ref().and_then(|h| h.adder_limit),
        };
        hd.fanin = cmd.fanin.unwrap_or(hd.fanin);
        if let Some(mode) = cmd.hd_mode {
            hd.mode = match mode {
                HdModeArg::Parallel => "parallel".into(),
                HdModeArg::Sequential => "sequential".into(),
            };
        }
        hd.chunk_width = cmd.chunk_width.or(hd.chunk_width);
        hd.adder_limit = cmd.adder_limit.or(hd.adder_limit);
        cfg.hd = Some(hd);
    }
    Ok(cfg)
}

pub fn perfsim(cmd: &PerfsimCmd) -> Result<(), CliError> {
    let cfg = perf_config(cmd)?;
    let hd = cfg.hd_pipe()?;
    let nn = if cfg.layers.len() >= 2 {
        let shape = cfg.shape()?;
        let cands = match cfg.pinned()? {
            Some(p) => [LoopOrder::OutputMajor, LoopOrder::InputMajor]
                .map(|order| Candidate { w_sys: p.w_sys, h_sys: p.h_sys, order })
                .to_vec(),
            None => candidates(cfg.pe_budget),
        };
        let base = cfg.systolic();
        Some(compile(&shape, &base, &cands)?)
    } else {
        None
    };
    if nn.is_none() && hd.is_none() {
        return Err(CliError::Usage("nothing to estimate: give --layers and/or the HD settings".into()));
    }
    let rows = report(nn.as_ref(), hd.as_ref(), cfg.clock_mhz)?;
    print!("{}", format_report(&rows));
    if let Some(path) = &cmd.csv {
        write_report_csv(&rows, create(path)?).map_err(|source| CliError::Csv { path: path.clone(), source })?;
    }
    Ok(())
}
