//! Labeled feature tables.
//!
//! Two layouts are read: CSV rows of features with the label in the last
//! column, and a whitespace-separated feature file paired with a label file
//! holding one label per line (the UCI HAR layout). Labels must be integral
//! (`3` and `3.` are both accepted) and are remapped to dense `1..=c` in
//! ascending order of their original values; the original values travel
//! with the data.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}:{line}: expected {expected} columns, found {found}")]
    Ragged { path: PathBuf, line: u64, expected: usize, found: usize },
    #[error("{path}: no rows")]
    Empty { path: PathBuf },
    #[error("{0}")]
    Mismatch(String),
    #[error("label {0} has no class in this dataset")]
    UnknownLabel(i64),
    #[error("none of these paths exist: {0}")]
    NotFound(String),
}

impl DatasetError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    fn parse(path: &Path, line: u64, message: impl Into<String>) -> Self {
        Self::Parse { path: path.to_path_buf(), line, message: message.into() }
    }
}

/// Features with original (unmapped) labels, as read from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub features: Array2<f64>,
    pub labels: Vec<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Sorted distinct original labels; class `k` is `values[k - 1]`.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LabelMap {
    values: Vec<i64>,
}

impl LabelMap {
    pub fn fit<'a>(tables: impl IntoIterator<Item = &'a [i64]>) -> Self {
        let mut values: Vec<i64> = tables.into_iter().flatten().copied().collect();
        values.sort_unstable();
        values.dedup();
        Self { values }
    }

    pub fn from_values(mut values: Vec<i64>) -> Self {
        values.sort_unstable();
        values.dedup();
        Self { values }
    }

    pub fn classes(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn class_of(&self, original: i64) -> Result<usize, DatasetError> {
        self.values.binary_search(&original).map(|i| i + 1).map_err(|_| DatasetError::UnknownLabel(original))
    }

    pub fn original(&self, class: usize) -> Option<i64> {
        class.checked_sub(1).and_then(|i| self.values.get(i)).copied()
    }
}

/// Feature matrix with labels in `1..=c`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub label_map: LabelMap,
    pub split: Split,
}

impl Dataset {
    pub fn new(raw: RawTable, label_map: LabelMap, split: Split) -> Result<Self, DatasetError> {
        if raw.features.nrows() != raw.labels.len() {
            return Err(DatasetError::Mismatch(format!(
                "{} feature rows but {} labels",
                raw.features.nrows(),
                raw.labels.len()
            )));
        }
        let labels = raw.labels.iter().map(|&l| label_map.class_of(l)).collect::<Result<_, _>>()?;
        Ok(Self { features: raw.features, labels, label_map, split })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn classes(&self) -> usize {
        self.label_map.classes()
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            label_map: self.label_map.clone(),
            split: self.split,
        }
    }

    pub fn original_labels(&self) -> Vec<i64> {
        self.labels.iter().map(|&k| self.label_map.original(k).expect("labels are mapped")).collect()
    }

    pub fn to_raw(&self) -> RawTable {
        RawTable { features: self.features.clone(), labels: self.original_labels() }
    }
}

/// Train and test splits sharing one label map.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSplits {
    pub train: Dataset,
    pub test: Dataset,
}

impl DataSplits {
    pub fn from_raw(train: RawTable, test: RawTable) -> Result<Self, DatasetError> {
        if train.features.ncols() != test.features.ncols() {
            return Err(DatasetError::Mismatch(format!(
                "train has {} features, test has {}",
                train.features.ncols(),
                test.features.ncols()
            )));
        }
        let map = LabelMap::fit([train.labels.as_slice(), test.labels.as_slice()]);
        Ok(Self { train: Dataset::new(train, map.clone(), Split::Train)?, test: Dataset::new(test, map, Split::Test)? })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DataFormat {
    /// Features then label on each row.
    Csv,
    /// Whitespace-separated features; labels in the given file.
    FeatureLabel { labels: PathBuf },
}

/// Reads one table and maps its labels on their own.
pub fn load_dataset(path: &Path, format: &DataFormat, split: Split) -> Result<Dataset, DatasetError> {
    let raw = read_table(path, format)?;
    let map = LabelMap::fit([raw.labels.as_slice()]);
    Dataset::new(raw, map, split)
}

pub fn read_table(path: &Path, format: &DataFormat) -> Result<RawTable, DatasetError> {
    match format {
        DataFormat::Csv => read_csv(path),
        DataFormat::FeatureLabel { labels } => read_feature_label(path, labels),
    }
}

fn parse_value(path: &Path, line: u64, column: usize, cell: &str) -> Result<f64, DatasetError> {
    let v: f64 = cell
        .parse()
        .map_err(|_| DatasetError::parse(path, line, format!("column {}: not a number: {cell:?}", column + 1)))?;
    if !v.is_finite() {
        return Err(DatasetError::parse(path, line, format!("column {}: non-finite value {cell:?}", column + 1)));
    }
    Ok(v)
}

fn parse_label(path: &Path, line: u64, cell: &str) -> Result<i64, DatasetError> {
    let v: f64 =
        cell.parse().map_err(|_| DatasetError::parse(path, line, format!("label is not a number: {cell:?}")))?;
    if !v.is_finite() || v.fract() != 0.0 || v.abs() > 2f64.powi(53) {
        return Err(DatasetError::parse(path, line, format!("label is not an integer: {cell:?}")));
    }
    Ok(v as i64)
}

fn finish(path: &Path, rows: Vec<f64>, labels: Vec<i64>, width: usize) -> Result<RawTable, DatasetError> {
    if labels.is_empty() {
        return Err(DatasetError::Empty { path: path.to_path_buf() });
    }
    let features = Array2::from_shape_vec((labels.len(), width), rows).expect("row widths checked");
    Ok(RawTable { features, labels })
}

/// Comma-separated rows, no header, cells trimmed, label last.
pub fn read_csv(path: &Path) -> Result<RawTable, DatasetError> {
    let (rows, labels, width) = read_csv_rows(path, true)?;
    finish(path, rows, labels, width)
}

/// Comma-separated rows of features only.
pub fn read_unlabeled_csv(path: &Path) -> Result<Array2<f64>, DatasetError> {
    let (rows, _, width) = read_csv_rows(path, false)?;
    if rows.is_empty() {
        return Err(DatasetError::Empty { path: path.to_path_buf() });
    }
    Ok(Array2::from_shape_vec((rows.len() / width, width), rows).expect("row widths checked"))
}

/// Row-major cells, labels (empty unless `labelled`) and feature width.
fn read_csv_rows(path: &Path, labelled: bool) -> Result<(Vec<f64>, Vec<i64>, usize), DatasetError> {
    let file = fs::File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(file);
    let (mut rows, mut labels, mut width) = (Vec::new(), Vec::new(), None);
    let label_cols = usize::from(labelled);
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(DatasetError::parse(path, line, e.to_string()));
            }
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(DatasetError::Ragged { path: path.to_path_buf(), line, expected, found: record.len() });
        }
        if expected < 1 + label_cols {
            return Err(DatasetError::parse(path, line, "need at least one feature and a label"));
        }
        for (j, cell) in record.iter().take(expected - label_cols).enumerate() {
            rows.push(parse_value(path, line, j, cell)?);
        }
        if labelled {
            labels.push(parse_label(path, line, &record[expected - 1])?);
        }
    }
    Ok((rows, labels, width.map_or(0, |w| w - label_cols)))
}

fn read_text(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))
}

/// Whitespace-separated feature rows plus one label per line.
pub fn read_feature_label(features: &Path, labels: &Path) -> Result<RawTable, DatasetError> {
    let text = read_text(features)?;
    let (mut rows, mut width, mut n) = (Vec::new(), None, 0usize);
    for (i, line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells.is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(cells.len());
        if cells.len() != expected {
            return Err(DatasetError::Ragged {
                path: features.to_path_buf(),
                line: line_no,
                expected,
                found: cells.len(),
            });
        }
        for (j, cell) in cells.iter().enumerate() {
            rows.push(parse_value(features, line_no, j, cell)?);
        }
        n += 1;
    }
    let text = read_text(labels)?;
    let mut ys = Vec::with_capacity(n);
    for (i, line) in text.lines().enumerate() {
        let cell = line.trim();
        if !cell.is_empty() {
            ys.push(parse_label(labels, i as u64 + 1, cell)?);
        }
    }
    if ys.len() != n {
        return Err(DatasetError::Mismatch(format!(
            "{} has {n} rows but {} has {} labels",
            features.display(),
            labels.display(),
            ys.len()
        )));
    }
    if n == 0 {
        return Err(DatasetError::Empty { path: features.to_path_buf() });
    }
    finish(features, rows, ys, width.unwrap_or(0))
}

/// Writes features and original labels as CSV. Floats use the shortest
/// representation that parses back to the same value.
pub fn save_csv(data: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let file = fs::File::create(path).map_err(|e| DatasetError::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let originals = data.original_labels();
    for (row, label) in data.features.rows().into_iter().zip(originals) {
        let mut line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        line.push(label.to_string());
        writeln!(out, "{}", line.join(",")).map_err(|e| DatasetError::io(path, e))?;
    }
    out.flush().map_err(|e| DatasetError::io(path, e))
}

fn first_existing(candidates: &[PathBuf]) -> Result<PathBuf, DatasetError> {
    candidates.iter().find(|p| p.exists()).cloned().ok_or_else(|| {
        DatasetError::NotFound(candidates.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))
    })
}

/// ISOLET from the UCI files `isolet1+2+3+4.data` (train) and
/// `isolet5.data` (test), found in `dir` or `dir/isolet`.
pub fn load_isolet(dir: &Path) -> Result<DataSplits, DatasetError> {
    let root = first_existing(&[dir.join("isolet").join("isolet1+2+3+4.data"), dir.join("isolet1+2+3+4.data")])?;
    let root = root.parent().expect("file has a parent").to_path_buf();
    DataSplits::from_raw(read_csv(&root.join("isolet1+2+3+4.data"))?, read_csv(&root.join("isolet5.data"))?)
}

/// UCI HAR from `UCI HAR Dataset/{train,test}/{X,y}_*.txt`, found in `dir`,
/// `dir/har` or directly as `dir/{train,test}`.
pub fn load_har(dir: &Path) -> Result<DataSplits, DatasetError> {
    let marker = Path::new("train").join("X_train.txt");
    let root = first_existing(&[
        dir.join("UCI HAR Dataset").join(&marker),
        dir.join("har").join("UCI HAR Dataset").join(&marker),
        dir.join("har").join(&marker),
        dir.join(&marker),
    ])?;
    let root = root.parent().and_then(Path::parent).expect("marker is two levels deep").to_path_buf();
    let split = |name: &str| {
        let d = root.join(name);
        read_feature_label(&d.join(format!("X_{name}.txt")), &d.join(format!("y_{name}.txt")))
    };
    DataSplits::from_raw(split("train")?, split("test")?)
}
