//! EMB1 embedding dataset container.
//!
//! Byte layout, all integers little-endian:
//!
//! | field      | size                                   |
//! |------------|----------------------------------------|
//! | magic      | 4 bytes, ASCII `EMB1`                  |
//! | header_len | u32                                    |
//! | header     | `header_len` bytes of UTF-8 JSON       |
//! | features   | `num_samples × dim` binary32, row-major |
//! | labels     | `num_samples` u32                      |
//! | logits     | `num_samples × num_classes` binary32, present iff `has_logits` |
//!
//! The JSON header carries `task`, `language`, `split`, `dim`,
//! `num_classes`, `num_samples`, `has_logits` and `provenance`.
//!
//! Datasets live at `<task>/<language>/<split>.emb1`; the source mean vector
//! lives at `<task>/mean_src.emb1` as a one-row dataset.

use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{pairwise_row_sum, FeatureMatrix};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const MEAN_FILE_NAME: &str = "mean_src.emb1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!(
                "unknown split {other:?} (expected train, dev or test)"
            ))),
        }
    }
}

/// Features, labels and optional classifier logits for one task/language/split.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    pub task_name: String,
    pub language: String,
    pub split: Split,
    pub dim: usize,
    pub num_classes: usize,
    /// Row-major `num_samples × dim`.
    pub features: Vec<f32>,
    pub labels: Vec<u32>,
    /// Row-major `num_samples × num_classes`.
    pub logits: Option<Vec<f32>>,
    pub provenance: String,
}

impl EmbeddingDataset {
    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn has_logits(&self) -> bool {
        self.logits.is_some()
    }

    pub fn feature_row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn logit_row(&self, i: usize) -> Option<&[f32]> {
        self.logits
            .as_ref()
            .map(|l| &l[i * self.num_classes..(i + 1) * self.num_classes])
    }

    /// Short identity string, `task/language/split`.
    pub fn identity(&self) -> String {
        format!("{}/{}/{}", self.task_name, self.language, self.split)
    }

    /// Row indices grouped by class, ascending within each class.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            if let Some(bucket) = out.get_mut(l as usize) {
                bucket.push(i);
            }
        }
        out
    }

    /// Gathers the given rows as a matrix in scalar type `T`.
    pub fn gather<T: Scalar>(&self, indices: &[usize]) -> Result<FeatureMatrix<T>> {
        FeatureMatrix::gather_f32(&self.features, self.dim, indices)
    }

    /// Checks every dataset invariant.
    pub fn validate(&self, allow_empty_classes: bool) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invariant("dim", "must be positive"));
        }
        if self.num_classes == 0 {
            return Err(Error::invariant("num_classes", "must be positive"));
        }
        let n = self.labels.len();
        if self.features.len() != n * self.dim {
            return Err(Error::invariant(
                "features",
                format!(
                    "{} values do not form {} rows of dim {}",
                    self.features.len(),
                    n,
                    self.dim
                ),
            ));
        }
        if let Some(logits) = &self.logits {
            if logits.len() != n * self.num_classes {
                return Err(Error::invariant(
                    "logits",
                    format!(
                        "{} values do not form {} rows of {} classes",
                        logits.len(),
                        n,
                        self.num_classes
                    ),
                ));
            }
            if let Some(pos) = logits.iter().position(|v| !v.is_finite()) {
                return Err(Error::invariant(
                    "logits",
                    format!("non-finite value at flat index {pos}"),
                ));
            }
        }
        if let Some(pos) = self.features.iter().position(|v| !v.is_finite()) {
            return Err(Error::invariant(
                "features",
                format!("non-finite value at flat index {pos}"),
            ));
        }
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            let l = l as usize;
            if l >= self.num_classes {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    num_classes: self.num_classes,
                });
            }
            counts[l] += 1;
        }
        if !allow_empty_classes {
            if let Some(c) = counts.iter().position(|&k| k == 0) {
                return Err(Error::invariant(
                    "labels",
                    format!("class {c} has no samples"),
                ));
            }
        }
        Ok(())
    }

    fn header(&self) -> Header {
        Header {
            task: self.task_name.clone(),
            language: self.language.clone(),
            split: self.split,
            dim: self.dim,
            num_classes: self.num_classes,
            num_samples: self.num_samples(),
            has_logits: self.has_logits(),
            provenance: self.provenance.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    task: String,
    language: String,
    split: Split,
    dim: usize,
    num_classes: usize,
    num_samples: usize,
    has_logits: bool,
    provenance: String,
}

/// Options for [`read_emb1_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Accept datasets in which some class has no samples.
    pub allow_empty_classes: bool,
}

/// Validates `dataset` and writes it in EMB1 layout. Nothing is written if
/// validation fails.
pub fn write_emb1<W: Write>(dataset: &EmbeddingDataset, mut out: W) -> Result<()> {
    dataset.validate(true)?;
    let header = serde_json::to_vec(&dataset.header()).map_err(|e| Error::Header(e.to_string()))?;
    let header_len =
        u32::try_from(header.len()).map_err(|_| Error::Header("header too large".into()))?;

    out.write_all(MAGIC)?;
    out.write_all(&header_len.to_le_bytes())?;
    out.write_all(&header)?;
    let mut buf = Vec::with_capacity(
        4 * (dataset.features.len()
            + dataset.labels.len()
            + dataset.logits.as_ref().map_or(0, Vec::len)),
    );
    for v in &dataset.features {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for l in &dataset.labels {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    if let Some(logits) = &dataset.logits {
        for v in logits {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

/// Reads and validates an EMB1 stream with default options.
pub fn read_emb1<R: Read>(source: R) -> Result<EmbeddingDataset> {
    read_emb1_with(source, ReadOptions::default())
}

pub fn read_emb1_with<R: Read>(mut source: R, options: ReadOptions) -> Result<EmbeddingDataset> {
    let mut magic = [0u8; 4];
    read_prefix(&mut source, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let mut len_bytes = [0u8; 4];
    read_prefix(&mut source, &mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    read_prefix(&mut source, &mut header_bytes)?;
    let header: Header =
        serde_json::from_slice(&header_bytes).map_err(|e| Error::Header(e.to_string()))?;
    if header.dim == 0 {
        return Err(Error::invariant("dim", "must be positive"));
    }
    if header.num_classes == 0 {
        return Err(Error::invariant("num_classes", "must be positive"));
    }

    let mut payload = Vec::new();
    source.read_to_end(&mut payload)?;
    let n = header.num_samples;
    let label_bytes = 4 * n;
    let logit_bytes = if header.has_logits {
        4 * n * header.num_classes
    } else {
        0
    };
    let expected = 4 * n * header.dim + label_bytes + logit_bytes;
    if payload.len() != expected {
        return Err(classify_size_error(
            header.dim,
            n,
            label_bytes + logit_bytes,
            expected,
            payload.len(),
        ));
    }

    let (feature_bytes, rest) = payload.split_at(4 * n * header.dim);
    let (label_slice, logit_slice) = rest.split_at(label_bytes);
    let features = decode_f32(feature_bytes);
    let labels = label_slice
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let logits = header.has_logits.then(|| decode_f32(logit_slice));

    let dataset = EmbeddingDataset {
        task_name: header.task,
        language: header.language,
        split: header.split,
        dim: header.dim,
        num_classes: header.num_classes,
        features,
        labels,
        logits,
        provenance: header.provenance,
    };
    dataset.validate(options.allow_empty_classes)?;
    Ok(dataset)
}

// A short payload whose feature block is a whole number of rows for some
// other width is reported as a dimension mismatch, anything else as
// truncation (or trailing bytes when too long).
fn classify_size_error(
    header_dim: usize,
    num_samples: usize,
    non_feature_bytes: usize,
    expected: usize,
    actual: usize,
) -> Error {
    if num_samples > 0 && actual > non_feature_bytes {
        let feature_bytes = actual - non_feature_bytes;
        if feature_bytes.is_multiple_of(4 * num_samples) {
            let payload_dim = feature_bytes / (4 * num_samples);
            if payload_dim != header_dim {
                return Error::PayloadDimMismatch {
                    header_dim,
                    payload_dim,
                };
            }
        }
    }
    if actual < expected {
        Error::Truncated { expected, actual }
    } else {
        Error::TrailingBytes { expected, actual }
    }
}

fn read_prefix<R: Read>(source: &mut R, buf: &mut [u8]) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..])? {
            0 => {
                return Err(Error::Truncated {
                    expected: buf.len(),
                    actual: filled,
                })
            }
            k => filled += k,
        }
    }
    Ok(())
}

fn decode_f32(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

pub fn write_emb1_file(dataset: &EmbeddingDataset, path: impl AsRef<Path>) -> Result<()> {
    dataset.validate(true)?;
    if let Some(parent) = path.as_ref().parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    write_emb1(dataset, BufWriter::new(fs::File::create(path)?))
}

pub fn read_emb1_file(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    read_emb1(BufReader::new(fs::File::open(path)?))
}

/// `<split>.emb1`
pub fn dataset_file_name(split: Split) -> String {
    format!("{}.emb1", split.as_str())
}

/// `<root>/<task>/<language>/<split>.emb1`
pub fn dataset_path(root: &Path, task: &str, language: &str, split: Split) -> PathBuf {
    root.join(task)
        .join(language)
        .join(dataset_file_name(split))
}

/// `<root>/<task>/mean_src.emb1`
pub fn mean_path(root: &Path, task: &str) -> PathBuf {
    root.join(task).join(MEAN_FILE_NAME)
}

/// Mean feature vector of the source-language train/dev data.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanVector<T> {
    values: Vec<T>,
    provenance: String,
}

impl<T: Scalar> MeanVector<T> {
    pub fn new(values: Vec<T>, provenance: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invariant("dim", "must be positive"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mean vector"));
        }
        Ok(Self {
            values,
            provenance: provenance.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn cast<U: Scalar>(&self) -> MeanVector<U> {
        MeanVector {
            values: self
                .values
                .iter()
                .map(|v| U::lit(v.to_f64_value()))
                .collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Packs the mean into a one-row dataset (label 0, one class, split train).
    pub fn to_dataset(&self, task: &str, language: &str) -> EmbeddingDataset {
        EmbeddingDataset {
            task_name: task.to_string(),
            language: language.to_string(),
            split: Split::Train,
            dim: self.dim(),
            num_classes: 1,
            features: self
                .values
                .iter()
                .map(|v| v.to_f64_value() as f32)
                .collect(),
            labels: vec![0],
            logits: None,
            provenance: self.provenance.clone(),
        }
    }

    pub fn from_dataset(dataset: &EmbeddingDataset) -> Result<Self> {
        if dataset.num_samples() != 1 {
            return Err(Error::invariant(
                "num_samples",
                format!(
                    "a mean-vector file holds exactly one row, found {}",
                    dataset.num_samples()
                ),
            ));
        }
        Self::new(
            dataset
                .features
                .iter()
                .map(|&v| T::from_f32_value(v))
                .collect(),
            dataset.provenance.clone(),
        )
    }
}

/// Arithmetic mean over every feature row of every dataset, accumulated in
/// `f64` with pairwise summation.
pub fn compute_mean_vector(datasets: &[&EmbeddingDataset]) -> Result<MeanVector<f64>> {
    let first = datasets.first().ok_or(Error::Empty {
        what: "dataset list",
    })?;
    let dim = first.dim;
    for d in datasets {
        if d.dim != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: d.dim,
            });
        }
    }
    let rows: Vec<&[f32]> = datasets
        .iter()
        .flat_map(|d| d.features.chunks_exact(dim))
        .collect();
    if rows.is_empty() {
        return Err(Error::Empty {
            what: "combined sample set",
        });
    }
    let n = rows.len() as f64;
    let values = pairwise_row_sum::<f32, f64>(&rows, dim)
        .into_iter()
        .map(|s| s / n)
        .collect();
    let provenance = datasets
        .iter()
        .map(|d| d.identity())
        .collect::<Vec<_>>()
        .join("+");
    MeanVector::new(values, format!("mean of {provenance}"))
}
