//! Gaussian-mixture embedding datasets with a controllable language shift,
//! and the Bayes-optimal classifier for them.
//!
//! Class means are the vertices of a regular simplex on the first
//! `num_classes` coordinates, scaled so every pair of means is
//! `class_separation · noise_sigma` apart. Samples are the class mean plus
//! isotropic Gaussian noise of standard deviation `noise_sigma`. The target
//! language adds one fixed offset of norm `shift_vector_norm · noise_sigma`
//! in a uniformly random direction to every sample.
//!
//! Stored logits come from the source Bayes classifier
//! `(μ_c · x − ‖μ_c‖² / 2) / σ²`, so zero-shot rows behave like a model
//! fitted on the source language only.
//!
//! Random streams (see [`crate::rng`]), all keyed by `seed`: stream 0 draws
//! the offset direction; streams 1–5 draw source train, dev, test, then
//! target dev, test. Labels cycle `0, 1, …, C−1, 0, …` within each split.

use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, FeatureMatrix};
use crate::rng::keyed_stream;
use crate::store::{
    compute_mean_vector, dataset_path, mean_path, write_emb1_file, EmbeddingDataset, MeanVector,
    Split,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

fn default_task() -> String {
    "synthetic".into()
}
fn default_source() -> String {
    "en".into()
}
fn default_target() -> String {
    "xx".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(default = "default_task")]
    pub task: String,
    #[serde(default = "default_source")]
    pub source_language: String,
    #[serde(default = "default_target")]
    pub target_language: String,
    pub dim: usize,
    pub num_classes: usize,
    /// Distance between class means, in units of `noise_sigma`.
    pub class_separation: f64,
    /// Norm of the target-language offset, in units of `noise_sigma`.
    pub shift_vector_norm: f64,
    pub per_split_counts: SplitCounts,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_classes < 2 {
            return bad(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            ));
        }
        if self.dim < self.num_classes {
            return bad(format!(
                "dim ({}) must be at least num_classes ({})",
                self.dim, self.num_classes
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma > 0.0) {
            return bad(format!(
                "noise_sigma must be positive, got {}",
                self.noise_sigma
            ));
        }
        if !(self.class_separation.is_finite() && self.class_separation >= 0.0) {
            return bad(format!(
                "class_separation must be non-negative, got {}",
                self.class_separation
            ));
        }
        if !(self.shift_vector_norm.is_finite() && self.shift_vector_norm >= 0.0) {
            return bad(format!(
                "shift_vector_norm must be non-negative, got {}",
                self.shift_vector_norm
            ));
        }
        let c = self.per_split_counts;
        if c.train < self.num_classes || c.dev < self.num_classes || c.test < self.num_classes {
            return bad("every split needs at least one sample per class".into());
        }
        for tag in [&self.task, &self.source_language, &self.target_language] {
            if tag.is_empty() || tag.contains(['/', '\\']) {
                return bad(format!("invalid name {tag:?}"));
            }
        }
        if self.source_language == self.target_language {
            return bad("source and target languages must differ".into());
        }
        Ok(())
    }
}

/// The true generating parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    /// `num_classes` rows of length `dim`.
    pub class_means: Vec<Vec<f64>>,
    /// Offset added to every target-language sample.
    pub offset: Vec<f64>,
    pub sigma: f64,
}

impl OracleParams {
    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    /// Parameters of the target-language mixture (means moved by the offset).
    pub fn shifted(&self) -> OracleParams {
        OracleParams {
            class_means: self
                .class_means
                .iter()
                .map(|m| m.iter().zip(&self.offset).map(|(a, b)| a + b).collect())
                .collect(),
            offset: vec![0.0; self.dim()],
            sigma: self.sigma,
        }
    }
}

/// Maximum-likelihood class of each row under the mixture `params`, which
/// for equal-variance isotropic Gaussians is the nearest true mean (lowest
/// index on ties).
pub fn bayes_assign(params: &OracleParams, x: &FeatureMatrix<f64>) -> Result<Vec<usize>> {
    x.check_dim(params.dim())?;
    Ok(x.iter_rows()
        .map(|row| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, m) in params.class_means.iter().enumerate() {
                let d: f64 = row.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    pub source_train: EmbeddingDataset,
    pub source_dev: EmbeddingDataset,
    pub source_test: EmbeddingDataset,
    pub target_dev: EmbeddingDataset,
    pub target_test: EmbeddingDataset,
    /// Mean of source train and dev.
    pub mean: MeanVector<f64>,
    pub oracle: OracleParams,
}

fn simplex_means(spec: &SyntheticSpec) -> Vec<Vec<f64>> {
    let c = spec.num_classes;
    let scale = spec.class_separation * spec.noise_sigma / std::f64::consts::SQRT_2;
    (0..c)
        .map(|k| {
            let mut m = vec![0.0; spec.dim];
            for (j, v) in m.iter_mut().enumerate().take(c) {
                let e = if j == k { 1.0 } else { 0.0 };
                *v = scale * (e - 1.0 / c as f64);
            }
            m
        })
        .collect()
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let means = simplex_means(spec);

    let mut rng = keyed_stream(spec.seed, 0);
    let mut direction: Vec<f64> = (0..spec.dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let norm = dot(&direction, &direction).sqrt();
    let length = spec.shift_vector_norm * spec.noise_sigma;
    direction.iter_mut().for_each(|v| *v *= length / norm);
    let oracle = OracleParams {
        class_means: means,
        offset: direction,
        sigma: spec.noise_sigma,
    };
    let provenance = serde_json::to_string(spec).map_err(|e| Error::Header(e.to_string()))?;

    let counts = spec.per_split_counts;
    let make = |stream: u64, split: Split, n: usize, shifted: bool| {
        let language = if shifted {
            &spec.target_language
        } else {
            &spec.source_language
        };
        sample_split(
            spec,
            &oracle,
            stream,
            split,
            n,
            shifted,
            language,
            &provenance,
        )
    };
    let source_train = make(1, Split::Train, counts.train, false);
    let source_dev = make(2, Split::Dev, counts.dev, false);
    let source_test = make(3, Split::Test, counts.test, false);
    let target_dev = make(4, Split::Dev, counts.dev, true);
    let target_test = make(5, Split::Test, counts.test, true);
    let mean = compute_mean_vector(&[&source_train, &source_dev])?;

    Ok(SyntheticData {
        spec: spec.clone(),
        source_train,
        source_dev,
        source_test,
        target_dev,
        target_test,
        mean,
        oracle,
    })
}

#[allow(clippy::too_many_arguments)]
fn sample_split(
    spec: &SyntheticSpec,
    oracle: &OracleParams,
    stream: u64,
    split: Split,
    n: usize,
    shifted: bool,
    language: &str,
    provenance: &str,
) -> EmbeddingDataset {
    let c = spec.num_classes;
    let mut rng = keyed_stream(spec.seed, stream);
    let mut features = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    let mut logits = Vec::with_capacity(n * c);
    let mut row = vec![0.0f64; spec.dim];
    let inv_var = 1.0 / (spec.noise_sigma * spec.noise_sigma);
    for i in 0..n {
        let label = i % c;
        for (j, v) in row.iter_mut().enumerate() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let shift = if shifted { oracle.offset[j] } else { 0.0 };
            // round through binary32 so logits see the stored values
            *v = (oracle.class_means[label][j] + shift + spec.noise_sigma * noise) as f32 as f64;
        }
        features.extend(row.iter().map(|&v| v as f32));
        labels.push(label as u32);
        for m in &oracle.class_means {
            let logit = (dot(m, &row) - 0.5 * dot(m, m)) * inv_var;
            logits.push(logit as f32);
        }
    }
    EmbeddingDataset {
        task_name: spec.task.clone(),
        language: language.to_string(),
        split,
        dim: spec.dim,
        num_classes: c,
        features,
        labels,
        logits: Some(logits),
        provenance: provenance.to_string(),
    }
}

impl SyntheticData {
    /// Writes the standard directory layout under `root` and returns the
    /// paths written.
    pub fn write_to_dir(&self, root: &Path) -> Result<Vec<PathBuf>> {
        let spec = &self.spec;
        let mut written = Vec::new();
        for d in [
            &self.source_train,
            &self.source_dev,
            &self.source_test,
            &self.target_dev,
            &self.target_test,
        ] {
            let path = dataset_path(root, &spec.task, &d.language, d.split);
            write_emb1_file(d, &path)?;
            written.push(path);
        }
        let path = mean_path(root, &spec.task);
        write_emb1_file(
            &self.mean.to_dataset(&spec.task, &spec.source_language),
            &path,
        )?;
        written.push(path);
        Ok(written)
    }
}
