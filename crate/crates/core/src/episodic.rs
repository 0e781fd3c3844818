//! Episodic testing: sample C-way-N-shot episodes, score a method on each,
//! and aggregate mean accuracy with a 95% confidence half-width.
//!
//! Episode `i` is a pure function of `(base_seed, i)` (see [`crate::rng`]).
//! Within an episode the stream is consumed in a fixed order: the `ways`
//! classes are drawn from `0..num_classes` without replacement, then for
//! each selected class in draw order its `shots` support rows, then for each
//! selected class in draw order its `queries_per_class` query rows. Candidate
//! rows of a class are listed in ascending row order before drawing.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{head_predict, train_head, zero_shot_predict, HeadConfig};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::nnfs::{l2_normalize, nnfs_infer, NnfsConfig};
use crate::rng::{episode_stream, sample_without_replacement};
use crate::store::{EmbeddingDataset, MeanVector};

/// z-value of the two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;
/// Fewest episodes after which early stopping may trigger.
pub const MIN_EPISODES_BEFORE_STOP: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub ways: usize,
    pub shots: usize,
    pub queries_per_class: usize,
    pub num_episodes: usize,
    pub base_seed: u64,
    /// Stop once the 95% half-width drops to this value (after at least
    /// [`MIN_EPISODES_BEFORE_STOP`] episodes).
    #[serde(default)]
    pub ci_stop_threshold: Option<f64>,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            ways: 3,
            shots: 5,
            queries_per_class: 15,
            num_episodes: 300,
            base_seed: 42,
            ci_stop_threshold: None,
        }
    }
}

impl EpisodeConfig {
    /// `fs-C.N`: C ways, N shots, 15 queries per class, 300 episodes.
    pub fn few_shot(ways: usize, shots: usize) -> Self {
        Self {
            ways,
            shots,
            ..Self::default()
        }
    }

    /// Parses a preset name such as `fs-3.5` or `fs-2.10`.
    pub fn preset(name: &str) -> Result<Self> {
        let parsed = name.strip_prefix("fs-").and_then(|rest| {
            let (w, s) = rest.split_once('.')?;
            Some((w.parse().ok()?, s.parse().ok()?))
        });
        match parsed {
            Some((ways, shots)) => Ok(Self::few_shot(ways, shots)),
            None => Err(Error::Config(format!(
                "unknown preset {name:?} (expected fs-<ways>.<shots>)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ways < 2 {
            return Err(Error::Config("ways must be at least 2".into()));
        }
        if self.shots < 1 || self.queries_per_class < 1 || self.num_episodes < 1 {
            return Err(Error::Config(
                "shots, queries_per_class and num_episodes must be positive".into(),
            ));
        }
        if let Some(t) = self.ci_stop_threshold {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::Config(format!("invalid ci_stop_threshold {t}")));
            }
        }
        Ok(())
    }

    /// `fs-<ways>.<shots>`
    pub fn label(&self) -> String {
        format!("fs-{}.{}", self.ways, self.shots)
    }
}

/// Row indices of one support/query draw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_index: usize,
    pub selected_classes: Vec<usize>,
    /// `support_indices[k]` are rows of the support split for class
    /// `selected_classes[k]`.
    pub support_indices: Vec<Vec<usize>>,
    pub query_indices: Vec<Vec<usize>>,
}

impl Episode {
    pub fn ways(&self) -> usize {
        self.selected_classes.len()
    }
}

/// Per-class candidate lists for repeated sampling from a fixed split pair.
#[derive(Debug)]
pub struct EpisodeSampler<'a> {
    support_split: &'a EmbeddingDataset,
    query_split: &'a EmbeddingDataset,
    config: EpisodeConfig,
    support_by_class: Vec<Vec<usize>>,
    query_by_class: Vec<Vec<usize>>,
}

impl<'a> EpisodeSampler<'a> {
    pub fn new(
        support_split: &'a EmbeddingDataset,
        query_split: &'a EmbeddingDataset,
        config: EpisodeConfig,
    ) -> Result<Self> {
        config.validate()?;
        if support_split.dim != query_split.dim {
            return Err(Error::DimMismatch {
                expected: support_split.dim,
                actual: query_split.dim,
            });
        }
        if support_split.num_classes != query_split.num_classes {
            return Err(Error::Config(format!(
                "support split has {} classes, query split has {}",
                support_split.num_classes, query_split.num_classes
            )));
        }
        if config.ways > support_split.num_classes {
            return Err(Error::Config(format!(
                "{} ways requested but the dataset has {} classes",
                config.ways, support_split.num_classes
            )));
        }
        let support_by_class = support_split.class_indices();
        let query_by_class = query_split.class_indices();
        let checks = [
            (&support_by_class, support_split, config.shots),
            (&query_by_class, query_split, config.queries_per_class),
        ];
        for (by_class, split, required) in checks {
            for (class, rows) in by_class.iter().enumerate() {
                if rows.len() < required {
                    return Err(Error::InsufficientSamples {
                        class,
                        split: split.identity(),
                        available: rows.len(),
                        required,
                    });
                }
            }
        }
        Ok(Self {
            support_split,
            query_split,
            config,
            support_by_class,
            query_by_class,
        })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn sample(&self, episode_index: usize) -> Episode {
        let mut rng = episode_stream(self.config.base_seed, episode_index as u64);
        let all_classes: Vec<usize> = (0..self.support_split.num_classes).collect();
        let selected = sample_without_replacement(&mut rng, &all_classes, self.config.ways);
        let support_indices = selected
            .iter()
            .map(|&c| {
                sample_without_replacement(&mut rng, &self.support_by_class[c], self.config.shots)
            })
            .collect();
        let query_indices = selected
            .iter()
            .map(|&c| {
                sample_without_replacement(
                    &mut rng,
                    &self.query_by_class[c],
                    self.config.queries_per_class,
                )
            })
            .collect();
        Episode {
            episode_index,
            selected_classes: selected,
            support_indices,
            query_indices,
        }
    }

    pub fn batch<'b>(
        &'b self,
        episode: &'b Episode,
        mean: Option<&'b MeanVector<f64>>,
    ) -> EpisodeBatch<'b> {
        EpisodeBatch {
            episode,
            support_split: self.support_split,
            query_split: self.query_split,
            mean,
        }
    }
}

/// Draws episode `episode_index` for the given splits and configuration.
pub fn sample_episode(
    support_split: &EmbeddingDataset,
    query_split: &EmbeddingDataset,
    config: EpisodeConfig,
    episode_index: usize,
) -> Result<Episode> {
    Ok(EpisodeSampler::new(support_split, query_split, config)?.sample(episode_index))
}

/// Everything a method may look at for one episode.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeBatch<'a> {
    pub episode: &'a Episode,
    pub support_split: &'a EmbeddingDataset,
    pub query_split: &'a EmbeddingDataset,
    pub mean: Option<&'a MeanVector<f64>>,
}

impl EpisodeBatch<'_> {
    /// Support rows, class-major in selected-class order.
    pub fn support_rows(&self) -> Vec<usize> {
        self.episode.support_indices.concat()
    }

    /// Episode-local label (position in `selected_classes`) of each support row.
    pub fn support_local_labels(&self) -> Vec<usize> {
        self.episode
            .support_indices
            .iter()
            .enumerate()
            .flat_map(|(k, rows)| std::iter::repeat_n(k, rows.len()))
            .collect()
    }

    /// Query rows, class-major in selected-class order.
    pub fn query_rows(&self) -> Vec<usize> {
        self.episode.query_indices.concat()
    }

    /// Dataset labels of the query rows.
    pub fn query_true_labels(&self) -> Vec<usize> {
        self.query_rows()
            .into_iter()
            .map(|i| self.query_split.labels[i] as usize)
            .collect()
    }

    pub fn support_features(&self) -> Result<FeatureMatrix<f64>> {
        self.support_split.gather(&self.support_rows())
    }

    pub fn query_features(&self) -> Result<FeatureMatrix<f64>> {
        self.query_split.gather(&self.query_rows())
    }

    /// Maps episode-local labels back to dataset classes.
    pub fn to_dataset_labels(&self, local: &[usize]) -> Vec<usize> {
        local
            .iter()
            .map(|&k| self.episode.selected_classes[k])
            .collect()
    }
}

/// A classifier that can be scored episodically.
pub trait EpisodeMethod: Send + Sync {
    fn name(&self) -> String;

    /// Dataset-level class predicted for each query row, in
    /// [`EpisodeBatch::query_rows`] order.
    fn predict(&self, batch: &EpisodeBatch<'_>) -> Result<Vec<usize>>;
}

/// The built-in methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    ZeroShot,
    Nn,
    NnProto,
    NnNorm,
    NnNormProto,
    HeadFt(HeadConfig),
}

impl Method {
    pub const ALL_NAMES: [&'static str; 6] = [
        "zero-shot",
        "nn",
        "nn+proto",
        "nn+norm",
        "nn+norm+proto",
        "head-ft",
    ];

    pub fn all() -> Vec<Method> {
        Self::ALL_NAMES
            .iter()
            .map(|n| n.parse().expect("known method"))
            .collect()
    }

    pub fn key(&self) -> &'static str {
        match self {
            Method::ZeroShot => "zero-shot",
            Method::Nn => "nn",
            Method::NnProto => "nn+proto",
            Method::NnNorm => "nn+norm",
            Method::NnNormProto => "nn+norm+proto",
            Method::HeadFt(_) => "head-ft",
        }
    }

    pub fn nnfs_config(&self) -> Option<NnfsConfig> {
        match self {
            Method::Nn => Some(NnfsConfig::NN),
            Method::NnProto => Some(NnfsConfig::PROTO_RECT),
            Method::NnNorm => Some(NnfsConfig::NORM),
            Method::NnNormProto => Some(NnfsConfig::NORM_PROTO_RECT),
            Method::ZeroShot | Method::HeadFt(_) => None,
        }
    }

    pub fn requires_mean(&self) -> bool {
        self.nnfs_config().is_some_and(|c| c.use_norm)
    }

    pub fn requires_logits(&self) -> bool {
        matches!(self, Method::ZeroShot)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "zero-shot" => Method::ZeroShot,
            "nn" => Method::Nn,
            "nn+proto" => Method::NnProto,
            "nn+norm" => Method::NnNorm,
            "nn+norm+proto" => Method::NnNormProto,
            "head-ft" => Method::HeadFt(HeadConfig::default()),
            other => {
                return Err(Error::Config(format!(
                    "unknown method {other:?} (expected one of {})",
                    Self::ALL_NAMES.join(", ")
                )))
            }
        })
    }
}

impl EpisodeMethod for Method {
    fn name(&self) -> String {
        self.key().to_string()
    }

    fn predict(&self, batch: &EpisodeBatch<'_>) -> Result<Vec<usize>> {
        match self {
            Method::ZeroShot => {
                Ok(zero_shot_predict(batch.query_split, &batch.query_rows())?.hard_labels)
            }
            Method::HeadFt(cfg) => {
                let support = l2_normalize(&batch.support_features()?)?;
                let query = l2_normalize(&batch.query_features()?)?;
                let labels = batch.support_local_labels();
                let head = train_head(&support, &labels, batch.episode.ways(), *cfg)?;
                Ok(batch.to_dataset_labels(&head_predict(&head, &query)?.hard_labels))
            }
            nn => {
                let config = nn.nnfs_config().expect("nnfs method");
                if config.use_norm && batch.mean.is_none() {
                    return Err(Error::Config(format!(
                        "method {nn} needs the source mean vector"
                    )));
                }
                let result = nnfs_infer(
                    &batch.support_features()?,
                    &batch.support_local_labels(),
                    &batch.query_features()?,
                    batch.episode.ways(),
                    batch.mean,
                    config,
                )?;
                Ok(batch.to_dataset_labels(&result.hard_labels))
            }
        }
    }
}

/// Fraction of the episode's queries whose prediction equals the dataset label.
pub fn score_episode(batch: &EpisodeBatch<'_>, method: &dyn EpisodeMethod) -> Result<f64> {
    let truth = batch.query_true_labels();
    let predicted = method.predict(batch)?;
    if predicted.len() != truth.len() {
        return Err(Error::invariant(
            "predictions",
            format!(
                "{} predictions for {} queries",
                predicted.len(),
                truth.len()
            ),
        ));
    }
    let correct = predicted.iter().zip(&truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// `1.96 · s / √n` with the n−1 sample standard deviation; 0 for n < 2.
pub fn ci_half_width_95(scores: &[f64]) -> f64 {
    let n = scores.len();
    if n < 2 {
        return 0.0;
    }
    // shifted-data form: exact zero for constant sequences
    let pivot = scores[0];
    let (sum, sum_sq) = scores.iter().fold((0.0, 0.0), |(s, q), &x| {
        let d = x - pivot;
        (s + d, q + d * d)
    });
    let var = ((sum_sq - sum * sum / n as f64) / (n - 1) as f64).max(0.0);
    Z_95 * var.sqrt() / (n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub task: String,
    pub language: String,
    pub config: EpisodeConfig,
    pub per_episode_scores: Vec<f64>,
    pub mean_accuracy: f64,
    pub ci_half_width_95: f64,
    /// Summed per-episode compute time divided by episodes run, in seconds.
    pub wall_time_per_episode: f64,
    pub episodes_run: usize,
}

impl EvalReport {
    pub fn from_scores(
        method: String,
        task: String,
        language: String,
        config: EpisodeConfig,
        scores: Vec<f64>,
        total_time: Duration,
    ) -> Self {
        let n = scores.len();
        let mean_accuracy = if n == 0 {
            0.0
        } else {
            scores.iter().sum::<f64>() / n as f64
        };
        Self {
            method,
            task,
            language,
            config,
            ci_half_width_95: ci_half_width_95(&scores),
            mean_accuracy,
            wall_time_per_episode: if n == 0 {
                0.0
            } else {
                total_time.as_secs_f64() / n as f64
            },
            episodes_run: n,
            per_episode_scores: scores,
        }
    }
}

/// Evaluates one method over `config.num_episodes` episodes.
pub fn run_evaluation(
    support_split: &EmbeddingDataset,
    query_split: &EmbeddingDataset,
    method: &dyn EpisodeMethod,
    mean: Option<&MeanVector<f64>>,
    config: EpisodeConfig,
) -> Result<EvalReport> {
    let mut reports = compare_methods(support_split, query_split, &[method], mean, config)?;
    Ok(reports.remove(0))
}

struct EpisodeOutcome {
    scores: Vec<f64>,
    times: Vec<Duration>,
}

fn run_episode(
    sampler: &EpisodeSampler<'_>,
    index: usize,
    methods: &[&dyn EpisodeMethod],
    mean: Option<&MeanVector<f64>>,
) -> Result<EpisodeOutcome> {
    let start = Instant::now();
    let episode = sampler.sample(index);
    let sampling = start.elapsed();
    let batch = sampler.batch(&episode, mean);
    let mut scores = Vec::with_capacity(methods.len());
    let mut times = Vec::with_capacity(methods.len());
    for m in methods {
        let t = Instant::now();
        scores.push(score_episode(&batch, *m)?);
        times.push(sampling + t.elapsed());
    }
    Ok(EpisodeOutcome { scores, times })
}

/// Evaluates every method on the same episode sequence.
///
/// Episodes run in parallel on the ambient rayon pool; scores are ordered by
/// episode index and do not depend on the degree of parallelism. With
/// `ci_stop_threshold` set, the run stops at the first episode count
/// `n ≥ 30` at which every method's half-width is at or below the threshold.
pub fn compare_methods(
    support_split: &EmbeddingDataset,
    query_split: &EmbeddingDataset,
    methods: &[&dyn EpisodeMethod],
    mean: Option<&MeanVector<f64>>,
    config: EpisodeConfig,
) -> Result<Vec<EvalReport>> {
    let sampler = EpisodeSampler::new(support_split, query_split, config)?;
    if methods.is_empty() {
        return Ok(Vec::new());
    }
    let chunk = match config.ci_stop_threshold {
        Some(_) => 64,
        None => config.num_episodes,
    };
    let mut scores: Vec<Vec<f64>> = vec![Vec::new(); methods.len()];
    let mut times = vec![Duration::ZERO; methods.len()];
    let mut done = 0;
    'outer: while done < config.num_episodes {
        let end = (done + chunk).min(config.num_episodes);
        let outcomes: Vec<Result<EpisodeOutcome>> = (done..end)
            .into_par_iter()
            .map(|i| run_episode(&sampler, i, methods, mean))
            .collect();
        for outcome in outcomes {
            let outcome = outcome?;
            for (k, (s, t)) in outcome.scores.into_iter().zip(outcome.times).enumerate() {
                scores[k].push(s);
                times[k] += t;
            }
            done += 1;
            if let Some(threshold) = config.ci_stop_threshold {
                if done >= MIN_EPISODES_BEFORE_STOP
                    && scores.iter().all(|s| ci_half_width_95(s) <= threshold)
                {
                    break 'outer;
                }
            }
        }
    }
    Ok(methods
        .iter()
        .zip(scores)
        .zip(times)
        .map(|((m, s), t)| {
            EvalReport::from_scores(
                m.name(),
                query_split.task_name.clone(),
                query_split.language.clone(),
                config,
                s,
                t,
            )
        })
        .collect())
}
