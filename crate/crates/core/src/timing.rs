//! Per-episode inference cost of each method, relative to zero-shot.
//!
//! Episodes are sampled up front; each repeat then times every method over
//! the same episodes on the calling thread, after one untimed warm-up pass.
//! The reported cost is the median over repeats.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::episodic::{score_episode, EpisodeConfig, EpisodeMethod, EpisodeSampler};
use crate::error::{Error, Result};
use crate::store::{EmbeddingDataset, MeanVector};

pub const MIN_BENCH_EPISODES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub episode: EpisodeConfig,
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            episode: EpisodeConfig {
                num_episodes: MIN_BENCH_EPISODES,
                ..EpisodeConfig::default()
            },
            repeats: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub method: String,
    /// Median over repeats, seconds.
    pub seconds_per_episode: f64,
    pub repeat_seconds_per_episode: Vec<f64>,
    /// `seconds_per_episode` divided by the baseline's.
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub baseline: String,
    pub dim: usize,
    pub episodes: usize,
    pub repeats: usize,
    pub entries: Vec<BenchEntry>,
}

impl BenchReport {
    pub fn entry(&self, method: &str) -> Option<&BenchEntry> {
        self.entries.iter().find(|e| e.method == method)
    }

    /// Markdown table with one row per method.
    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "| {:<20} | {:>14} | {:>10} |\n|{:-<22}|{:->16}|{:->12}|\n",
            "Method", "ms / episode", "relative", "", "", ""
        );
        for e in &self.entries {
            out.push_str(&format!(
                "| {:<20} | {:>14.4} | {:>9.2}x |\n",
                crate::report::method_label(&e.method),
                e.seconds_per_episode * 1e3,
                e.multiplier
            ));
        }
        out
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times each method; the baseline is `zero-shot` if present, else the
/// first method.
pub fn benchmark_methods(
    support_split: &EmbeddingDataset,
    query_split: &EmbeddingDataset,
    methods: &[&dyn EpisodeMethod],
    mean: Option<&MeanVector<f64>>,
    config: BenchConfig,
) -> Result<BenchReport> {
    if config.episode.num_episodes < MIN_BENCH_EPISODES {
        return Err(Error::Config(format!(
            "benchmarks need at least {MIN_BENCH_EPISODES} episodes"
        )));
    }
    if config.repeats == 0 {
        return Err(Error::Config("benchmarks need at least one repeat".into()));
    }
    if methods.is_empty() {
        return Err(Error::Config("no methods to benchmark".into()));
    }
    let sampler = EpisodeSampler::new(support_split, query_split, config.episode)?;
    let episodes: Vec<_> = (0..config.episode.num_episodes)
        .map(|i| sampler.sample(i))
        .collect();

    let run = |m: &dyn EpisodeMethod| -> Result<f64> {
        let start = Instant::now();
        for ep in &episodes {
            std::hint::black_box(score_episode(&sampler.batch(ep, mean), m)?);
        }
        Ok(start.elapsed().as_secs_f64() / episodes.len() as f64)
    };

    for m in methods {
        run(*m)?;
    }
    let mut samples = vec![Vec::with_capacity(config.repeats); methods.len()];
    for _ in 0..config.repeats {
        for (k, m) in methods.iter().enumerate() {
            samples[k].push(run(*m)?);
        }
    }

    let baseline_idx = methods
        .iter()
        .position(|m| m.name() == "zero-shot")
        .unwrap_or(0);
    let medians: Vec<f64> = samples.iter().map(|s| median(s)).collect();
    let base = medians[baseline_idx];
    Ok(BenchReport {
        baseline: methods[baseline_idx].name(),
        dim: support_split.dim,
        episodes: episodes.len(),
        repeats: config.repeats,
        entries: methods
            .iter()
            .zip(samples)
            .zip(&medians)
            .map(|((m, s), &med)| BenchEntry {
                method: m.name(),
                seconds_per_episode: med,
                repeat_seconds_per_episode: s,
                multiplier: med / base,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::median;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
