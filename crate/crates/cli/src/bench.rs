use std::path::PathBuf;

use clap::Args;
use nnfs_core::store::dataset_file_name;
use nnfs_core::synthetic::{generate, SplitCounts, SyntheticSpec};
use nnfs_core::timing::{benchmark_methods, BenchConfig, BenchReport, MIN_BENCH_EPISODES};
use nnfs_core::{
    read_emb1_file, EpisodeConfig, EpisodeMethod, HeadConfig, MeanVector, Method, Split,
};
use serde::Serialize;

use crate::failure::Failure;
use crate::manifest::{RunManifest, Stopwatch};
use crate::render::{self, Format};

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Language directory with `dev.emb1` and `test.emb1`; a synthetic
    /// dataset is generated when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub mean: Option<PathBuf>,
    /// Feature dimension of the synthetic dataset.
    #[arg(long, default_value_t = 1024)]
    pub dim: usize,
    #[arg(long, default_value_t = MIN_BENCH_EPISODES)]
    pub episodes: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Method name, comma-separated list, or `all`.
    #[arg(long, default_value = "all")]
    pub method: String,
    #[arg(long, default_value_t = HeadConfig::default().epochs)]
    pub head_epochs: usize,
    #[arg(long, default_value_t = HeadConfig::default().learning_rate)]
    pub head_lr: f64,
    #[arg(long, value_enum, default_value = "md")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct BenchSettings<'a> {
    data: Option<&'a PathBuf>,
    mean: Option<&'a PathBuf>,
    synthetic: Option<&'a SyntheticSpec>,
    methods: Vec<String>,
    bench: BenchConfig,
    head: HeadConfig,
}

fn synthetic_spec(dim: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        task: "bench".into(),
        source_language: "en".into(),
        target_language: "xx".into(),
        dim,
        num_classes: 3,
        class_separation: 4.0,
        shift_vector_norm: 4.0,
        per_split_counts: SplitCounts {
            train: 150,
            dev: 150,
            test: 300,
        },
        noise_sigma: 1.0,
        seed,
    }
}

pub fn run(args: BenchArgs, argv: Vec<String>) -> Result<(), Failure> {
    let mut watch = Stopwatch::start();
    let head = HeadConfig {
        epochs: args.head_epochs,
        learning_rate: args.head_lr,
    };
    let names: Vec<String> = if args.method.trim() == "all" {
        Method::ALL_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        args.method
            .split(',')
            .map(|s| s.trim().to_string())
            .collect()
    };
    let methods: Vec<Method> = names
        .iter()
        .map(|n| {
            Ok(match n.parse::<Method>()? {
                Method::HeadFt(_) => Method::HeadFt(head),
                m => m,
            })
        })
        .collect::<Result<_, Failure>>()?;
    let config = BenchConfig {
        episode: EpisodeConfig {
            num_episodes: args.episodes,
            base_seed: args.seed,
            ..EpisodeConfig::default()
        },
        repeats: args.repeats,
    };

    let mut inputs = Vec::new();
    let (support, query, mean, spec) = match &args.data {
        Some(dir) => {
            let s = dir.join(dataset_file_name(Split::Dev));
            let q = dir.join(dataset_file_name(Split::Test));
            let support = read_emb1_file(&s).map_err(|e| Failure::from(e).context(s.display()))?;
            let query = read_emb1_file(&q).map_err(|e| Failure::from(e).context(q.display()))?;
            inputs.extend([s, q]);
            let mean = match &args.mean {
                Some(p) => {
                    let d = read_emb1_file(p).map_err(|e| Failure::from(e).context(p.display()))?;
                    inputs.push(p.clone());
                    Some(MeanVector::from_dataset(&d)?)
                }
                None => None,
            };
            (support, query, mean, None)
        }
        None => {
            let spec = synthetic_spec(args.dim, args.seed);
            let data = generate(&spec)?;
            (
                data.target_dev,
                data.target_test,
                Some(data.mean),
                Some(spec),
            )
        }
    };
    for m in &methods {
        if m.requires_mean() && mean.is_none() {
            return Err(Failure::usage(format!("method {m} needs --mean")));
        }
        if m.requires_logits() && !query.has_logits() {
            return Err(Failure::usage(format!(
                "method {m} needs stored logits, but {} has has_logits = false",
                query.identity()
            )));
        }
    }
    watch.lap("load");

    let refs: Vec<&dyn EpisodeMethod> = methods.iter().map(|m| m as &dyn EpisodeMethod).collect();
    let report = benchmark_methods(&support, &query, &refs, mean.as_ref(), config)?;
    watch.lap("benchmark");

    let settings = BenchSettings {
        data: args.data.as_ref(),
        mean: args.mean.as_ref(),
        synthetic: spec.as_ref(),
        methods: names,
        bench: config,
        head,
    };
    let mut manifest = RunManifest::new("bench", argv, serde_json::to_value(&settings)?);
    for p in &inputs {
        manifest.add_checksum(p)?;
    }
    manifest.stage_timings = watch.stages;
    render::emit(
        &render_bench(args.format, &manifest, &report),
        args.out.as_deref(),
    )
}

fn render_bench(format: Format, manifest: &RunManifest, report: &BenchReport) -> String {
    match format {
        Format::Json => {
            let doc = serde_json::json!({ "manifest": manifest, "bench": report });
            let mut s = serde_json::to_string_pretty(&doc).expect("bench serialises");
            s.push('\n');
            s
        }
        Format::Md => format!(
            "{}\nbaseline {} = 1x; dim {}, {} episodes, median of {} repeats\n\n{}",
            manifest.markdown_line(),
            report.baseline,
            report.dim,
            report.episodes,
            report.repeats,
            report.to_markdown()
        ),
        Format::Csv => {
            let mut out = manifest.csv_line();
            out.push_str("method,seconds_per_episode,multiplier\n");
            for e in &report.entries {
                out.push_str(&format!(
                    "{},{},{}\n",
                    e.method, e.seconds_per_episode, e.multiplier
                ));
            }
            out
        }
    }
}
