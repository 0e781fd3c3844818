use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use nnfs_core::store::dataset_file_name;
use nnfs_core::{
    compare_methods, read_emb1_file, EmbeddingDataset, EpisodeConfig, EpisodeMethod, EvalReport,
    HeadConfig, MeanVector, Method, Split,
};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;
use crate::manifest::{score_digest, sha256_file, RunManifest, Stopwatch};
use crate::render::{self, Format};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Language directory holding `<split>.emb1` files, e.g. `out/xnli/de`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub support_split: Option<Split>,
    #[arg(long)]
    pub query_split: Option<Split>,
    /// Protocol preset such as `fs-3.5` (3 ways, 5 shots).
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub ways: Option<usize>,
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long)]
    pub queries_per_class: Option<usize>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stop once the 95% half-width is at or below this (after 30 episodes).
    #[arg(long)]
    pub ci_stop: Option<f64>,
    /// Method name, comma-separated list, or `all`.
    #[arg(long)]
    pub method: Option<String>,
    /// Source mean vector (`<task>/mean_src.emb1`), needed by the norm methods.
    #[arg(long)]
    pub mean: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "NNFS_THREADS")]
    pub threads: Option<usize>,
    /// JSON file with any of the flags above (snake_case keys); flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub head_epochs: Option<usize>,
    #[arg(long)]
    pub head_lr: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalFile {
    data: Option<PathBuf>,
    support_split: Option<Split>,
    query_split: Option<Split>,
    preset: Option<String>,
    ways: Option<usize>,
    shots: Option<usize>,
    queries_per_class: Option<usize>,
    episodes: Option<usize>,
    seed: Option<u64>,
    ci_stop: Option<f64>,
    method: Option<String>,
    mean: Option<PathBuf>,
    format: Option<Format>,
    out: Option<PathBuf>,
    threads: Option<usize>,
    head_epochs: Option<usize>,
    head_lr: Option<f64>,
}

/// Everything needed to reproduce an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub data: PathBuf,
    pub support_split: Split,
    pub query_split: Split,
    pub methods: Vec<String>,
    pub mean: Option<PathBuf>,
    pub episode: EpisodeConfig,
    pub head: HeadConfig,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

fn parse_methods(spec: &str) -> Result<Vec<String>, Failure> {
    if spec.trim() == "all" {
        return Ok(Method::ALL_NAMES.iter().map(|s| s.to_string()).collect());
    }
    let mut out = Vec::new();
    for name in spec.split(',').map(str::trim) {
        name.parse::<Method>()?;
        out.push(name.to_string());
    }
    Ok(out)
}

fn existing(path: PathBuf, what: &str) -> Result<PathBuf, Failure> {
    fs::canonicalize(&path).map_err(|e| Failure::usage(format!("{what} {}: {e}", path.display())))
}

pub fn resolve(args: EvalArgs) -> Result<EvalSettings, Failure> {
    let file: EvalFile = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        }
        None => EvalFile::default(),
    };
    let base = match args.preset.or(file.preset) {
        Some(name) => EpisodeConfig::preset(&name)?,
        None => EpisodeConfig::default(),
    };
    let episode = EpisodeConfig {
        ways: args.ways.or(file.ways).unwrap_or(base.ways),
        shots: args.shots.or(file.shots).unwrap_or(base.shots),
        queries_per_class: args
            .queries_per_class
            .or(file.queries_per_class)
            .unwrap_or(base.queries_per_class),
        num_episodes: args.episodes.or(file.episodes).unwrap_or(base.num_episodes),
        base_seed: args.seed.or(file.seed).unwrap_or(base.base_seed),
        ci_stop_threshold: args.ci_stop.or(file.ci_stop),
    };
    episode.validate()?;
    let defaults = HeadConfig::default();
    let head = HeadConfig {
        epochs: args
            .head_epochs
            .or(file.head_epochs)
            .unwrap_or(defaults.epochs),
        learning_rate: args
            .head_lr
            .or(file.head_lr)
            .unwrap_or(defaults.learning_rate),
    };

    let support_split = args
        .support_split
        .or(file.support_split)
        .unwrap_or(Split::Dev);
    let query_split = args.query_split.or(file.query_split).unwrap_or(Split::Test);
    if support_split == query_split {
        return Err(Failure::usage(format!(
            "support and query must come from different splits (both are {support_split})"
        )));
    }
    let data = args
        .data
        .or(file.data)
        .ok_or_else(|| Failure::usage("--data is required"))?;
    let mean = args.mean.or(file.mean);
    Ok(EvalSettings {
        data: existing(data, "data directory")?,
        support_split,
        query_split,
        methods: parse_methods(
            args.method
                .or(file.method)
                .as_deref()
                .unwrap_or("nn+norm+proto"),
        )?,
        mean: mean.map(|m| existing(m, "mean vector")).transpose()?,
        episode,
        head,
        format: args.format.or(file.format).unwrap_or(Format::Json),
        out: args.out.or(file.out),
        threads: args.threads.or(file.threads),
    })
}

fn load(path: &Path) -> Result<EmbeddingDataset, Failure> {
    read_emb1_file(path).map_err(|e| Failure::from(e).context(path.display()))
}

pub struct Evaluation {
    pub reports: Vec<EvalReport>,
    pub inputs: Vec<PathBuf>,
}

pub fn execute(settings: &EvalSettings, watch: &mut Stopwatch) -> Result<Evaluation, Failure> {
    let methods: Vec<Method> = settings
        .methods
        .iter()
        .map(|name| {
            Ok(match name.parse::<Method>()? {
                Method::HeadFt(_) => Method::HeadFt(settings.head),
                m => m,
            })
        })
        .collect::<Result<_, Failure>>()?;

    let support_path = settings
        .data
        .join(dataset_file_name(settings.support_split));
    let query_path = settings.data.join(dataset_file_name(settings.query_split));
    let support = load(&support_path)?;
    let query = load(&query_path)?;
    if support.task_name != query.task_name || support.language != query.language {
        return Err(Failure::usage(format!(
            "support split {} and query split {} belong to different task/language pairs",
            support.identity(),
            query.identity()
        )));
    }
    let mut inputs = vec![support_path, query_path];

    let mean = match &settings.mean {
        Some(path) => {
            let m = MeanVector::from_dataset(&load(path)?)
                .map_err(|e| Failure::from(e).context(path.display()))?;
            if m.dim() != support.dim {
                return Err(Failure::usage(format!(
                    "mean vector has dim {} but the dataset has dim {}",
                    m.dim(),
                    support.dim
                )));
            }
            inputs.push(path.clone());
            Some(m)
        }
        None => None,
    };
    for m in &methods {
        if m.requires_mean() && mean.is_none() {
            return Err(Failure::usage(format!(
                "method {m} needs the source mean vector; pass --mean <task>/mean_src.emb1"
            )));
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
    let reports = compare_methods(&support, &query, &refs, mean.as_ref(), settings.episode)?;
    watch.lap("evaluate");
    Ok(Evaluation { reports, inputs })
}

fn manifest_for(
    settings: &EvalSettings,
    argv: Vec<String>,
    evaluation: &Evaluation,
) -> Result<RunManifest, Failure> {
    let mut manifest = RunManifest::new("eval", argv, serde_json::to_value(settings)?);
    for path in &evaluation.inputs {
        manifest.add_checksum(path)?;
    }
    for r in &evaluation.reports {
        manifest
            .score_digests
            .insert(r.method.clone(), score_digest(&r.per_episode_scores));
    }
    Ok(manifest)
}

pub fn run(args: EvalArgs, argv: Vec<String>) -> Result<(), Failure> {
    let mut watch = Stopwatch::start();
    let settings = resolve(args)?;
    crate::init_threads(settings.threads)?;
    let evaluation = execute(&settings, &mut watch)?;
    let mut manifest = manifest_for(&settings, argv, &evaluation)?;
    manifest.stage_timings = watch.stages;
    let text = render::reports(settings.format, &manifest, &evaluation.reports);
    render::emit(&text, settings.out.as_deref())
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Output file of an earlier `nnfs eval` run (any format).
    pub file: PathBuf,
    #[arg(long, env = "NNFS_THREADS")]
    pub threads: Option<usize>,
}

pub fn replay(args: ReplayArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.file)
        .map_err(|e| Failure::usage(format!("{}: {e}", args.file.display())))?;
    let manifest = RunManifest::extract(&text)?;
    if manifest.command != "eval" {
        return Err(Failure::usage(format!(
            "can only replay eval runs, this manifest is from {:?}",
            manifest.command
        )));
    }
    let settings: EvalSettings = serde_json::from_value(manifest.config.clone())?;
    for (path, expected) in &manifest.dataset_checksums {
        let actual =
            sha256_file(Path::new(path)).map_err(|e| Failure::usage(format!("{path}: {e}")))?;
        if &actual != expected {
            return Err(Failure::usage(format!(
                "{path} changed since the run (checksum mismatch)"
            )));
        }
    }
    crate::init_threads(args.threads)?;
    let mut watch = Stopwatch::start();
    let evaluation = execute(&settings, &mut watch)?;
    let mut episodes = 0;
    for r in &evaluation.reports {
        let digest = score_digest(&r.per_episode_scores);
        match manifest.score_digests.get(&r.method) {
            Some(d) if *d == digest => episodes = r.episodes_run,
            Some(_) => {
                return Err(Failure::numeric(format!(
                    "scores for {} differ from the recorded run",
                    r.method
                )))
            }
            None => {
                return Err(Failure::usage(format!(
                    "manifest has no scores for {}",
                    r.method
                )))
            }
        }
    }
    println!(
        "replayed {} method(s) over {episodes} episodes: scores identical",
        evaluation.reports.len()
    );
    Ok(())
}
