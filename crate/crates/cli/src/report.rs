use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use nnfs_core::report::ResultGrid;
use nnfs_core::EvalReport;
use serde::Deserialize;

use crate::failure::Failure;
use crate::manifest::{RunManifest, Stopwatch};
use crate::render;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridFormat {
    Md,
    Csv,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON outputs of `nnfs eval`.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "md")]
    pub format: GridFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ReportFile {
    Wrapped { reports: Vec<EvalReport> },
    Many(Vec<EvalReport>),
    One(Box<EvalReport>),
}

pub fn run(args: ReportArgs, argv: Vec<String>) -> Result<(), Failure> {
    let mut watch = Stopwatch::start();
    let mut reports = Vec::new();
    for path in &args.files {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let parsed: ReportFile = serde_json::from_str(&text).map_err(|e| {
            Failure::usage(format!("{}: not a JSON eval report ({e})", path.display()))
        })?;
        match parsed {
            ReportFile::Wrapped { reports: r } | ReportFile::Many(r) => reports.extend(r),
            ReportFile::One(r) => reports.push(*r),
        }
    }
    let grid = ResultGrid::from_reports(&reports)?;
    watch.lap("merge");

    let files: Vec<String> = args.files.iter().map(|p| p.display().to_string()).collect();
    let mut manifest = RunManifest::new("report", argv, serde_json::json!({ "files": files }));
    for path in &args.files {
        manifest.add_checksum(path)?;
    }
    manifest.stage_timings = watch.stages;
    for w in &grid.warnings {
        eprintln!("nnfs: warning: {w}");
    }
    let text = match args.format {
        GridFormat::Md => format!("{}\n{}", manifest.markdown_line(), grid.to_markdown()),
        GridFormat::Csv => format!("{}{}", manifest.csv_line(), grid.to_csv()),
    };
    render::emit(&text, args.out.as_deref())
}
