use std::fs;
use std::path::PathBuf;

use clap::Args;
use nnfs_core::synthetic::{generate, SyntheticSpec};

use crate::failure::Failure;
use crate::manifest::{RunManifest, Stopwatch};

#[derive(Debug, Args)]
pub struct GenArgs {
    /// JSON synthetic dataset spec.
    #[arg(long)]
    pub spec: PathBuf,
    /// Root directory; files land under `<out>/<task>/`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: GenArgs, argv: Vec<String>) -> Result<(), Failure> {
    let mut watch = Stopwatch::start();
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| Failure::usage(format!("{}: {e}", args.spec.display())))?;
    let spec: SyntheticSpec = serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("{}: {e}", args.spec.display())))?;
    let data = generate(&spec)?;
    watch.lap("generate");
    let written = data.write_to_dir(&args.out)?;
    watch.lap("write");

    let mut manifest = RunManifest::new("gen", argv, serde_json::to_value(&spec)?);
    manifest.add_checksum(&args.spec)?;
    manifest.stage_timings = watch.stages;
    let task_dir = args.out.join(&spec.task);
    fs::write(
        task_dir.join("gen_manifest.json"),
        serde_json::to_string_pretty(&serde_json::json!({ "manifest": manifest }))?,
    )?;
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}
