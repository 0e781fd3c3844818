use std::fs;
use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use nnfs_core::report::{reports_to_csv, reports_to_markdown};
use nnfs_core::EvalReport;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;
use crate::manifest::RunManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Md,
}

pub fn reports(format: Format, manifest: &RunManifest, reports: &[EvalReport]) -> String {
    match format {
        Format::Json => {
            let doc = serde_json::json!({ "manifest": manifest, "reports": reports });
            let mut s = serde_json::to_string_pretty(&doc).expect("reports serialise");
            s.push('\n');
            s
        }
        Format::Md => format!(
            "{}\n{}",
            manifest.markdown_line(),
            reports_to_markdown(reports)
        ),
        Format::Csv => format!("{}{}", manifest.csv_line(), reports_to_csv(reports)),
    }
}

/// Writes to `out`, or to stdout when no path is given.
pub fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}
