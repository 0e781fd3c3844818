//! Tabular rendering of evaluation reports.

use crate::episodic::EvalReport;
use crate::error::{Error, Result};

/// Row label used in result tables.
pub fn method_label(key: &str) -> String {
    match key {
        "zero-shot" => "Zero-Shot".into(),
        "nn" => "NN".into(),
        "nn+proto" => "NN+proto-rect".into(),
        "nn+norm" => "NN+norm".into(),
        "nn+norm+proto" => "NN+norm+proto-rect".into(),
        "head-ft" => "Fine-tuning (head)".into(),
        other => other.into(),
    }
}

fn setting(report: &EvalReport) -> String {
    if report.method == "zero-shot" {
        "-".into()
    } else {
        report.config.label()
    }
}

/// One row per report: accuracy and half-width in percent, one decimal.
pub fn reports_to_markdown(reports: &[EvalReport]) -> String {
    let mut out = format!(
        "| {:<20} | {:<8} | {:<10} | {:>8} | {:>6} | {:>8} | {:>12} |\n",
        "Method", "Setting", "Language", "Acc (%)", "± CI", "Episodes", "ms / episode"
    );
    out.push_str(&format!(
        "|{:-<22}|{:-<10}|{:-<12}|{:->10}|{:->8}|{:->10}|{:->14}|\n",
        "", "", "", "", "", "", ""
    ));
    for r in reports {
        out.push_str(&format!(
            "| {:<20} | {:<8} | {:<10} | {:>8.1} | {:>6.1} | {:>8} | {:>12.4} |\n",
            method_label(&r.method),
            setting(r),
            r.language,
            100.0 * r.mean_accuracy,
            100.0 * r.ci_half_width_95,
            r.episodes_run,
            1e3 * r.wall_time_per_episode
        ));
    }
    out
}

/// Full-precision CSV, one row per report.
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(
        "method,task,language,ways,shots,queries_per_class,base_seed,episodes_run,mean_accuracy,ci_half_width_95,wall_time_per_episode\n",
    );
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.method,
            r.task,
            r.language,
            r.config.ways,
            r.config.shots,
            r.config.queries_per_class,
            r.config.base_seed,
            r.episodes_run,
            r.mean_accuracy,
            r.ci_half_width_95,
            r.wall_time_per_episode
        ));
    }
    out
}

/// Methods × languages accuracy grid with a trailing average column.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultGrid {
    pub task: String,
    /// `(method, setting)` per row, in first-seen order.
    pub methods: Vec<(String, String)>,
    pub languages: Vec<String>,
    /// `cells[row][col]`, accuracy in `[0, 1]`.
    pub cells: Vec<Vec<Option<f64>>>,
    pub warnings: Vec<String>,
}

impl ResultGrid {
    pub fn from_reports(reports: &[EvalReport]) -> Result<Self> {
        let first = reports.first().ok_or(Error::Empty {
            what: "report list",
        })?;
        let mut warnings = Vec::new();
        for r in reports {
            if r.task != first.task {
                return Err(Error::Config(format!(
                    "cannot merge reports from different tasks ({} and {})",
                    first.task, r.task
                )));
            }
            if r.config != first.config {
                warnings.push(format!(
                    "episode config of {}/{} ({} ways, {} shots, {} queries, {} episodes, seed {}) differs from {}/{}",
                    r.method,
                    r.language,
                    r.config.ways,
                    r.config.shots,
                    r.config.queries_per_class,
                    r.config.num_episodes,
                    r.config.base_seed,
                    first.method,
                    first.language
                ));
            }
        }
        let mut methods: Vec<(String, String)> = Vec::new();
        let mut languages: Vec<String> = Vec::new();
        for r in reports {
            let key = (r.method.clone(), setting(r));
            if !methods.contains(&key) {
                methods.push(key);
            }
            if !languages.contains(&r.language) {
                languages.push(r.language.clone());
            }
        }
        let mut cells = vec![vec![None; languages.len()]; methods.len()];
        for r in reports {
            let row = methods
                .iter()
                .position(|(m, s)| *m == r.method && *s == setting(r))
                .expect("method indexed");
            let col = languages
                .iter()
                .position(|l| *l == r.language)
                .expect("language indexed");
            if cells[row][col].is_some() {
                warnings.push(format!(
                    "duplicate report for {}/{}; keeping the last one",
                    r.method, r.language
                ));
            }
            cells[row][col] = Some(r.mean_accuracy);
        }
        Ok(Self {
            task: first.task.clone(),
            methods,
            languages,
            cells,
            warnings,
        })
    }

    /// Mean over the cells present in a row.
    pub fn row_average(&self, row: usize) -> Option<f64> {
        let present: Vec<f64> = self.cells[row].iter().flatten().copied().collect();
        (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        for w in &self.warnings {
            out.push_str(&format!("> warning: {w}\n"));
        }
        if !self.warnings.is_empty() {
            out.push('\n');
        }
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |a| format!("{:.1}", 100.0 * a));
        out.push_str(&format!("| {:<20} | {:<8} |", "Method", "Setting"));
        for l in &self.languages {
            out.push_str(&format!(" {:>6} |", l));
        }
        out.push_str(&format!(" {:>6} |\n", "avg"));
        out.push_str(&format!("|{:-<22}|{:-<10}|", "", ""));
        for _ in 0..=self.languages.len() {
            out.push_str(&format!("{:->8}|", ""));
        }
        out.push('\n');
        for (row, (m, s)) in self.methods.iter().enumerate() {
            out.push_str(&format!("| {:<20} | {:<8} |", method_label(m), s));
            for &v in &self.cells[row] {
                out.push_str(&format!(" {:>6} |", cell(v)));
            }
            out.push_str(&format!(" {:>6} |\n", cell(self.row_average(row))));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for w in &self.warnings {
            out.push_str(&format!("# warning: {w}\n"));
        }
        out.push_str("method,setting");
        for l in &self.languages {
            out.push_str(&format!(",{l}"));
        }
        out.push_str(",avg\n");
        for (row, (m, s)) in self.methods.iter().enumerate() {
            out.push_str(&format!("{m},{s}"));
            for v in self.cells[row]
                .iter()
                .copied()
                .chain([self.row_average(row)])
            {
                match v {
                    Some(a) => out.push_str(&format!(",{:.1}", 100.0 * a)),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}
