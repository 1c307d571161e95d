use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::CliError;

/// Acceptance condition of a check row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bound {
    AtMost { value: f64 },
    AtLeast { value: f64 },
    Within { lo: f64, hi: f64 },
    /// Reported only; passes when the value is finite.
    Info,
}

impl Bound {
    pub fn admits(&self, v: f64) -> bool {
        match *self {
            Bound::AtMost { value } => v <= value,
            Bound::AtLeast { value } => v >= value,
            Bound::Within { lo, hi } => v >= lo && v <= hi,
            Bound::Info => v.is_finite(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub pass: bool,
    /// Library operation that produced the value.
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRow {
    pub fn new(name: impl Into<String>, value: f64, bound: Bound, source: impl Into<String>) -> Self {
        CheckRow { name: name.into(), value, bound, pass: bound.admits(value), source: source.into(), note: None }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// A failed row carrying an error message.
    pub fn error(source: impl Into<String>, message: impl Into<String>) -> Self {
        CheckRow {
            name: "error".into(),
            value: f64::NAN,
            bound: Bound::Info,
            pass: false,
            source: source.into(),
            note: Some(message.into()),
        }
    }
}

/// A CSV table; cells are preformatted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Shortest round-trip formatting, exponent form for very small or large magnitudes.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub rows: Vec<CheckRow>,
    /// Tables written next to `run.json`.
    #[serde(skip)]
    pub tables: Vec<Table>,
    /// Tables written under `plotdata/`.
    #[serde(skip)]
    pub plots: Vec<Table>,
    /// Paths relative to the output directory, filled by [`emit_report`].
    pub artifacts: Vec<String>,
    pub wall_time: f64,
    pub pass: bool,
}

impl RunReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        RunReport {
            experiment: config.experiment.clone(),
            config: config.clone(),
            seed: config.seed(),
            rows: Vec::new(),
            tables: Vec::new(),
            plots: Vec::new(),
            artifacts: Vec::new(),
            wall_time: 0.0,
            pass: true,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let _ = write!(s, "{:<4} {:<32} {:<14} {:?}", if r.pass { "ok" } else { "FAIL" }, r.name, format!("{:.6e}", r.value), r.bound);
            if let Some(n) = &r.note {
                let _ = write!(s, "  ({n})");
            }
            s.push('\n');
        }
        s
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })
}

/// Writes `run.json`, one CSV per table and `plotdata/*.csv`; returns the written paths.
pub fn emit_report(report: &mut RunReport, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.to_path_buf(), source: e })?;
    let mut rel = Vec::new();
    for t in &report.tables {
        let name = format!("{}.csv", t.name);
        write(&dir.join(&name), &t.to_csv())?;
        rel.push(name);
    }
    if !report.plots.is_empty() {
        let pd = dir.join("plotdata");
        fs::create_dir_all(&pd).map_err(|e| CliError::Io { path: pd.clone(), source: e })?;
        for t in &report.plots {
            let name = format!("plotdata/{}.csv", t.name);
            write(&dir.join(&name), &t.to_csv())?;
            rel.push(name);
        }
    }
    rel.push("run.json".into());
    report.artifacts = rel.clone();
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Config(e.to_string()))?;
    write(&dir.join("run.json"), &(json + "\n"))?;
    Ok(rel.into_iter().map(|r| dir.join(r)).collect())
}
