//! Run records, CSV writing and the exit-status classification.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use schatten_core::norms::format_f64;
use schatten_core::Error;
use serde::{Deserialize, Serialize};

pub const VERSION: &str = env!("SCHATTEN_VERSION");

/// Why a command did not succeed; selects exit status 1 or 2.
#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Numeric(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Numeric(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Invalid(m) => write!(f, "error: {m}"),
            Failure::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Invalid(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

/// One JSON file per experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub status: String,
    #[serde(default)]
    pub summary: serde_json::Value,
}

impl RunRecord {
    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Invalid(format!("malformed record {}: {e}", path.display())))
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Provenance columns appended to every table row.
#[derive(Clone, Debug)]
pub struct Provenance {
    pub seed: u64,
    pub grid: String,
    pub dt: f64,
    pub t_final: f64,
}

impl Provenance {
    const HEADER: [&'static str; 4] = ["seed", "grid", "dt", "T"];

    fn columns(&self) -> [String; 4] {
        [self.seed.to_string(), self.grid.clone(), format_f64(self.dt), format_f64(self.t_final)]
    }
}

/// A CSV table whose numeric cells are written in shortest round-trip form.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path, prov: &Provenance) -> Result<(), Failure> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.header.clone();
        header.extend(Provenance::HEADER.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut r = row.clone();
            r.extend(prov.columns());
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn num(v: f64) -> String {
    format_f64(v)
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

/// Where a command writes: `<dir>/<name>.json` plus `<dir>/<name>[_suffix].csv`.
pub struct OutputSet {
    pub dir: PathBuf,
    pub name: String,
    pub files: Vec<String>,
}

impl OutputSet {
    pub fn new(dir: &Path, name: String) -> Result<Self, Failure> {
        fs::create_dir_all(dir)?;
        Ok(OutputSet { dir: dir.to_path_buf(), name, files: Vec::new() })
    }

    /// Path of the CSV with `suffix` (empty for the main table), registered as an output.
    pub fn csv(&mut self, suffix: &str) -> PathBuf {
        let file = if suffix.is_empty() { format!("{}.csv", self.name) } else { format!("{}_{suffix}.csv", self.name) };
        let path = self.dir.join(&file);
        self.files.push(path.display().to_string());
        path
    }

    pub fn record_path(&self) -> PathBuf {
        self.dir.join(format!("{}.json", self.name))
    }
}

pub fn write_record(path: &Path, record: &RunRecord) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(record).map_err(|e| Failure::Invalid(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}
