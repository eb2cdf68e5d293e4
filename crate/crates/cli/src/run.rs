//! Shared driver: load a config, run, write the outputs and exactly one record.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::record::{write_record, Failure, OutputSet, RunRecord, VERSION};

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for the CSV tables and the JSON record.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Base name of the output files (default: the config file stem).
    #[arg(long)]
    pub name: Option<String>,
}

pub fn load<C: DeserializeOwned>(path: &Path) -> Result<C, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Invalid(format!("config {}: {e}", path.display())))
}

/// Runs `body` on the parsed config and writes the record whatever the outcome.
pub fn execute<C, F>(command: &str, args: &RunArgs, seed: impl Fn(&C) -> u64, body: F) -> Result<(), Failure>
where
    C: DeserializeOwned + Serialize,
    F: FnOnce(&C, &mut OutputSet) -> Result<serde_json::Value, Failure>,
{
    let cfg: C = load(&args.config)?;
    let name = match &args.name {
        Some(n) => n.clone(),
        None => args.config.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string(),
    };
    let mut out = OutputSet::new(&args.out, name)?;
    let start = Instant::now();
    let result = body(&cfg, &mut out);
    let (status, summary) = match &result {
        Ok(s) => ("ok".to_string(), s.clone()),
        Err(f) => (f.to_string(), serde_json::Value::Null),
    };
    let record = RunRecord {
        command: command.to_string(),
        config: serde_json::to_value(&cfg).unwrap_or(serde_json::Value::Null),
        seed: seed(&cfg),
        version: VERSION.to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: if result.is_ok() { out.files.clone() } else { Vec::new() },
        status,
        summary,
    };
    let path = out.record_path();
    write_record(&path, &record)?;
    let summary = result?;
    println!("{command}: ok ({:.2}s), record {}", record.wall_time_s, path.display());
    println!("{summary}");
    Ok(())
}
