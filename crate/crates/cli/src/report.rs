//! `report`: one long-format CSV and a readable summary over any number of run records.

use std::path::{Path, PathBuf};

use clap::Args;
use schatten_core::norms::log_log_slope;

use crate::record::{num, Failure, RunRecord};

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Run records (JSON) to aggregate.
    #[arg(required = true)]
    pub records: Vec<PathBuf>,
    /// CSV destination; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One aggregated quantity.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub record: String,
    pub command: String,
    pub section: &'static str,
    pub quantity: String,
    pub value: String,
}

/// Slope of `log value` against `log r` recomputed from a moment-table CSV.
pub fn slope_from_table(path: &Path) -> Result<f64, Failure> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Failure::Invalid(format!("{}: no column {name}", path.display())))
    };
    let (ri, vi) = (col("r")?, col("value")?);
    let (mut rs, mut vs) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |i: usize| rec[i].parse::<f64>().map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())));
        rs.push(parse(ri)?);
        vs.push(parse(vi)?);
    }
    if rs.len() < 2 {
        return Err(Failure::Invalid(format!("{}: need at least two moment orders", path.display())));
    }
    Ok(log_log_slope(&rs, &vs))
}

fn section(command: &str) -> &'static str {
    if command.starts_with("strichartz") {
        "strichartz"
    } else if command.contains("calibrate") {
        "calibration"
    } else if command.starts_with("hartree") {
        "hartree"
    } else {
        "other"
    }
}

/// Scalar quantities taken from each kind of summary, as JSON pointers.
fn picks(command: &str) -> &'static [(&'static str, &'static str)] {
    match command {
        "strichartz singular" | "strichartz full" | "strichartz function" => {
            &[("slope_upper", "/slope/upper"), ("samples", "/samples"), ("edge_mass", "/edge_mass")]
        }
        "strichartz key" => &[("max_ratio", "/max_ratio"), ("mean_ratio", "/mean_ratio")],
        "hartree solve" => &[
            ("T", "/run/T"),
            ("halvings", "/run/halvings"),
            ("iterations", "/run/iterations"),
            ("max_ratio", "/run/max_ratio"),
            ("self_adjoint_drift", "/run/self_adjoint_drift"),
            ("oracle_distance", "/oracle_distance"),
        ],
        "hartree linearized" => &[("c0", "/c0"), ("residual", "/residual"), ("growth", "/growth")],
        "hartree scatter" => &[("c0", "/c0"), ("residual", "/residual"), ("verdict", "/verdict")],
        "hartree calibrate-l1" | "calibrate-l1" => &[("c0", "/c0"), ("imag", "/imag"), ("residual", "/residual")],
        "hartree lwp" => &[("draws", "/draws"), ("accepted", "/accepted"), ("min_T", "/min_T")],
        _ => &[],
    }
}

fn scalar(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => n.as_f64().map(num),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

pub fn rows_for(path: &Path, rec: &RunRecord) -> Result<Vec<Row>, Failure> {
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("record").to_string();
    let sec = section(&rec.command);
    let row = |quantity: &str, value: String| Row {
        record: name.clone(),
        command: rec.command.clone(),
        section: sec,
        quantity: quantity.to_string(),
        value,
    };
    let mut rows = vec![row("status", rec.status.clone())];
    if !rec.is_ok() {
        return Ok(rows);
    }
    if sec == "strichartz" && rec.command != "strichartz key" {
        let table = rec.outputs.first().ok_or_else(|| Failure::Invalid(format!("{}: record lists no table", path.display())))?;
        let slope = slope_from_table(Path::new(table))?;
        // the table on disk must reproduce the recorded fit
        if let Some(recorded) = rec.summary.pointer("/slope/slope").and_then(|v| v.as_f64()) {
            if (slope - recorded).abs() > 1e-12 {
                return Err(Failure::Invalid(format!("{}: table slope {slope} differs from recorded {recorded}", path.display())));
            }
        }
        rows.push(row("slope", num(slope)));
    }
    for (quantity, pointer) in picks(&rec.command) {
        if let Some(v) = rec.summary.pointer(pointer).and_then(scalar) {
            rows.push(row(quantity, v));
        }
    }
    Ok(rows)
}

pub fn run(args: &ReportArgs) -> Result<(), Failure> {
    let mut rows = Vec::new();
    for path in &args.records {
        let rec = RunRecord::read(path)?;
        rows.extend(rows_for(path, &rec)?);
    }
    rows.sort_by_key(|r| r.section);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["record", "command", "section", "quantity", "value"])?;
    for r in &rows {
        w.write_record([&r.record, &r.command, r.section, &r.quantity, &r.value])?;
    }
    let text = String::from_utf8(w.into_inner().map_err(|e| Failure::Invalid(e.to_string()))?).expect("utf8");
    match &args.out {
        Some(p) => std::fs::write(p, &text)?,
        None => print!("{text}"),
    }
    let mut current = "";
    for r in &rows {
        if r.section != current {
            current = r.section;
            eprintln!("== {current}");
        }
        eprintln!("  {:<24} {:<22} {:<20} {}", r.record, r.command, r.quantity, r.value);
    }
    Ok(())
}
