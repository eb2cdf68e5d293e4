//! `strichartz` subcommands: Monte Carlo moment tables and the trace-estimate probe.

use clap::Subcommand;
use schatten_core::initial::InitialOperator;
use schatten_core::strichartz::{
    key_estimate_probe, mc_function_randomization, mc_strichartz_full, mc_strichartz_singular, FullConfig, FunctionConfig,
    KeyEstimateConfig, SingularConfig, StrichartzRun,
};
use serde_json::json;

use crate::record::{num, Failure, OutputSet, Provenance, Table};
use crate::run::{execute, RunArgs};

#[derive(Subcommand, Debug)]
pub enum StrichartzCmd {
    /// Singular value randomization of an operator.
    Singular(RunArgs),
    /// Full randomization (singular values and Wiener conjugation).
    Full(RunArgs),
    /// Wiener randomization of a single function.
    Function(RunArgs),
    /// Both sides of the trace estimate on random potentials.
    Key(RunArgs),
}

pub fn initial_seed(init: &InitialOperator) -> u64 {
    match init {
        InitialOperator::WavePackets { seed, .. } => *seed,
        _ => 0,
    }
}

fn moment_outputs(run: &StrichartzRun, out: &mut OutputSet) -> Result<serde_json::Value, Failure> {
    let path = out.csv("");
    let file = std::fs::File::create(&path)?;
    run.table.write_csv(file)?;
    Ok(json!({
        "exponents": run.exponents,
        "slope": run.table.slope,
        "samples": run.table.samples,
        "edge_mass": run.edge_mass,
        "orders_below_range": run.orders_below_range,
    }))
}

pub fn run(cmd: &StrichartzCmd) -> Result<(), Failure> {
    match cmd {
        StrichartzCmd::Singular(a) => execute(
            "strichartz singular",
            a,
            |c: &SingularConfig| c.family.seed,
            |c, out| moment_outputs(&mc_strichartz_singular(c)?, out),
        ),
        StrichartzCmd::Full(a) => execute(
            "strichartz full",
            a,
            |c: &FullConfig| c.family_g.seed,
            |c, out| moment_outputs(&mc_strichartz_full(c)?, out),
        ),
        StrichartzCmd::Function(a) => execute(
            "strichartz function",
            a,
            |c: &FunctionConfig| c.family.seed,
            |c, out| moment_outputs(&mc_function_randomization(c)?, out),
        ),
        StrichartzCmd::Key(a) => execute(
            "strichartz key",
            a,
            |c: &KeyEstimateConfig| c.seed,
            |c, out| {
                let stats = key_estimate_probe(c)?;
                let mut t = Table::new(&["instance", "ratio"]);
                for (i, r) in stats.ratios.iter().enumerate() {
                    t.push(vec![i.to_string(), num(*r)]);
                }
                let prov = Provenance { seed: c.seed, grid: c.grid.label(), dt: c.window.dt, t_final: c.window.t_final };
                t.write(&out.csv(""), &prov)?;
                Ok(json!({ "max_ratio": stats.max_ratio, "mean_ratio": stats.mean_ratio, "instances": stats.ratios.len() }))
            },
        ),
    }
}
