//! `hartree` subcommands: local solve, linearized solve, scattering ladder, ℒ₁ calibration
//! and the randomized local well-posedness pipelines.

use clap::Subcommand;
use schatten_core::hartree::{
    calibrate_l1_constant, dense_rk4_oracle, dyadic_ladder, frame_index, linearized_solve, lwp_ensemble, picard_solve,
    scattering_diagnostic, scattering_exponent, BackgroundSpec, BackgroundState, HartreeRun, LinearizedSolution, LwpConfig,
    PicardOptions, Scheme,
};
use schatten_core::initial::InitialOperator;
use schatten_core::strichartz::{GridSpec, TimeWindow};
use schatten_core::Exponent;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::record::{num, opt_num, Failure, OutputSet, Provenance, Table};
use crate::run::{execute, RunArgs};
use crate::strichartz::initial_seed;

#[derive(Subcommand, Debug)]
pub enum HartreeCmd {
    /// Local solve by Picard iteration, optionally checked against the RK4 reference.
    Solve(RunArgs),
    /// Linearized solve by causal time marching.
    Linearized(RunArgs),
    /// Linearized solve plus the dyadic scattering ladder.
    Scatter(RunArgs),
    /// Fit the constant of the Fourier form of the linear response.
    CalibrateL1(RunArgs),
    /// Randomized data followed by a local solve, one per draw.
    Lwp(RunArgs),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveConfig {
    pub grid: GridSpec,
    pub background: BackgroundSpec,
    pub initial: InitialOperator,
    pub picard: PicardOptions,
    /// Defaults to the scheme of the dimension.
    #[serde(default)]
    pub scheme: Option<Scheme>,
    /// Also run the RK4 reference and record the sup S² distance.
    #[serde(default)]
    pub oracle: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationSpec {
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_calibration_window")]
    pub window: TimeWindow,
}

fn default_probes() -> usize {
    2
}

fn default_seed() -> u64 {
    1
}

fn default_calibration_window() -> TimeWindow {
    TimeWindow { t_final: 0.2, dt: 0.05 }
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        CalibrationSpec { probes: default_probes(), seed: default_seed(), window: default_calibration_window() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearizedConfig {
    pub grid: GridSpec,
    pub background: BackgroundSpec,
    pub initial: InitialOperator,
    pub window: TimeWindow,
    /// Response constant; calibrated on the same background when absent.
    #[serde(default)]
    pub c0: Option<f64>,
    #[serde(default)]
    pub calibration: CalibrationSpec,
    /// Ladder `0, T/2^{levels-1}, …, T` for `hartree scatter`.
    #[serde(default = "default_levels")]
    pub ladder_levels: usize,
}

fn default_levels() -> usize {
    4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrateConfig {
    pub grid: GridSpec,
    pub background: BackgroundSpec,
    #[serde(flatten)]
    pub calibration: CalibrationSpec,
}

fn trajectory_table(run: &HartreeRun) -> Table {
    let mut t = Table::new(&["t", "s2_norm", "rho_l2"]);
    let rho = run.rho_norms();
    for (q, &time) in run.q.iter().zip(&run.q_times) {
        let k = frame_index(&run.rho, time).expect("checkpoints lie on the time grid");
        t.push(vec![num(time), num(q.hilbert_schmidt()), num(rho[k])]);
    }
    t
}

fn deltas_table(run: &HartreeRun) -> Table {
    let mut t = Table::new(&["iteration", "delta"]);
    for (i, d) in run.deltas.iter().enumerate() {
        t.push(vec![(i + 1).to_string(), num(*d)]);
    }
    t
}

fn solve(cfg: &SolveConfig, out: &mut OutputSet) -> Result<serde_json::Value, Failure> {
    let grid = cfg.grid.grid()?;
    let bg = cfg.background.build(grid)?;
    let q0 = cfg.initial.build(grid)?.to_dense()?.symmetrize();
    let scheme = match cfg.scheme {
        Some(s) => s,
        None => Scheme::for_dim(grid.dim())?,
    };
    let run = picard_solve(&q0, &bg, &cfg.picard, scheme)?;
    let prov = Provenance { seed: initial_seed(&cfg.initial), grid: cfg.grid.label(), dt: run.dt, t_final: run.t_final };
    trajectory_table(&run).write(&out.csv(""), &prov)?;
    deltas_table(&run).write(&out.csv("deltas"), &prov)?;
    let mut summary = json!({ "run": run.summary(), "scheme": scheme });
    if cfg.oracle {
        let oracle = dense_rk4_oracle(&q0, &bg, run.t_final, run.dt)?;
        trajectory_table(&oracle).write(&out.csv("oracle"), &prov)?;
        let dist = run.q.iter().zip(&oracle.q).map(|(a, b)| a.hs_distance(b)).collect::<Result<Vec<_>, _>>()?;
        summary["oracle_distance"] = json!(dist.into_iter().fold(0.0, f64::max));
    }
    Ok(summary)
}

fn c0_for(cfg: &LinearizedConfig, bg: &BackgroundState) -> Result<(f64, serde_json::Value), Failure> {
    match cfg.c0 {
        Some(c) => Ok((c, serde_json::Value::Null)),
        None => {
            let c = &cfg.calibration;
            let cal = calibrate_l1_constant(bg, &c.window, c.probes, c.seed)?;
            Ok((cal.c0, json!(cal)))
        }
    }
}

fn linearized(cfg: &LinearizedConfig, out: &mut OutputSet) -> Result<(LinearizedSolution, serde_json::Value, Provenance), Failure> {
    let grid = cfg.grid.grid()?;
    let bg = cfg.background.build(grid)?;
    let q0 = cfg.initial.build(grid)?;
    let (c0, calibration) = c0_for(cfg, &bg)?;
    let sol = linearized_solve(&q0, &bg, &cfg.window, c0)?;
    let prov = Provenance { seed: initial_seed(&cfg.initial), grid: cfg.grid.label(), dt: cfg.window.dt, t_final: cfg.window.t_final };
    let mut t = Table::new(&["t", "rho_l2", "source_l2"]);
    for (k, (r, s)) in sol.rho.frames().iter().zip(sol.source.frames()).enumerate() {
        t.push(vec![num(sol.rho.time(k)), num(r.norm_l2()), num(s.norm_l2())]);
    }
    t.write(&out.csv(""), &prov)?;
    let summary = json!({ "c0": c0, "calibration": calibration, "residual": sol.residual, "growth": sol.growth });
    Ok((sol, summary, prov))
}

fn scatter(cfg: &LinearizedConfig, out: &mut OutputSet) -> Result<serde_json::Value, Failure> {
    if cfg.ladder_levels < 2 {
        return Err(Failure::Invalid("ladder_levels must be at least 2".into()));
    }
    let (sol, mut summary, prov) = linearized(cfg, out)?;
    let ladder = dyadic_ladder(cfg.window.t_final, cfg.ladder_levels);
    let alpha: Exponent = scattering_exponent(cfg.grid.d);
    let rep = scattering_diagnostic(&sol, &ladder, alpha)?;
    let mut t = Table::new(&["t_from", "t_to", "distance", "ratio"]);
    for (i, d) in rep.distances.iter().enumerate() {
        let ratio = if i == 0 { None } else { rep.ratios.get(i - 1).copied() };
        t.push(vec![num(rep.times[i]), num(rep.times[i + 1]), num(*d), opt_num(ratio)]);
    }
    t.write(&out.csv("ladder"), &prov)?;
    summary["scattering"] = json!(rep);
    summary["verdict"] = json!(rep.verdict());
    Ok(summary)
}

fn calibrate(cfg: &CalibrateConfig, out: &mut OutputSet) -> Result<serde_json::Value, Failure> {
    let grid = cfg.grid.grid()?;
    let bg = cfg.background.build(grid)?;
    let c = &cfg.calibration;
    let cal = calibrate_l1_constant(&bg, &c.window, c.probes, c.seed)?;
    let mut t = Table::new(&["c0", "imag", "residual", "probes", "band"]);
    t.push(vec![num(cal.c0), num(cal.imag), num(cal.residual), cal.probes.to_string(), num(cal.band)]);
    let prov = Provenance { seed: c.seed, grid: cfg.grid.label(), dt: c.window.dt, t_final: c.window.t_final };
    t.write(&out.csv(""), &prov)?;
    Ok(json!(cal))
}

fn lwp(cfg: &LwpConfig, out: &mut OutputSet) -> Result<serde_json::Value, Failure> {
    let draws = lwp_ensemble(cfg)?;
    let mut t = Table::new(&["draw", "class_norm", "data_norm", "T_achieved", "halvings", "iterations", "max_ratio"]);
    for d in &draws {
        let s = d.summary();
        t.push(vec![
            s.draw.to_string(),
            num(s.class_norm),
            num(s.data_norm),
            num(s.t_achieved),
            s.halvings.to_string(),
            s.iterations.to_string(),
            opt_num(s.max_ratio),
        ]);
    }
    let prov = Provenance { seed: cfg.family.seed, grid: cfg.grid.label(), dt: cfg.picard.dt, t_final: cfg.picard.t_target };
    t.write(&out.csv(""), &prov)?;
    let accepted = draws.iter().filter(|d| d.data_norm.is_finite() && d.run.t_final > 0.0).count();
    let t_min = draws.iter().map(|d| d.run.t_final).fold(f64::INFINITY, f64::min);
    Ok(json!({ "draws": draws.len(), "accepted": accepted, "min_T": t_min, "exponents": cfg.exponents()? }))
}

pub fn calibrate_command(args: &RunArgs, command: &str) -> Result<(), Failure> {
    execute(command, args, |c: &CalibrateConfig| c.calibration.seed, calibrate)
}

pub fn run(cmd: &HartreeCmd) -> Result<(), Failure> {
    match cmd {
        HartreeCmd::Solve(a) => execute("hartree solve", a, |c: &SolveConfig| initial_seed(&c.initial), solve),
        HartreeCmd::Linearized(a) => {
            execute("hartree linearized", a, |c: &LinearizedConfig| initial_seed(&c.initial), |c, out| Ok(linearized(c, out)?.1))
        }
        HartreeCmd::Scatter(a) => execute("hartree scatter", a, |c: &LinearizedConfig| initial_seed(&c.initial), scatter),
        HartreeCmd::CalibrateL1(a) => calibrate_command(a, "hartree calibrate-l1"),
        HartreeCmd::Lwp(a) => execute("hartree lwp", a, |c: &LwpConfig| c.family.seed, lwp),
    }
}
