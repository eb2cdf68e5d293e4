//! Monte Carlo moment tables for randomized space-time density norms.
//!
//! Each draw is an independent task on its own random stream; draws are
//! evaluated with rayon and collected in draw order, so the samples (and the
//! tables built from them) do not depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exponents::{
    full_strichartz_exponents, function_randomization_exponents, rational_str, singular_strichartz_exponents,
    to_f64, ExponentTuple, Rational,
};
use crate::error::{Error, Result};
use crate::grid::{apply_multiplier, fft_nd, ComplexField, FourierMultiplier, Grid};
use crate::initial::{edge_mass_fraction, InitialFunction, InitialOperator};
use crate::linop::{Exponent, LowRankOperator, Operator};
use crate::norms::{lebesgue_norm, mixed_norm, time_norm, MomentTable, TableProvenance, Trajectory};
use crate::randomize::{
    sample_coefficients, singular_value_form, sobolev_conjugated_randomize, stream_id, wiener_randomize,
    PartitionOfUnity, RandomizationSpec, SubgaussianFamily,
};
use crate::C64;

/// Default limit on the mass fraction near the box edge along the free evolution.
pub const EDGE_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub length: f64,
}

impl GridSpec {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.d, self.n, self.length)
    }

    pub fn label(&self) -> String {
        format!("d={};n={};L={}", self.d, self.n, self.length)
    }
}

/// Uniform sampling of `[0, T]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub dt: f64,
}

impl TimeWindow {
    /// Number of frames `T/Δt + 1`; `T` must be an integer multiple of `Δt`.
    pub fn frames(&self) -> Result<usize> {
        if !(self.t_final > 0.0 && self.dt > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidArgument("time window needs T > 0 and dt > 0".into()));
        }
        let steps = self.t_final / self.dt;
        let k = steps.round();
        if (steps - k).abs() > 1e-9 * steps.max(1.0) || k < 2.0 {
            return Err(Error::InvalidArgument(format!(
                "T = {} must be an integer multiple (at least 2) of dt = {}",
                self.t_final, self.dt
            )));
        }
        Ok(k as usize + 1)
    }

    pub fn times(&self) -> Result<Vec<f64>> {
        Ok((0..self.frames()?).map(|k| k as f64 * self.dt).collect())
    }
}

fn default_edge_tolerance() -> Option<f64> {
    Some(EDGE_TOLERANCE)
}

/// Singular-value randomization of `γ₀` measured in `L^p_t L^q_x` with `⟨∇⟩^σ` on the density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularConfig {
    pub grid: GridSpec,
    pub initial: InitialOperator,
    #[serde(with = "rational_str")]
    pub sigma: Rational,
    #[serde(with = "rational_str")]
    pub p: Rational,
    #[serde(with = "rational_str")]
    pub q: Rational,
    pub family: SubgaussianFamily,
    pub samples: usize,
    pub orders: Vec<f64>,
    pub window: TimeWindow,
    #[serde(default)]
    pub experiment: u32,
    #[serde(default = "default_edge_tolerance")]
    pub edge_tolerance: Option<f64>,
}

/// Full randomization, measured in `L^p_t L^{q̂}_x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullConfig {
    pub grid: GridSpec,
    pub initial: InitialOperator,
    #[serde(with = "rational_str")]
    pub sigma: Rational,
    #[serde(with = "rational_str")]
    pub p: Rational,
    #[serde(with = "rational_str")]
    pub q: Rational,
    #[serde(with = "rational_str")]
    pub q_hat: Rational,
    pub family_g: SubgaussianFamily,
    pub family_l: SubgaussianFamily,
    pub samples: usize,
    pub orders: Vec<f64>,
    pub window: TimeWindow,
    #[serde(default)]
    pub experiment: u32,
    #[serde(default = "default_edge_tolerance")]
    pub edge_tolerance: Option<f64>,
}

/// Wiener randomization of a single function, measured in `L^p_t L^{q̂}_x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionConfig {
    pub grid: GridSpec,
    pub initial: InitialFunction,
    #[serde(with = "rational_str")]
    pub p: Rational,
    #[serde(with = "rational_str")]
    pub q: Rational,
    #[serde(with = "rational_str")]
    pub q_hat: Rational,
    pub family: SubgaussianFamily,
    pub samples: usize,
    pub orders: Vec<f64>,
    pub window: TimeWindow,
    #[serde(default)]
    pub experiment: u32,
    #[serde(default = "default_edge_tolerance")]
    pub edge_tolerance: Option<f64>,
}

/// Outcome of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrichartzRun {
    pub exponents: ExponentTuple,
    pub table: MomentTable,
    /// Largest edge mass fraction seen along the unrandomized evolution.
    pub edge_mass: f64,
    /// Requested orders below the smallest order the estimate covers.
    pub orders_below_range: Vec<f64>,
    /// Per-draw values `X_ω` in draw order.
    #[serde(skip)]
    pub samples: Vec<f64>,
}

/// Stream of the second (Wiener) family in a full randomization: the
/// experiment id with its top bit set, so it never collides with the first.
pub fn wiener_stream(experiment: u32, draw: u32) -> u64 {
    stream_id(experiment | 0x8000_0000, draw)
}

fn check_common(samples: usize, orders: &[f64]) -> Result<()> {
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    if orders.is_empty() || orders.iter().any(|r| !(*r >= 1.0 && r.is_finite())) {
        return Err(Error::InvalidArgument("moment orders must be a non-empty list of finite values >= 1".into()));
    }
    if orders.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("moment orders must be strictly increasing".into()));
    }
    if samples > u32::MAX as usize {
        return Err(Error::InvalidArgument("too many samples".into()));
    }
    Ok(())
}

fn exponent(r: Rational) -> Exponent {
    Exponent::new(to_f64(r)).expect("checked >= 1")
}

fn below(orders: &[f64], r_min: Rational) -> Vec<f64> {
    let r = to_f64(r_min);
    orders.iter().copied().filter(|&o| o < r).collect()
}

fn check_edge(edge: f64, tol: Option<f64>) -> Result<()> {
    match tol {
        Some(t) if edge > t => Err(Error::InvalidArgument(format!(
            "time window too long for the box: edge mass fraction {edge:e} exceeds {t:e}"
        ))),
        _ => Ok(()),
    }
}

fn provenance(grid: &GridSpec, seed: u64, window: &TimeWindow) -> TableProvenance {
    TableProvenance { seed, grid: grid.label(), dt: window.dt, t_final: window.t_final }
}

/// Raw DFT of each field.
fn raw_spectra(fields: &[ComplexField]) -> Vec<Vec<C64>> {
    fields
        .iter()
        .map(|f| {
            let mut v = f.values().to_vec();
            fft_nd(f.grid(), &mut v, false);
            v
        })
        .collect()
}

/// `F^{-1}(m · û)` from a raw spectrum.
fn synthesize(grid: &Grid, spectrum: &[C64], symbol: impl Fn(usize) -> C64) -> Vec<C64> {
    let mut v: Vec<C64> = spectrum.iter().enumerate().map(|(j, s)| s * symbol(j)).collect();
    fft_nd(grid, &mut v, true);
    v
}

fn propagator_phases(grid: &Grid, t: f64) -> Vec<C64> {
    grid.frequencies_sq().into_iter().map(|k2| C64::from_polar(1.0, -t * k2)).collect()
}

fn bessel_symbol(grid: &Grid, s: f64) -> Vec<f64> {
    grid.frequencies_sq().into_iter().map(|k2| (1.0 + k2).powf(0.5 * s)).collect()
}

fn max_edge_mass(fields: &[ComplexField], times: &[f64]) -> f64 {
    let spectra = raw_spectra(fields);
    let mut worst = 0.0f64;
    for &t in times {
        let grid = match fields.first() {
            Some(f) => *f.grid(),
            None => return 0.0,
        };
        let phase = propagator_phases(&grid, t);
        for s in &spectra {
            let u = ComplexField::new(grid, synthesize(&grid, s, |j| phase[j])).expect("length");
            worst = worst.max(edge_mass_fraction(&u));
        }
    }
    worst
}

/// `⟨∇⟩^σ γ₀ ⟨∇⟩^σ` in singular-value form.
fn weighted_svf(gamma: &LowRankOperator, sigma: f64) -> Result<LowRankOperator> {
    let weighted = if sigma == 0.0 {
        gamma.clone()
    } else {
        gamma.conjugate_multiplier(&FourierMultiplier::bessel(*gamma.grid(), sigma))?
    };
    singular_value_form(&weighted)
}

/// Per-term density contributions `⟨∇⟩^σ[(U(t)⟨∇⟩^{-σ}φ_n) conj(U(t)⟨∇⟩^{-σ}ψ_n)]`,
/// indexed `[frame][term]`. The randomized density is linear in the coefficients.
fn term_densities(svf: &LowRankOperator, sigma: f64, times: &[f64]) -> Vec<Vec<Vec<C64>>> {
    let grid = *svf.grid();
    let inv = bessel_symbol(&grid, -sigma);
    let fwd = bessel_symbol(&grid, sigma);
    let left = raw_spectra(svf.left());
    let right = raw_spectra(svf.right());
    times
        .par_iter()
        .map(|&t| {
            let phase = propagator_phases(&grid, t);
            left.iter()
                .zip(&right)
                .map(|(l, r)| {
                    let a = synthesize(&grid, l, |j| phase[j] * inv[j]);
                    let b = synthesize(&grid, r, |j| phase[j] * inv[j]);
                    let mut rho: Vec<C64> = a.iter().zip(&b).map(|(x, y)| x * y.conj()).collect();
                    if sigma != 0.0 {
                        fft_nd(&grid, &mut rho, false);
                        for (v, w) in rho.iter_mut().zip(&fwd) {
                            *v *= w;
                        }
                        fft_nd(&grid, &mut rho, true);
                    }
                    rho
                })
                .collect()
        })
        .collect()
}

/// Randomized Strichartz moments for singular-value randomization.
pub fn mc_strichartz_singular(cfg: &SingularConfig) -> Result<StrichartzRun> {
    let exponents = singular_strichartz_exponents(cfg.p, cfg.q, cfg.sigma, cfg.grid.d)?;
    check_common(cfg.samples, &cfg.orders)?;
    let grid = cfg.grid.grid()?;
    let times = cfg.window.times()?;
    let gamma = cfg.initial.build(grid)?;
    let edge = if cfg.initial.is_localized() { max_edge_mass(gamma.left(), &times) } else { 0.0 };
    check_edge(edge, cfg.edge_tolerance)?;
    let samples = singular_samples(cfg, &gamma, &times)?;
    let table = MomentTable::from_samples(&samples, &cfg.orders, provenance(&cfg.grid, cfg.family.seed, &cfg.window))?;
    Ok(StrichartzRun { orders_below_range: below(&cfg.orders, exponents.r), exponents, table, edge_mass: edge, samples })
}

fn singular_samples(cfg: &SingularConfig, gamma: &LowRankOperator, times: &[f64]) -> Result<Vec<f64>> {
    let grid = *gamma.grid();
    let sigma = to_f64(cfg.sigma);
    let (p, q) = (exponent(cfg.p), exponent(cfg.q));
    let svf = weighted_svf(gamma, sigma)?;
    if svf.rank() == 0 {
        return Ok(vec![0.0; cfg.samples]);
    }
    let terms = term_densities(&svf, sigma, times);
    let b: Vec<f64> = svf.coeffs().iter().map(|c| c.re).collect();
    let samples = (0..cfg.samples as u32)
        .into_par_iter()
        .map(|m| {
            let g = sample_coefficients(&cfg.family, svf.rank(), stream_id(cfg.experiment, m));
            let w: Vec<f64> = b.iter().zip(&g).map(|(b, g)| b * g).collect();
            let per_frame: Vec<f64> = terms
                .iter()
                .map(|frame| {
                    let mut rho = vec![C64::new(0.0, 0.0); grid.len()];
                    for (wn, t) in w.iter().zip(frame) {
                        for (r, v) in rho.iter_mut().zip(t) {
                            *r += v * wn;
                        }
                    }
                    lebesgue_norm(&ComplexField::new(grid, rho).expect("length"), q)
                })
                .collect();
            time_norm(&per_frame, cfg.window.dt, p)
        })
        .collect();
    Ok(samples)
}

/// One sample of the singular experiment computed the long way: randomize the
/// operator, evolve it, take its density, apply `⟨∇⟩^σ`, take the mixed norm.
pub fn singular_sample_direct(cfg: &SingularConfig, draw: u32) -> Result<f64> {
    let grid = cfg.grid.grid()?;
    let gamma = cfg.initial.build(grid)?;
    let sigma = to_f64(cfg.sigma);
    let spec = RandomizationSpec::Singular { family: cfg.family, stream: stream_id(cfg.experiment, draw) };
    let a = sobolev_conjugated_randomize(&gamma, sigma, &spec)?.into_inner();
    weighted_density_norm(&a, sigma, &cfg.window, exponent(cfg.p), exponent(cfg.q))
}

fn weighted_density_norm(a: &LowRankOperator, sigma: f64, window: &TimeWindow, p: Exponent, q: Exponent) -> Result<f64> {
    let grid = *a.grid();
    let tr = crate::norms::density_trajectory(a, 0.0, window.dt, window.frames()?)?;
    let weight = FourierMultiplier::bessel(grid, sigma);
    let frames = tr.frames().iter().map(|f| apply_multiplier(&weight, f)).collect::<Result<Vec<_>>>()?;
    Ok(mixed_norm(&Trajectory::new(0.0, window.dt, frames)?, p, q))
}

/// Randomized Strichartz moments for full randomization.
pub fn mc_strichartz_full(cfg: &FullConfig) -> Result<StrichartzRun> {
    let exponents = full_strichartz_exponents(cfg.p, cfg.q, cfg.q_hat, cfg.sigma, cfg.grid.d)?;
    check_common(cfg.samples, &cfg.orders)?;
    let grid = cfg.grid.grid()?;
    let pou = PartitionOfUnity::new(grid)?;
    let times = cfg.window.times()?;
    let gamma = cfg.initial.build(grid)?;
    let edge = if cfg.initial.is_localized() { max_edge_mass(gamma.left(), &times) } else { 0.0 };
    check_edge(edge, cfg.edge_tolerance)?;
    let sigma = to_f64(cfg.sigma);
    let (p, q_hat) = (exponent(cfg.p), exponent(cfg.q_hat));
    let svf = weighted_svf(&gamma, sigma)?;
    let samples = if svf.rank() == 0 {
        vec![0.0; cfg.samples]
    } else {
        let left = raw_spectra(svf.left());
        let right = raw_spectra(svf.right());
        let inv = bessel_symbol(&grid, -sigma);
        let fwd = bessel_symbol(&grid, sigma);
        let phases: Vec<Vec<C64>> = times.iter().map(|&t| propagator_phases(&grid, t)).collect();
        let b: Vec<f64> = svf.coeffs().iter().map(|c| c.re).collect();
        (0..cfg.samples as u32)
            .into_par_iter()
            .map(|m| -> Result<f64> {
                let g = sample_coefficients(&cfg.family_g, svf.rank(), stream_id(cfg.experiment, m));
                let ell = sample_coefficients(&cfg.family_l, pou.cell_count(), wiener_stream(cfg.experiment, m));
                let r = pou.weighted_symbol(&ell)?;
                let per_frame: Vec<f64> = phases
                    .iter()
                    .map(|phase| {
                        let mut rho = vec![C64::new(0.0, 0.0); grid.len()];
                        for ((bn, gn), (l, rr)) in b.iter().zip(&g).zip(left.iter().zip(&right)) {
                            let sym = |j: usize| phase[j] * inv[j] * r.symbol()[j];
                            let x = synthesize(&grid, l, sym);
                            let y = synthesize(&grid, rr, sym);
                            let w = bn * gn;
                            for ((acc, u), v) in rho.iter_mut().zip(&x).zip(&y) {
                                *acc += u * v.conj() * w;
                            }
                        }
                        if sigma != 0.0 {
                            fft_nd(&grid, &mut rho, false);
                            for (v, w) in rho.iter_mut().zip(&fwd) {
                                *v *= w;
                            }
                            fft_nd(&grid, &mut rho, true);
                        }
                        lebesgue_norm(&ComplexField::new(grid, rho).expect("length"), q_hat)
                    })
                    .collect();
                Ok(time_norm(&per_frame, cfg.window.dt, p))
            })
            .collect::<Result<Vec<f64>>>()?
    };
    let table = MomentTable::from_samples(&samples, &cfg.orders, provenance(&cfg.grid, cfg.family_g.seed, &cfg.window))?;
    Ok(StrichartzRun { orders_below_range: below(&cfg.orders, exponents.r), exponents, table, edge_mass: edge, samples })
}

/// One full-randomization sample computed through [`sobolev_conjugated_randomize`].
pub fn full_sample_direct(cfg: &FullConfig, draw: u32) -> Result<f64> {
    let grid = cfg.grid.grid()?;
    let pou = PartitionOfUnity::new(grid)?;
    let gamma = cfg.initial.build(grid)?;
    let sigma = to_f64(cfg.sigma);
    let spec = RandomizationSpec::Full {
        family_g: cfg.family_g,
        family_l: cfg.family_l,
        pou: &pou,
        stream_g: stream_id(cfg.experiment, draw),
        stream_l: wiener_stream(cfg.experiment, draw),
    };
    let a = sobolev_conjugated_randomize(&gamma, sigma, &spec)?.into_inner();
    weighted_density_norm(&a, sigma, &cfg.window, exponent(cfg.p), exponent(cfg.q_hat))
}

/// Moments of `‖U(t) f^ω̃‖_{L^p_t L^{q̂}_x}` for a Wiener-randomized function.
pub fn mc_function_randomization(cfg: &FunctionConfig) -> Result<StrichartzRun> {
    let exponents = function_randomization_exponents(cfg.p, cfg.q, cfg.q_hat, cfg.grid.d)?;
    check_common(cfg.samples, &cfg.orders)?;
    let grid = cfg.grid.grid()?;
    let pou = PartitionOfUnity::new(grid)?;
    let times = cfg.window.times()?;
    let f = cfg.initial.build(grid)?;
    let edge = if cfg.initial.is_localized() { max_edge_mass(std::slice::from_ref(&f), &times) } else { 0.0 };
    check_edge(edge, cfg.edge_tolerance)?;
    let (p, q_hat) = (exponent(cfg.p), exponent(cfg.q_hat));
    let spectrum = raw_spectra(std::slice::from_ref(&f)).pop().expect("one field");
    let phases: Vec<Vec<C64>> = times.iter().map(|&t| propagator_phases(&grid, t)).collect();
    let samples = (0..cfg.samples as u32)
        .into_par_iter()
        .map(|m| -> Result<f64> {
            let ell = sample_coefficients(&cfg.family, pou.cell_count(), stream_id(cfg.experiment, m));
            let r = pou.weighted_symbol(&ell)?;
            let per_frame: Vec<f64> = phases
                .iter()
                .map(|phase| {
                    let u = synthesize(&grid, &spectrum, |j| phase[j] * r.symbol()[j]);
                    lebesgue_norm(&ComplexField::new(grid, u).expect("length"), q_hat)
                })
                .collect();
            Ok(time_norm(&per_frame, cfg.window.dt, p))
        })
        .collect::<Result<Vec<f64>>>()?;
    let table = MomentTable::from_samples(&samples, &cfg.orders, provenance(&cfg.grid, cfg.family.seed, &cfg.window))?;
    Ok(StrichartzRun { orders_below_range: below(&cfg.orders, exponents.r), exponents, table, edge_mass: edge, samples })
}

/// One function-randomization sample through [`wiener_randomize`].
pub fn function_sample_direct(cfg: &FunctionConfig, draw: u32) -> Result<f64> {
    let grid = cfg.grid.grid()?;
    let pou = PartitionOfUnity::new(grid)?;
    let f = cfg.initial.build(grid)?;
    let fr = wiener_randomize(&f, &cfg.family, &pou, stream_id(cfg.experiment, draw))?.into_inner();
    let frames = cfg.window.times()?.iter().map(|&t| crate::grid::free_propagate(&fr, t)).collect();
    Ok(mixed_norm(&Trajectory::new(0.0, cfg.window.dt, frames)?, exponent(cfg.p), exponent(cfg.q_hat)))
}

/// Exact density of a rank-one draw-independent configuration; used by callers
/// that compare against closed-form moments.
pub fn deterministic_norm(
    gamma: &LowRankOperator,
    sigma: f64,
    window: &TimeWindow,
    p: Exponent,
    q: Exponent,
) -> Result<f64> {
    weighted_density_norm(gamma, sigma, window, p, q)
}
