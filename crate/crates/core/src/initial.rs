//! Reproducible initial data: finite-rank operators and single functions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid};
use crate::linop::{orthonormalize, LowRankOperator};
use crate::C64;

fn default_width() -> f64 {
    1.5
}

fn default_decay() -> f64 {
    0.5
}

/// A normalized gaussian packet `e^{-|x-c|²/(2w²)} e^{iξ₀·x}` (unit weighted `L²` norm).
pub fn gaussian_packet(grid: Grid, center: [f64; 3], momentum: [f64; 3], width: f64) -> ComplexField {
    let d = grid.dim();
    let mut u = ComplexField::from_fn(grid, |x| {
        let mut r2 = 0.0;
        let mut phase = 0.0;
        for a in 0..d {
            r2 += (x[a] - center[a]).powi(2);
            phase += momentum[a] * x[a];
        }
        C64::from_polar((-r2 / (2.0 * width * width)).exp(), phase)
    });
    let n = u.norm_l2();
    if n > 0.0 {
        u = u.scaled(C64::new(1.0 / n, 0.0));
    }
    u
}

/// Normalized plane wave `L^{-d/2} e^{iξ_m·x}` at signed lattice index `mode`.
pub fn plane_wave(grid: Grid, mode: [i64; 3]) -> ComplexField {
    let dk = grid.frequency_spacing();
    let d = grid.dim();
    let amp = grid.volume().powf(-0.5);
    ComplexField::from_fn(grid, |x| {
        let phase: f64 = (0..d).map(|a| dk * mode[a] as f64 * x[a]).sum();
        C64::from_polar(amp, phase)
    })
}

/// Fraction of `∫|u|²` lying outside the central box `[-0.4L, 0.4L]^d`.
pub fn edge_mass_fraction(u: &ComplexField) -> f64 {
    let g = u.grid();
    let cut = 0.4 * g.length();
    let (mut edge, mut total) = (0.0, 0.0);
    for (j, v) in u.values().iter().enumerate() {
        let x = g.position(j);
        let m = v.norm_sqr();
        total += m;
        if (0..g.dim()).any(|a| x[a].abs() > cut) {
            edge += m;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        edge / total
    }
}

/// Finite-rank initial operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialOperator {
    Zero,
    /// `Σ λ_n |u_n⟩⟨u_n|` with `u_n` orthonormalized gaussian packets at random
    /// centers in `[-center_spread, center_spread]^d` and momenta in `[-momentum_spread, momentum_spread]^d`.
    /// Without explicit eigenvalues `λ_n = (n+1)^{-decay}`.
    WavePackets {
        rank: usize,
        seed: u64,
        #[serde(default = "default_width")]
        width: f64,
        center_spread: f64,
        momentum_spread: f64,
        #[serde(default)]
        eigenvalues: Option<Vec<f64>>,
        #[serde(default = "default_decay")]
        decay: f64,
    },
    /// `λ |e_m⟩⟨e_m|` for one plane wave.
    PlaneWave { mode: [i64; 3], eigenvalue: f64 },
}

impl InitialOperator {
    pub fn build(&self, grid: Grid) -> Result<LowRankOperator> {
        match self {
            InitialOperator::Zero => Ok(LowRankOperator::zero(grid)),
            InitialOperator::WavePackets { rank, seed, width, center_spread, momentum_spread, eigenvalues, decay } => {
                let lambdas: Vec<f64> = match eigenvalues {
                    Some(l) if l.len() != *rank => {
                        return Err(Error::InvalidArgument(format!(
                            "{} eigenvalues given for rank {rank}",
                            l.len()
                        )))
                    }
                    Some(l) => l.clone(),
                    None => (0..*rank).map(|n| ((n + 1) as f64).powf(-decay)).collect(),
                };
                if !(*width > 0.0) {
                    return Err(Error::InvalidArgument("packet width must be positive".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let d = grid.dim();
                let mut draw = |spread: f64| {
                    let mut v = [0.0; 3];
                    for x in v.iter_mut().take(d) {
                        *x = if spread > 0.0 { rng.random_range(-spread..=spread) } else { 0.0 };
                    }
                    v
                };
                let packets: Vec<ComplexField> = (0..*rank)
                    .map(|_| {
                        let c = draw(*center_spread);
                        let k = draw(*momentum_spread);
                        gaussian_packet(grid, c, k, *width)
                    })
                    .collect();
                LowRankOperator::spectral(grid, &lambdas, orthonormalize(&packets)?)
            }
            InitialOperator::PlaneWave { mode, eigenvalue } => {
                LowRankOperator::spectral(grid, &[*eigenvalue], vec![plane_wave(grid, *mode)])
            }
        }
    }

    /// Whether the data is spatially localized, so that wrap-around can be monitored.
    pub fn is_localized(&self) -> bool {
        matches!(self, InitialOperator::WavePackets { .. })
    }
}

/// A single initial function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialFunction {
    Zero,
    Gaussian {
        #[serde(default)]
        center: [f64; 3],
        #[serde(default)]
        momentum: [f64; 3],
        #[serde(default = "default_width")]
        width: f64,
    },
    PlaneWave { mode: [i64; 3], amplitude: f64 },
}

impl InitialFunction {
    pub fn build(&self, grid: Grid) -> Result<ComplexField> {
        match self {
            InitialFunction::Zero => Ok(ComplexField::zeros(grid)),
            InitialFunction::Gaussian { center, momentum, width } => {
                if !(*width > 0.0) {
                    return Err(Error::InvalidArgument("packet width must be positive".into()));
                }
                Ok(gaussian_packet(grid, *center, *momentum, *width))
            }
            InitialFunction::PlaneWave { mode, amplitude } => {
                Ok(plane_wave(grid, *mode).scaled(C64::new(*amplitude, 0.0)))
            }
        }
    }

    pub fn is_localized(&self) -> bool {
        matches!(self, InitialFunction::Gaussian { .. })
    }
}
