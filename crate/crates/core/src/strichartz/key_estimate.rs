//! Empirical check of the trace estimate
//! `‖∫₀^T U(τ)^* V(τ) Q(τ) U(τ) dτ‖_{S^α} ≲ ‖V‖_{L^μ_T L^ν_x} sup_τ ‖Q(τ)‖_{S^α}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exponents::{key_estimate_exponents, rational_str, to_f64, Rational};
use super::monte_carlo::{GridSpec, TimeWindow};
use crate::error::{Error, Result};
use crate::grid::{free_propagate, ComplexField, Grid};
use crate::initial::gaussian_packet;
use crate::linop::{schatten_norm, Exponent, LowRankOperator};
use crate::norms::{mixed_norm, trapezoid_weights, Trajectory};
use crate::randomize::stream_id;
use crate::C64;

/// Both sides of the estimate for one `(V, Q)` with `Q` constant in time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeySides {
    pub lhs: f64,
    pub rhs: f64,
}

impl KeySides {
    pub fn ratio(&self) -> f64 {
        if self.rhs == 0.0 {
            0.0
        } else {
            self.lhs / self.rhs
        }
    }
}

/// Evaluates both sides with the trapezoid rule on `window`; `potential(τ)` must be real.
pub fn key_estimate_sides(
    potential: impl Fn(f64) -> ComplexField,
    q: &LowRankOperator,
    mu: Rational,
    alpha: Exponent,
    window: &TimeWindow,
) -> Result<KeySides> {
    let grid = *q.grid();
    let ke = key_estimate_exponents(mu, grid.dim())?;
    if !(alpha.value() == 2.0 || alpha.is_infinite()) {
        return Err(Error::InvalidExponent(format!("trace estimate implemented for alpha in {{2, inf}}, got {alpha}")));
    }
    let frames = window.frames()?;
    let w = trapezoid_weights(frames, window.dt);
    let mut integral = LowRankOperator::zero(grid);
    let mut v_frames = Vec::with_capacity(frames);
    for (k, wk) in w.iter().enumerate() {
        let tau = k as f64 * window.dt;
        let v = potential(tau);
        if v.grid() != &grid {
            return Err(Error::GridMismatch("potential and Q live on different grids".into()));
        }
        // U(τ)^* V Q U(τ) = Σ c |U(-τ) V u⟩⟨U(-τ) v|
        let left = q.left().iter().map(|u| v.mul(u).map(|vu| free_propagate(&vu, -tau))).collect::<Result<Vec<_>>>()?;
        let right = q.right().iter().map(|x| free_propagate(x, -tau)).collect();
        let coeffs = q.coeffs().iter().map(|c| c * *wk).collect();
        integral = integral.add(&LowRankOperator::new(grid, coeffs, left, right)?)?;
        v_frames.push(v);
    }
    let lhs = schatten_norm(&integral, alpha)?.value;
    let v_norm = mixed_norm(&Trajectory::new(0.0, window.dt, v_frames)?, Exponent::new(to_f64(mu))?, Exponent::new(ke.nu())?);
    let rhs = v_norm * schatten_norm(q, alpha)?.value;
    Ok(KeySides { lhs, rhs })
}

/// Random `(V, Q)` ensembles for [`key_estimate_probe`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyEstimateConfig {
    pub grid: GridSpec,
    #[serde(with = "rational_str")]
    pub mu: Rational,
    pub alpha: Exponent,
    pub window: TimeWindow,
    pub instances: usize,
    /// Rank of the random `Q`.
    pub rank: usize,
    /// Number of oscillating bumps in each random `V`.
    pub bumps: usize,
    pub seed: u64,
    #[serde(default)]
    pub experiment: u32,
}

/// Ratio statistics over the ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyEstimateStats {
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub mean_ratio: f64,
}

/// A random smooth real potential `V(τ, x) = Σ_j a_j cos(ω_j τ + φ_j) e^{-|x-c_j|²/(2w_j²)}`
/// and a random rank-`R` `Q`, both independent of the time step.
#[derive(Clone, Debug)]
pub struct KeyInstance {
    grid: Grid,
    bumps: Vec<(f64, f64, f64, [f64; 3], f64)>,
    pub q: LowRankOperator,
}

impl KeyInstance {
    pub fn random(grid: Grid, rank: usize, bumps: usize, seed: u64, stream: u64) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let d = grid.dim();
        let half = 0.25 * grid.length();
        let point = |rng: &mut ChaCha20Rng, s: f64| {
            let mut c = [0.0; 3];
            for x in c.iter_mut().take(d) {
                *x = rng.random_range(-s..=s);
            }
            c
        };
        let bumps = (0..bumps)
            .map(|_| {
                let a = rng.random_range(-1.0..=1.0);
                let omega = rng.random_range(0.0..=4.0);
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                let c = point(&mut rng, half);
                let w = rng.random_range(0.5..=2.0);
                (a, omega, phi, c, w)
            })
            .collect();
        let mut coeffs = Vec::with_capacity(rank);
        let mut left = Vec::with_capacity(rank);
        let mut right = Vec::with_capacity(rank);
        for _ in 0..rank {
            coeffs.push(C64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)));
            let (c1, k1) = (point(&mut rng, half), point(&mut rng, 1.0));
            let (c2, k2) = (point(&mut rng, half), point(&mut rng, 1.0));
            left.push(gaussian_packet(grid, c1, k1, 1.0));
            right.push(gaussian_packet(grid, c2, k2, 1.0));
        }
        Ok(KeyInstance { grid, bumps, q: LowRankOperator::new(grid, coeffs, left, right)? })
    }

    pub fn potential(&self, tau: f64) -> ComplexField {
        let d = self.grid.dim();
        ComplexField::from_fn(self.grid, |x| {
            let v: f64 = self
                .bumps
                .iter()
                .map(|(a, omega, phi, c, w)| {
                    let r2: f64 = (0..d).map(|i| (x[i] - c[i]).powi(2)).sum();
                    a * (omega * tau + phi).cos() * (-r2 / (2.0 * w * w)).exp()
                })
                .sum();
            C64::new(v, 0.0)
        })
    }
}

/// Evaluates the trace estimate on `instances` random `(V, Q)` pairs.
pub fn key_estimate_probe(cfg: &KeyEstimateConfig) -> Result<KeyEstimateStats> {
    key_estimate_exponents(cfg.mu, cfg.grid.d)?;
    if cfg.instances == 0 || cfg.rank == 0 {
        return Err(Error::InvalidArgument("need at least one instance of rank >= 1".into()));
    }
    let grid = cfg.grid.grid()?;
    let ratios = (0..cfg.instances as u32)
        .into_par_iter()
        .map(|i| {
            let inst = KeyInstance::random(grid, cfg.rank, cfg.bumps, cfg.seed, stream_id(cfg.experiment, i))?;
            Ok(key_estimate_sides(|t| inst.potential(t), &inst.q, cfg.mu, cfg.alpha, &cfg.window)?.ratio())
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    Ok(KeyEstimateStats { ratios, max_ratio, mean_ratio })
}
