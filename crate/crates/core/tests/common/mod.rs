#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schatten_core::linop::orthonormalize;
use schatten_core::{ComplexField, Grid, LowRankOperator, C64};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_field(grid: Grid, rng: &mut ChaCha8Rng) -> ComplexField {
    let v = (0..grid.len()).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    ComplexField::new(grid, v).unwrap()
}

pub fn random_real_field(grid: Grid, rng: &mut ChaCha8Rng) -> ComplexField {
    let v = (0..grid.len()).map(|_| C64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
    ComplexField::new(grid, v).unwrap()
}

/// Smooth random field: a few Gaussian bumps with random centres and phases.
pub fn smooth_field(grid: Grid, rng: &mut ChaCha8Rng) -> ComplexField {
    let half = 0.3 * grid.length();
    let bumps: Vec<([f64; 3], [f64; 3], C64)> = (0..3)
        .map(|_| {
            let mut c = [0.0; 3];
            let mut p = [0.0; 3];
            for a in 0..grid.dim() {
                c[a] = rng.random_range(-half..half) * 0.5;
                p[a] = rng.random_range(-1.5..1.5);
            }
            (c, p, C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        })
        .collect();
    ComplexField::from_fn(grid, |x| {
        bumps
            .iter()
            .map(|(c, p, a)| {
                let r2: f64 = (0..3).map(|k| (x[k] - c[k]).powi(2)).sum();
                let ph: f64 = (0..3).map(|k| p[k] * x[k]).sum();
                a * C64::from_polar((-r2).exp(), ph)
            })
            .sum()
    })
}

pub fn random_low_rank(grid: Grid, rank: usize, rng: &mut ChaCha8Rng) -> LowRankOperator {
    let coeffs = (0..rank).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let left = (0..rank).map(|_| random_field(grid, rng)).collect();
    let right = (0..rank).map(|_| random_field(grid, rng)).collect();
    LowRankOperator::new(grid, coeffs, left, right).unwrap()
}

pub fn random_hermitian(grid: Grid, eigenvalues: &[f64], rng: &mut ChaCha8Rng) -> LowRankOperator {
    let raw: Vec<_> = eigenvalues.iter().map(|_| random_field(grid, rng)).collect();
    let q = orthonormalize(&raw).unwrap();
    LowRankOperator::spectral(grid, eigenvalues, q).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
