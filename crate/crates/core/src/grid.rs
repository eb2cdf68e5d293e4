//! Periodic grids, sampled fields and translation-invariant operators.
//!
//! Space is the box `[-L/2, L/2)^d` sampled at `n` points per axis, stored
//! row-major (axis 0 slowest). The frequency lattice is `2πk/L` with
//! `k ∈ {-n/2, …, n/2-1}`; the Nyquist index sits on the negative side.
//!
//! Transform convention: `û(ξ) = h^d Σ_x e^{-iξ·x} u(x)` and
//! `u(x) = L^{-d} Σ_ξ e^{iξ·x} û(ξ)`. Multiplier symbols are stored in FFT
//! order (per axis index `m`, signed index `m` or `m - n`).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Uniform periodic grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("points per axis must be a power of two >= 8, got {n}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidGrid(format!("box length must be positive, got {length}")));
        }
        Ok(Grid { dim, n, length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Total number of points `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `h^d`, the quadrature weight of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// `L^d`.
    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Frequency lattice spacing `2π/L`.
    pub fn frequency_spacing(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.length
    }

    /// Largest |ξ| component on the lattice, `π n / L`.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI * self.n as f64 / self.length
    }

    /// Per-axis indices of a flat index.
    pub fn unflatten(&self, flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let mut rest = flat;
        for axis in (0..self.dim).rev() {
            idx[axis] = rest % self.n;
            rest /= self.n;
        }
        idx
    }

    pub fn flatten(&self, idx: [usize; 3]) -> usize {
        let mut flat = 0;
        for &i in idx.iter().take(self.dim) {
            flat = flat * self.n + i;
        }
        flat
    }

    /// Signed frequency index for FFT slot `m` on one axis.
    pub fn signed_index(&self, m: usize) -> i64 {
        if m < self.n / 2 {
            m as i64
        } else {
            m as i64 - self.n as i64
        }
    }

    /// FFT slot of a signed index, wrapping modulo `n`.
    pub fn slot_of(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    pub fn position(&self, flat: usize) -> [f64; 3] {
        let idx = self.unflatten(flat);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = -0.5 * self.length + h * idx[axis] as f64;
        }
        x
    }

    pub fn frequency(&self, flat: usize) -> [f64; 3] {
        let idx = self.unflatten(flat);
        let dk = self.frequency_spacing();
        let mut xi = [0.0; 3];
        for axis in 0..self.dim {
            xi[axis] = dk * self.signed_index(idx[axis]) as f64;
        }
        xi
    }

    pub fn frequency_sq(&self, flat: usize) -> f64 {
        self.frequency(flat).iter().map(|v| v * v).sum()
    }

    /// `|ξ|²` for every lattice frequency in FFT order.
    pub fn frequencies_sq(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.frequency_sq(j)).collect()
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }

    /// Flat index of `x - y` (periodic difference of grid points).
    pub(crate) fn difference_index(&self, x: usize, y: usize) -> usize {
        let a = self.unflatten(x);
        let b = self.unflatten(y);
        let mut d = [0usize; 3];
        for axis in 0..self.dim {
            d[axis] = (a[axis] + self.n - b[axis]) % self.n;
        }
        self.flatten(d)
    }

    /// Flat frequency index of `ξ ⊖ η`.
    pub(crate) fn frequency_diff_index(&self, a: usize, b: usize) -> usize {
        self.difference_index(a, b)
    }
}

type Plan = Arc<dyn Fft<f64>>;

fn plan(n: usize, inverse: bool) -> Plan {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Plan>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry((n, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

/// In-place unnormalized d-dimensional DFT (`e^{∓2πi jk/n}` per axis).
/// The inverse direction includes the `1/N` normalization.
pub(crate) fn fft_nd(grid: &Grid, data: &mut [C64], inverse: bool) {
    let n = grid.n();
    let d = grid.dim();
    debug_assert_eq!(data.len(), grid.len());
    let fft = plan(n, inverse);
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    // last axis is contiguous
    fft.process_with_scratch(data, &mut scratch);
    let mut line = vec![C64::new(0.0, 0.0); n];
    for axis in 0..d.saturating_sub(1) {
        let stride = n.pow((d - 1 - axis) as u32);
        let outer = grid.len() / (n * stride);
        for o in 0..outer {
            let base = o * n * stride;
            for inner in 0..stride {
                for (j, v) in line.iter_mut().enumerate() {
                    *v = data[base + j * stride + inner];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, v) in line.iter().enumerate() {
                    data[base + j * stride + inner] = *v;
                }
            }
        }
    }
    if inverse {
        let s = 1.0 / grid.len() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }
}

/// Complex samples of a function on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    values: Vec<C64>,
}

impl ComplexField {
    pub fn new(grid: Grid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} samples, grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(ComplexField { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        ComplexField { grid, values: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    pub fn constant(grid: Grid, c: C64) -> Self {
        ComplexField { grid, values: vec![c; grid.len()] }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut([f64; 3]) -> C64) -> Self {
        let values = (0..grid.len()).map(|j| f(grid.position(j))).collect();
        ComplexField { grid, values }
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    /// Field whose transform is `coeffs` (physical convention, FFT order).
    pub fn from_coefficients(grid: Grid, coeffs: &[C64]) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::InvalidArgument("coefficient length mismatch".into()));
        }
        let mut values: Vec<C64> = coeffs.iter().zip(transform_phases(&grid)).map(|(c, p)| c * p.conj()).collect();
        fft_nd(&grid, &mut values, true);
        let s = 1.0 / grid.cell_volume();
        for v in values.iter_mut() {
            *v *= s;
        }
        Ok(ComplexField { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    /// `⟨self, other⟩ = h^d Σ conj(self) other`.
    pub fn inner(&self, other: &ComplexField) -> Result<C64> {
        self.grid.check_same(&other.grid)?;
        let s: C64 = self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn norm_l2(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn scaled(&self, c: C64) -> ComplexField {
        ComplexField { grid: self.grid, values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn add(&self, other: &ComplexField) -> Result<ComplexField> {
        self.grid.check_same(&other.grid)?;
        Ok(ComplexField { grid: self.grid, values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect() })
    }

    pub fn sub(&self, other: &ComplexField) -> Result<ComplexField> {
        self.grid.check_same(&other.grid)?;
        Ok(ComplexField { grid: self.grid, values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect() })
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: C64, other: &ComplexField) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(())
    }

    /// Pointwise product.
    pub fn mul(&self, other: &ComplexField) -> Result<ComplexField> {
        self.grid.check_same(&other.grid)?;
        Ok(ComplexField { grid: self.grid, values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect() })
    }

    pub fn conj(&self) -> ComplexField {
        ComplexField { grid: self.grid, values: self.values.iter().map(|v| v.conj()).collect() }
    }

    /// Keeps the real part, dropping round-off imaginary parts.
    pub fn real_part(&self) -> ComplexField {
        ComplexField { grid: self.grid, values: self.values.iter().map(|v| C64::new(v.re, 0.0)).collect() }
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `∫ u dx` by the rectangle rule (exact for trigonometric polynomials).
    pub fn integral(&self) -> C64 {
        self.values.iter().sum::<C64>() * self.grid.cell_volume()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Transform coefficients `û(ξ)` in FFT order.
    pub fn coefficients(&self) -> Vec<C64> {
        let mut c = self.values.clone();
        fft_nd(&self.grid, &mut c, false);
        let hd = self.grid.cell_volume();
        for (v, p) in c.iter_mut().zip(transform_phases(&self.grid)) {
            *v *= p * hd;
        }
        c
    }
}

/// Phase `e^{-iξ·x_0}` with `x_0 = (-L/2, …)`, i.e. `(-1)^{k_1+…+k_d}`.
fn transform_phases(grid: &Grid) -> impl Iterator<Item = C64> + '_ {
    (0..grid.len()).map(move |j| {
        let idx = grid.unflatten(j);
        let parity: i64 = (0..grid.dim()).map(|a| grid.signed_index(idx[a])).sum();
        if parity.rem_euclid(2) == 0 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(-1.0, 0.0)
        }
    })
}

/// A translation-invariant operator `m(-i∇)` given by its symbol on the lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierMultiplier {
    grid: Grid,
    symbol: Vec<C64>,
}

impl FourierMultiplier {
    pub fn new(grid: Grid, symbol: Vec<C64>) -> Result<Self> {
        if symbol.len() != grid.len() {
            return Err(Error::InvalidArgument("symbol length mismatch".into()));
        }
        Ok(FourierMultiplier { grid, symbol })
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut([f64; 3]) -> C64) -> Self {
        let symbol = (0..grid.len()).map(|j| f(grid.frequency(j))).collect();
        FourierMultiplier { grid, symbol }
    }

    pub fn from_real_fn(grid: Grid, mut f: impl FnMut([f64; 3]) -> f64) -> Self {
        Self::from_fn(grid, |xi| C64::new(f(xi), 0.0))
    }

    pub fn identity(grid: Grid) -> Self {
        FourierMultiplier { grid, symbol: vec![C64::new(1.0, 0.0); grid.len()] }
    }

    pub fn zero(grid: Grid) -> Self {
        FourierMultiplier { grid, symbol: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    /// Bessel weight `⟨ξ⟩^s = (1 + |ξ|²)^{s/2}`.
    pub fn bessel(grid: Grid, s: f64) -> Self {
        Self::from_real_fn(grid, |xi| (1.0 + xi.iter().map(|v| v * v).sum::<f64>()).powf(0.5 * s))
    }

    /// Free Schrödinger group `U(t) = e^{itΔ}`, symbol `e^{-it|ξ|²}`.
    pub fn free_propagator(grid: Grid, t: f64) -> Self {
        let symbol = grid.frequencies_sq().into_iter().map(|k2| C64::from_polar(1.0, -t * k2)).collect();
        FourierMultiplier { grid, symbol }
    }

    /// `-Δ`, symbol `|ξ|²`.
    pub fn negative_laplacian(grid: Grid) -> Self {
        let symbol = grid.frequencies_sq().into_iter().map(|k2| C64::new(k2, 0.0)).collect();
        FourierMultiplier { grid, symbol }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn symbol(&self) -> &[C64] {
        &self.symbol
    }

    pub fn compose(&self, other: &FourierMultiplier) -> Result<FourierMultiplier> {
        self.grid.check_same(&other.grid)?;
        Ok(FourierMultiplier { grid: self.grid, symbol: self.symbol.iter().zip(&other.symbol).map(|(a, b)| a * b).collect() })
    }

    pub fn adjoint(&self) -> FourierMultiplier {
        FourierMultiplier { grid: self.grid, symbol: self.symbol.iter().map(|v| v.conj()).collect() }
    }

    pub fn sup_norm(&self) -> f64 {
        self.symbol.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// True when `m(-ξ) = conj m(ξ)` on the lattice (Nyquist slots excluded).
    pub fn is_hermitian_symmetric(&self, tol: f64) -> bool {
        let g = &self.grid;
        (0..g.len()).all(|j| {
            let idx = g.unflatten(j);
            if (0..g.dim()).any(|a| idx[a] == g.n() / 2) {
                return true;
            }
            let mut neg = [0usize; 3];
            for a in 0..g.dim() {
                neg[a] = (g.n() - idx[a]) % g.n();
            }
            (self.symbol[g.flatten(neg)] - self.symbol[j].conj()).norm() <= tol
        })
    }

    /// Applies the multiplier to raw samples in place.
    pub(crate) fn apply_in_place(&self, values: &mut [C64]) {
        fft_nd(&self.grid, values, false);
        for (v, m) in values.iter_mut().zip(&self.symbol) {
            *v *= m;
        }
        fft_nd(&self.grid, values, true);
    }

    /// Convolution kernel `k(z) = L^{-d} Σ_ξ m(ξ) e^{iξ·z}` at the grid offsets
    /// `z = (j_1 h, …)`, flat-indexed like a field.
    pub fn kernel(&self) -> Vec<C64> {
        let mut k = self.symbol.clone();
        fft_nd(&self.grid, &mut k, true);
        let s = 1.0 / self.grid.cell_volume();
        for v in k.iter_mut() {
            *v *= s;
        }
        k
    }
}

/// `F^{-1}(m · F u)`.
pub fn apply_multiplier(m: &FourierMultiplier, u: &ComplexField) -> Result<ComplexField> {
    m.grid.check_same(&u.grid)?;
    let mut values = u.values.clone();
    m.apply_in_place(&mut values);
    Ok(ComplexField { grid: u.grid, values })
}

/// `U(t)u = e^{itΔ}u`.
pub fn free_propagate(u: &ComplexField, t: f64) -> ComplexField {
    if t == 0.0 {
        return u.clone();
    }
    let m = FourierMultiplier::free_propagator(u.grid, t);
    apply_multiplier(&m, u).expect("same grid")
}

/// `w * ρ` computed as `F^{-1}(ŵ ρ̂)`.
pub fn convolve_potential(w_hat: &FourierMultiplier, rho: &ComplexField) -> Result<ComplexField> {
    apply_multiplier(w_hat, rho)
}
