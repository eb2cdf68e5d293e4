//! Translation-invariant backgrounds `γ_f = f(-i∇)` and their interaction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_multiplier, convolve_potential, ComplexField, FourierMultiplier, Grid};
use crate::C64;

fn one() -> f64 {
    1.0
}

/// Momentum distribution `f(ξ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Zero,
    /// `𝟙_{|ξ| ≤ k_F}`.
    FermiSea {
        #[serde(default = "one")]
        fermi_momentum: f64,
    },
    /// `a e^{-β|ξ|²}`.
    Gaussian {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        beta: f64,
    },
}

/// Interaction `w` through its transform `ŵ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Interaction {
    Zero,
    /// `w = s δ`, `ŵ ≡ s`.
    Delta {
        #[serde(default = "one")]
        strength: f64,
    },
    /// `w = s (2πℓ²)^{-d/2} e^{-|x|²/(2ℓ²)}`, `ŵ = s e^{-ℓ²|ξ|²/2}`.
    Gaussian {
        #[serde(default = "one")]
        strength: f64,
        #[serde(default = "one")]
        width: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub distribution: Distribution,
    pub interaction: Interaction,
}

impl BackgroundSpec {
    pub fn new(distribution: Distribution, interaction: Interaction) -> Self {
        BackgroundSpec { distribution, interaction }
    }

    /// Gaussian `e^{-|ξ|²}` with a delta interaction.
    pub fn gaussian_delta() -> Self {
        Self::new(Distribution::Gaussian { amplitude: 1.0, beta: 1.0 }, Interaction::Delta { strength: 1.0 })
    }

    /// Fermi sea `𝟙_{|ξ|² ≤ 1}` with a delta interaction.
    pub fn fermi_sea_delta() -> Self {
        Self::new(Distribution::FermiSea { fermi_momentum: 1.0 }, Interaction::Delta { strength: 1.0 })
    }

    pub fn build(&self, grid: Grid) -> Result<BackgroundState> {
        BackgroundState::new(grid, self.clone())
    }
}

/// Relative size below which `f(η)` is dropped from lattice sums over its support.
const SUPPORT_CUTOFF: f64 = 1e-17;

/// A background sampled on a grid.
#[derive(Clone, Debug)]
pub struct BackgroundState {
    grid: Grid,
    spec: BackgroundSpec,
    pub f_symbol: FourierMultiplier,
    pub w_hat: FourierMultiplier,
    /// `(flat index, f(η))` over the numerical support of `f`.
    support: Vec<(usize, f64)>,
    gamma_kernel: Vec<C64>,
}

impl BackgroundState {
    pub fn new(grid: Grid, spec: BackgroundSpec) -> Result<Self> {
        let f: Box<dyn Fn(f64) -> f64> = match spec.distribution {
            Distribution::Zero => Box::new(|_| 0.0),
            Distribution::FermiSea { fermi_momentum } => {
                if !(fermi_momentum > 0.0 && fermi_momentum.is_finite()) {
                    return Err(Error::InvalidArgument("Fermi momentum must be positive".into()));
                }
                let cut = fermi_momentum * fermi_momentum * (1.0 + 1e-12);
                Box::new(move |k2| if k2 <= cut { 1.0 } else { 0.0 })
            }
            Distribution::Gaussian { amplitude, beta } => {
                if !(amplitude.is_finite() && beta > 0.0 && beta.is_finite()) {
                    return Err(Error::InvalidArgument("gaussian distribution needs finite amplitude and beta > 0".into()));
                }
                Box::new(move |k2| amplitude * (-beta * k2).exp())
            }
        };
        let w: Box<dyn Fn(f64) -> f64> = match spec.interaction {
            Interaction::Zero => Box::new(|_| 0.0),
            Interaction::Delta { strength } => {
                if !strength.is_finite() {
                    return Err(Error::InvalidArgument("interaction strength must be finite".into()));
                }
                Box::new(move |_| strength)
            }
            Interaction::Gaussian { strength, width } => {
                if !(strength.is_finite() && width > 0.0 && width.is_finite()) {
                    return Err(Error::InvalidArgument("gaussian interaction needs finite strength and width > 0".into()));
                }
                Box::new(move |k2| strength * (-0.5 * width * width * k2).exp())
            }
        };
        let f_symbol = FourierMultiplier::from_real_fn(grid, |xi| f(xi.iter().map(|v| v * v).sum()));
        let w_hat = FourierMultiplier::from_real_fn(grid, |xi| w(xi.iter().map(|v| v * v).sum()));
        let top = f_symbol.sup_norm();
        let support = f_symbol
            .symbol()
            .iter()
            .enumerate()
            .filter(|(_, v)| top > 0.0 && v.re.abs() > SUPPORT_CUTOFF * top)
            .map(|(j, v)| (j, v.re))
            .collect();
        let gamma_kernel = f_symbol.kernel();
        Ok(BackgroundState { grid, spec, f_symbol, w_hat, support, gamma_kernel })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spec(&self) -> &BackgroundSpec {
        &self.spec
    }

    /// Metadata names of the distribution and the interaction.
    pub fn names(&self) -> (&'static str, &'static str) {
        let f = match self.spec.distribution {
            Distribution::Zero => "zero",
            Distribution::FermiSea { .. } => "fermi-sea",
            Distribution::Gaussian { .. } => "gaussian",
        };
        let w = match self.spec.interaction {
            Interaction::Zero => "zero-w",
            Interaction::Delta { .. } => "delta-w",
            Interaction::Gaussian { .. } => "gaussian-w",
        };
        (f, w)
    }

    pub fn is_trivial(&self) -> bool {
        self.support.is_empty()
    }

    pub fn interaction_vanishes(&self) -> bool {
        self.w_hat.sup_norm() == 0.0
    }

    pub(crate) fn support(&self) -> &[(usize, f64)] {
        &self.support
    }

    /// Kernel `k_f(z)` of `γ_f`, flat-indexed by the offset `z`.
    pub(crate) fn gamma_kernel(&self) -> &[C64] {
        &self.gamma_kernel
    }

    /// `ρ_{γ_f} = L^{-d} Σ_ξ f(ξ)`, constant on the torus.
    pub fn background_density(&self) -> f64 {
        self.gamma_kernel[0].re
    }

    /// `w * ρ` for a real density (the imaginary round-off is dropped).
    pub fn potential(&self, rho: &ComplexField) -> Result<ComplexField> {
        Ok(convolve_potential(&self.w_hat, rho)?.real_part())
    }

    /// `f̌(y) = L^{-d} Σ_η f(η) e^{iy·η}`, the lattice inverse transform of `f`.
    pub fn f_check(&self, y: [f64; 3]) -> C64 {
        let d = self.grid.dim();
        let s: C64 = self
            .support
            .iter()
            .map(|&(j, fv)| {
                let eta = self.grid.frequency(j);
                let phase: f64 = (0..d).map(|a| y[a] * eta[a]).sum();
                C64::from_polar(fv, phase)
            })
            .sum();
        s / self.grid.volume()
    }

    /// `f̌(-2sξ)` for every lattice frequency `ξ` (flat order).
    pub(crate) fn f_check_scaled(&self, s: f64) -> Vec<C64> {
        let g = &self.grid;
        if let Distribution::Gaussian { amplitude, beta } = self.spec.distribution {
            // separable: one 1-D lattice sum per axis value pair
            let n = g.n();
            let ks: Vec<f64> = (0..n).map(|m| g.signed_index(m) as f64 * g.frequency_spacing()).collect();
            let line: Vec<C64> = ks
                .iter()
                .map(|&k| {
                    ks.iter().map(|&eta| C64::from_polar((-beta * eta * eta).exp(), -2.0 * s * k * eta)).sum::<C64>()
                        / g.length()
                })
                .collect();
            return (0..g.len())
                .map(|j| {
                    let idx = g.unflatten(j);
                    (0..g.dim()).fold(C64::new(amplitude, 0.0), |acc, a| acc * line[idx[a]])
                })
                .collect();
        }
        (0..g.len())
            .map(|j| {
                let xi = g.frequency(j);
                self.f_check([-2.0 * s * xi[0], -2.0 * s * xi[1], -2.0 * s * xi[2]])
            })
            .collect()
    }
}

/// `max_e ‖[-Δ + w*ρ_{γ_f}, γ_f] e‖` over all plane waves `e` (or the first 4096 when the grid is larger).
pub fn stationarity_residual(bg: &BackgroundState) -> Result<f64> {
    let grid = *bg.grid();
    let rho = ComplexField::constant(grid, C64::new(bg.background_density(), 0.0));
    let v = bg.potential(&rho)?;
    let lap = FourierMultiplier::negative_laplacian(grid);
    let h = |u: &ComplexField| -> Result<ComplexField> { apply_multiplier(&lap, u)?.add(&v.mul(u)?) };
    let g = |u: &ComplexField| apply_multiplier(&bg.f_symbol, u);
    let mut worst: f64 = 0.0;
    for j in 0..grid.len().min(4096) {
        let mut c = vec![C64::new(0.0, 0.0); grid.len()];
        c[j] = C64::new(1.0, 0.0);
        let e = ComplexField::from_coefficients(grid, &c)?;
        let e = e.scaled(C64::new(1.0 / e.norm_l2(), 0.0));
        let r = h(&g(&e)?)?.sub(&g(&h(&e)?)?)?;
        worst = worst.max(r.norm_l2());
    }
    Ok(worst)
}
