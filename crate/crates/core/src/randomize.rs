//! Subgaussian coefficient families and the randomizations built from them.
//!
//! Draws come from ChaCha20 with the family seed as key and a 64-bit stream
//! id as nonce, so draw `m` of experiment `e` (stream [`stream_id`]`(e, m)`)
//! is reproducible and independent of every other stream regardless of the
//! order in which streams are evaluated.

use std::ops::Deref;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_multiplier, ComplexField, FourierMultiplier, Grid};
use crate::linop::{LowRankOperator, Operator};
use crate::C64;

/// Distribution of the real coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyKind {
    Gaussian { variance: f64 },
    Rademacher,
    Uniform { half_width: f64 },
    /// Every draw equals `value`; used to switch a randomization off.
    Degenerate { value: f64 },
}

/// A coefficient family together with its master seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgaussianFamily {
    #[serde(flatten)]
    pub kind: FamilyKind,
    pub seed: u64,
}

/// Stream id of draw `draw` in experiment `experiment`.
pub fn stream_id(experiment: u32, draw: u32) -> u64 {
    ((experiment as u64) << 32) | draw as u64
}

impl SubgaussianFamily {
    pub fn new(kind: FamilyKind, seed: u64) -> Result<Self> {
        match kind {
            FamilyKind::Gaussian { variance } if !(variance > 0.0 && variance.is_finite()) => {
                Err(Error::InvalidArgument(format!("gaussian variance must be positive, got {variance}")))
            }
            FamilyKind::Uniform { half_width } if !(half_width > 0.0 && half_width.is_finite()) => {
                Err(Error::InvalidArgument(format!("uniform half-width must be positive, got {half_width}")))
            }
            _ => Ok(SubgaussianFamily { kind, seed }),
        }
    }

    pub fn gaussian(seed: u64) -> Self {
        SubgaussianFamily { kind: FamilyKind::Gaussian { variance: 1.0 }, seed }
    }

    pub fn rademacher(seed: u64) -> Self {
        SubgaussianFamily { kind: FamilyKind::Rademacher, seed }
    }

    /// The constant family `ℓ ≡ 1`.
    pub fn ones() -> Self {
        SubgaussianFamily { kind: FamilyKind::Degenerate { value: 1.0 }, seed: 0 }
    }

    /// `C` in `E e^{ζX} ≤ e^{Cζ²}`; `None` for a degenerate non-zero family.
    pub fn mgf_constant(&self) -> Option<f64> {
        match self.kind {
            FamilyKind::Gaussian { variance } => Some(variance / 2.0),
            FamilyKind::Rademacher => Some(0.5),
            FamilyKind::Uniform { half_width } => Some(half_width * half_width / 2.0),
            FamilyKind::Degenerate { value } => (value == 0.0).then_some(0.0),
        }
    }

    pub fn variance(&self) -> f64 {
        match self.kind {
            FamilyKind::Gaussian { variance } => variance,
            FamilyKind::Rademacher => 1.0,
            FamilyKind::Uniform { half_width } => half_width * half_width / 3.0,
            FamilyKind::Degenerate { .. } => 0.0,
        }
    }

    /// `E|X|^r` in closed form.
    pub fn abs_moment(&self, r: f64) -> f64 {
        match self.kind {
            FamilyKind::Gaussian { variance } => variance.powf(r / 2.0) * gaussian_abs_moment(r),
            FamilyKind::Rademacher => 1.0,
            FamilyKind::Uniform { half_width } => half_width.powf(r) / (r + 1.0),
            FamilyKind::Degenerate { value } => value.abs().powf(r),
        }
    }

    pub fn tag(&self, stream: u64) -> DrawTag {
        DrawTag { family: *self, stream }
    }

    fn rng(&self, stream: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// `E|g|^r` for a standard gaussian, `2^{r/2} Γ((r+1)/2) / √π`.
pub fn gaussian_abs_moment(r: f64) -> f64 {
    2f64.powf(r / 2.0) * libm::tgamma((r + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

/// `count` draws of the family on stream `stream`.
pub fn sample_coefficients(family: &SubgaussianFamily, count: usize, stream: u64) -> Vec<f64> {
    let mut rng = family.rng(stream);
    match family.kind {
        FamilyKind::Gaussian { variance } => {
            let s = variance.sqrt();
            (0..count).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
        }
        FamilyKind::Rademacher => (0..count).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect(),
        FamilyKind::Uniform { half_width } => (0..count).map(|_| rng.random_range(-half_width..half_width)).collect(),
        FamilyKind::Degenerate { value } => vec![value; count],
    }
}

/// Replay information attached to every randomized object.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawTag {
    pub family: SubgaussianFamily,
    pub stream: u64,
}

/// A randomized value together with the draws that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Randomized<T> {
    pub value: T,
    pub draws: Vec<DrawTag>,
}

impl<T> Deref for Randomized<T> {
    type Target = T;
    fn deref(&self) -> &T {
        &self.value
    }
}

impl<T> Randomized<T> {
    pub fn into_inner(self) -> T {
        self.value
    }
}

/// Unit-scale partition of unity in frequency built from the tensor hat
/// `χ(ξ) = Π_a max(0, 1 − |ξ_a|)`; `χ_k = χ(· − k)` sums to one on `ℝ^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionOfUnity {
    grid: Grid,
    kmin: i64,
    kmax: i64,
}

pub fn hat_profile(xi: &[f64]) -> f64 {
    xi.iter().map(|v| (1.0 - v.abs()).max(0.0)).product()
}

impl PartitionOfUnity {
    pub fn new(grid: Grid) -> Result<Self> {
        if grid.frequency_spacing() > 1.0 + 1e-12 {
            return Err(Error::InvalidGrid(format!(
                "unit frequency cells need a box of side >= 2π, got L = {}",
                grid.length()
            )));
        }
        let dk = grid.frequency_spacing();
        let lo = -(grid.n() as f64 / 2.0) * dk;
        let hi = (grid.n() as f64 / 2.0 - 1.0) * dk;
        Ok(PartitionOfUnity { grid, kmin: lo.floor() as i64, kmax: hi.ceil() as i64 })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn per_axis(&self) -> usize {
        (self.kmax - self.kmin + 1) as usize
    }

    pub fn cell_count(&self) -> usize {
        self.per_axis().pow(self.grid.dim() as u32)
    }

    /// Cell offsets in draw order (lexicographic, axis 0 slowest).
    pub fn cells(&self) -> Vec<[i64; 3]> {
        let p = self.per_axis();
        (0..self.cell_count())
            .map(|mut i| {
                let mut k = [0i64; 3];
                for a in (0..self.grid.dim()).rev() {
                    k[a] = self.kmin + (i % p) as i64;
                    i /= p;
                }
                k
            })
            .collect()
    }

    pub fn cell_index(&self, k: [i64; 3]) -> Option<usize> {
        let mut idx = 0usize;
        for &ka in k.iter().take(self.grid.dim()) {
            if ka < self.kmin || ka > self.kmax {
                return None;
            }
            idx = idx * self.per_axis() + (ka - self.kmin) as usize;
        }
        Some(idx)
    }

    /// Symbol of `χ_k`.
    pub fn cell_symbol(&self, k: [i64; 3]) -> FourierMultiplier {
        let d = self.grid.dim();
        FourierMultiplier::from_real_fn(self.grid, |xi| {
            let shifted: Vec<f64> = (0..d).map(|a| xi[a] - k[a] as f64).collect();
            hat_profile(&shifted)
        })
    }

    /// Symbol `Σ_k ℓ_k χ_k(ξ)`, with `ell` indexed like [`Self::cells`].
    /// Each lattice frequency meets at most `2^d` cells, visited directly.
    pub fn weighted_symbol(&self, ell: &[f64]) -> Result<FourierMultiplier> {
        if ell.len() != self.cell_count() {
            return Err(Error::InvalidArgument(format!("{} weights for {} cells", ell.len(), self.cell_count())));
        }
        let d = self.grid.dim();
        let symbol = (0..self.grid.len())
            .map(|j| {
                let xi = self.grid.frequency(j);
                let mut base = [0i64; 3];
                let mut frac = [0.0; 3];
                for a in 0..d {
                    base[a] = xi[a].floor() as i64;
                    frac[a] = xi[a] - base[a] as f64;
                }
                let mut total = 0.0;
                for corner in 0..(1usize << d) {
                    let mut k = [0i64; 3];
                    let mut w = 1.0;
                    for a in 0..d {
                        let up = (corner >> a) & 1 == 1;
                        k[a] = base[a] + up as i64;
                        w *= if up { frac[a] } else { 1.0 - frac[a] };
                    }
                    if w != 0.0 {
                        let idx = self.cell_index(k).expect("cell range covers the lattice");
                        total += w * ell[idx];
                    }
                }
                C64::new(total, 0.0)
            })
            .collect();
        FourierMultiplier::new(self.grid, symbol)
    }
}

/// `Π_k u = F^{-1} χ_k F u`.
pub fn unit_projection(u: &ComplexField, k: [i64; 3], pou: &PartitionOfUnity) -> Result<ComplexField> {
    pou.grid.check_same(u.grid())?;
    apply_multiplier(&pou.cell_symbol(k), u)
}

/// `Σ_k ℓ_k Π_k u` with one coefficient per cell.
pub fn wiener_randomize(
    u: &ComplexField,
    family: &SubgaussianFamily,
    pou: &PartitionOfUnity,
    stream: u64,
) -> Result<Randomized<ComplexField>> {
    let ell = sample_coefficients(family, pou.cell_count(), stream);
    let r = pou.weighted_symbol(&ell)?;
    Ok(Randomized { value: apply_multiplier(&r, u)?, draws: vec![family.tag(stream)] })
}

/// Brings `A` to singular-value form (non-negative coefficients, weighted
/// orthonormal factors) unless it already is.
pub fn singular_value_form(a: &LowRankOperator) -> Result<LowRankOperator> {
    if is_singular_value_form(a, 1e-8) {
        Ok(a.clone())
    } else {
        a.recompress(0.0)
    }
}

pub fn is_singular_value_form(a: &LowRankOperator, tol: f64) -> bool {
    let real_nonneg = a.coeffs().iter().all(|c| c.im.abs() <= tol * c.norm().max(1.0) && c.re >= 0.0);
    real_nonneg && is_orthonormal(a.left(), tol) && is_orthonormal(a.right(), tol)
}

fn is_orthonormal(fields: &[ComplexField], tol: f64) -> bool {
    for (i, a) in fields.iter().enumerate() {
        for (j, b) in fields.iter().enumerate().skip(i) {
            let g = a.inner(b).expect("same grid");
            let expect = if i == j { 1.0 } else { 0.0 };
            if (g - C64::new(expect, 0.0)).norm() > tol {
                return false;
            }
        }
    }
    true
}

/// `Σ a_n g_n |u_n⟩⟨v_n|`.
pub fn singular_value_randomize(
    a: &LowRankOperator,
    family: &SubgaussianFamily,
    stream: u64,
) -> Result<Randomized<LowRankOperator>> {
    let svf = singular_value_form(a)?;
    let g = sample_coefficients(family, svf.rank(), stream);
    let coeffs = svf.coeffs().iter().zip(&g).map(|(c, g)| c * *g).collect();
    Ok(Randomized { value: svf.with_coeffs(coeffs)?, draws: vec![family.tag(stream)] })
}

/// `Σ a_n g_n |ℛ u_n⟩⟨ℛ v_n|`, the same Wiener draw `ℛ` on both sides.
pub fn full_randomize(
    a: &LowRankOperator,
    family_g: &SubgaussianFamily,
    family_l: &SubgaussianFamily,
    pou: &PartitionOfUnity,
    stream_g: u64,
    stream_l: u64,
) -> Result<Randomized<LowRankOperator>> {
    pou.grid.check_same(a.grid())?;
    let sv = singular_value_randomize(a, family_g, stream_g)?;
    let ell = sample_coefficients(family_l, pou.cell_count(), stream_l);
    let r = pou.weighted_symbol(&ell)?;
    let value = sv.value.conjugate_multiplier(&r)?;
    Ok(Randomized { value, draws: vec![family_g.tag(stream_g), family_l.tag(stream_l)] })
}

/// Which randomization [`sobolev_conjugated_randomize`] applies.
#[derive(Clone, Debug)]
pub enum RandomizationSpec<'a> {
    Singular { family: SubgaussianFamily, stream: u64 },
    Full { family_g: SubgaussianFamily, family_l: SubgaussianFamily, pou: &'a PartitionOfUnity, stream_g: u64, stream_l: u64 },
}

/// `⟨∇⟩^{-σ} (⟨∇⟩^σ A ⟨∇⟩^σ)^ω ⟨∇⟩^{-σ}`.
pub fn sobolev_conjugated_randomize(
    a: &LowRankOperator,
    sigma: f64,
    spec: &RandomizationSpec<'_>,
) -> Result<Randomized<LowRankOperator>> {
    let grid = *a.grid();
    let weighted = if sigma == 0.0 { a.clone() } else { a.conjugate_multiplier(&FourierMultiplier::bessel(grid, sigma))? };
    let randomized = match spec {
        RandomizationSpec::Singular { family, stream } => singular_value_randomize(&weighted, family, *stream)?,
        RandomizationSpec::Full { family_g, family_l, pou, stream_g, stream_l } => {
            full_randomize(&weighted, family_g, family_l, pou, *stream_g, *stream_l)?
        }
    };
    if sigma == 0.0 {
        return Ok(randomized);
    }
    let value = randomized.value.conjugate_multiplier(&FourierMultiplier::bessel(grid, -sigma))?;
    Ok(Randomized { value, draws: randomized.draws })
}
