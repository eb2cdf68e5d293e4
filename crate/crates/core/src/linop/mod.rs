//! Compact operators on a grid and their Schatten-class calculus.
//!
//! Two representations: [`DenseOperator`] keeps the full kernel `K(x, y)`
//! with `(Af)(x) = h^d Σ_y K(x, y) f(y)`, and [`LowRankOperator`] keeps
//! `A = Σ c_n |u_n⟩⟨v_n|`. Singular values always refer to the operator on
//! the weighted `L²`, i.e. to the plain matrix `h^d K`.

mod dense;
mod lowrank;

use std::fmt;
use std::str::FromStr;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

pub use dense::{commutator_with_multiplier, multiplier_sandwich_schatten, spectrum_hermitian, DenseOperator, SandwichReport};
pub use lowrank::{orthonormalize, LowRankOperator};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, FourierMultiplier, Grid};
use crate::C64;

/// Largest point count for which a dense `N × N` kernel is formed.
pub const DENSE_LIMIT: usize = 2048;

pub(crate) fn check_dense_size(grid: &Grid) -> Result<()> {
    if grid.len() > DENSE_LIMIT {
        return Err(Error::TooLarge { points: grid.len(), limit: DENSE_LIMIT });
    }
    Ok(())
}

/// A Schatten exponent `α ∈ [1, ∞]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Exponent(f64);

impl Exponent {
    pub const ONE: Exponent = Exponent(1.0);
    pub const TWO: Exponent = Exponent(2.0);
    pub const INFINITY: Exponent = Exponent(f64::INFINITY);

    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_nan() || alpha < 1.0 {
            return Err(Error::InvalidExponent(format!("Schatten exponent must lie in [1, inf], got {alpha}")));
        }
        Ok(Exponent(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl TryFrom<f64> for Exponent {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Exponent::new(v)
    }
}

impl From<Exponent> for f64 {
    fn from(e: Exponent) -> f64 {
        e.0
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Accepts `inf`, decimals and fractions such as `4/3`.
impl FromStr for Exponent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidExponent(format!("cannot parse exponent '{s}'"));
        let v = match s {
            "inf" | "infinity" | "∞" => f64::INFINITY,
            _ => match s.split_once('/') {
                Some((a, b)) => {
                    let a: f64 = a.trim().parse().map_err(|_| bad())?;
                    let b: f64 = b.trim().parse().map_err(|_| bad())?;
                    a / b
                }
                None => s.parse().map_err(|_| bad())?,
            },
        };
        Exponent::new(v)
    }
}

/// Schatten norm together with the singular values it was computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchattenReport {
    pub alpha: f64,
    pub value: f64,
    /// Descending; numerically zero values beyond the detected rank are omitted.
    pub singular_values: Vec<f64>,
}

impl SchattenReport {
    pub fn from_singular_values(mut singular_values: Vec<f64>, alpha: Exponent) -> Self {
        singular_values.sort_by(|a, b| b.total_cmp(a));
        let value = schatten_value(&singular_values, alpha);
        SchattenReport { alpha: alpha.value(), value, singular_values }
    }

    /// Re-evaluates the norm for another exponent without a new decomposition.
    pub fn with_alpha(&self, alpha: Exponent) -> SchattenReport {
        SchattenReport::from_singular_values(self.singular_values.clone(), alpha)
    }
}

/// `(Σ s^α)^{1/α}` scaled by the largest value to avoid overflow.
pub fn schatten_value(singular_values: &[f64], alpha: Exponent) -> f64 {
    let top = singular_values.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0.0;
    }
    if alpha.is_infinite() {
        return top;
    }
    let a = alpha.value();
    let s: f64 = singular_values.iter().map(|v| (v / top).powf(a)).sum();
    top * s.powf(1.0 / a)
}

/// Singular values of a general matrix.
///
/// A column-pivoted QR first strips the numerically zero part so that the
/// SVD runs on the `r × n` leading block only; for the low-rank kernels that
/// dominate this crate this is far cheaper than a full SVD.
pub(crate) fn matrix_singular_values(m: MatRef<'_, C64>) -> Result<Vec<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    // rescale so that tiny or huge entries do not stall the iteration
    let scale = (0..m.ncols()).flat_map(|j| (0..m.nrows()).map(move |i| m[(i, j)].norm())).fold(0.0, f64::max);
    if !scale.is_finite() {
        return Err(Error::LinearAlgebra("svd of a non-finite matrix".into()));
    }
    if scale == 0.0 {
        return Ok(vec![0.0; m.nrows().min(m.ncols())]);
    }
    if scale < 1e-100 || scale > 1e100 {
        let s = m.to_owned() * faer::Scale(C64::new(1.0 / scale, 0.0));
        return Ok(matrix_singular_values(s.as_ref())?.into_iter().map(|v| v * scale).collect());
    }
    if m.nrows().min(m.ncols()) <= 64 {
        return m.singular_values().map_err(|e| Error::LinearAlgebra(format!("svd: {e:?}")));
    }
    // Householder QR keeps the singular values; rows of R that are negligible
    // move them by at most the dropped norm (Weyl), and low-rank input leaves few rows
    let qr = m.qr();
    let r = qr.thin_R();
    let norms: Vec<f64> = (0..r.nrows()).map(|i| (i..r.ncols()).map(|j| r[(i, j)].norm_sqr()).sum::<f64>().sqrt()).collect();
    let top = norms.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(Vec::new());
    }
    let keep: Vec<usize> = (0..norms.len()).filter(|&i| norms[i] > 1e-13 * top).collect();
    let lead = Mat::from_fn(keep.len().max(1), r.ncols(), |i, j| keep.get(i).map_or(C64::new(0.0, 0.0), |&k| r[(k, j)]));
    lead.singular_values().map_err(|e| Error::LinearAlgebra(format!("svd: {e:?}")))
}

/// Common interface of the two operator representations.
pub trait Operator: Sized {
    fn grid(&self) -> &Grid;
    /// `ρ_A(x) = A(x, x)`.
    fn density(&self) -> ComplexField;
    fn trace(&self) -> C64;
    fn singular_values(&self) -> Result<Vec<f64>>;
    /// `m A m^*`.
    fn conjugate_multiplier(&self, m: &FourierMultiplier) -> Result<Self>;
}

pub fn density<A: Operator>(a: &A) -> ComplexField {
    a.density()
}

pub fn schatten_norm<A: Operator>(a: &A, alpha: Exponent) -> Result<SchattenReport> {
    Ok(SchattenReport::from_singular_values(a.singular_values()?, alpha))
}

/// `‖⟨∇⟩^s A ⟨∇⟩^s‖_{S^α}`.
pub fn sobolev_schatten_norm<A: Operator>(a: &A, s: f64, alpha: Exponent) -> Result<SchattenReport> {
    if s == 0.0 {
        return schatten_norm(a, alpha);
    }
    let weighted = a.conjugate_multiplier(&FourierMultiplier::bessel(*a.grid(), s))?;
    schatten_norm(&weighted, alpha)
}

/// `U(t) A U(t)^*` with `U(t) = e^{itΔ}`.
pub fn conjugate_free<A: Operator + Clone>(a: &A, t: f64) -> A {
    if t == 0.0 {
        return a.clone();
    }
    a.conjugate_multiplier(&FourierMultiplier::free_propagator(*a.grid(), t)).expect("same grid")
}

/// `N × R` matrix whose columns are the samples of `fields`.
pub(crate) fn fields_to_matrix(grid: &Grid, fields: &[ComplexField], scale: f64) -> Mat<C64> {
    Mat::from_fn(grid.len(), fields.len(), |i, j| fields[j].values()[i] * scale)
}

pub(crate) fn matrix_to_fields(grid: &Grid, m: MatRef<'_, C64>, scale: f64) -> Vec<ComplexField> {
    (0..m.ncols())
        .map(|j| ComplexField::new(*grid, (0..m.nrows()).map(|i| m[(i, j)] * scale).collect()).expect("length"))
        .collect()
}
