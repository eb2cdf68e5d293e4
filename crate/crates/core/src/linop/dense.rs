use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use super::{check_dense_size, matrix_singular_values, Exponent, Operator, SchattenReport};
use crate::error::{Error, Result};
use crate::grid::{fft_nd, ComplexField, FourierMultiplier, Grid};
use crate::C64;

/// Operator stored through its full kernel, `(Af)(x) = h^d Σ_y K(x, y) f(y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    grid: Grid,
    kernel: Mat<C64>,
}

impl DenseOperator {
    pub fn new(grid: Grid, kernel: Mat<C64>) -> Result<Self> {
        check_dense_size(&grid)?;
        if kernel.nrows() != grid.len() || kernel.ncols() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "kernel is {}x{}, grid has {} points",
                kernel.nrows(),
                kernel.ncols(),
                grid.len()
            )));
        }
        Ok(DenseOperator { grid, kernel })
    }

    pub fn zeros(grid: Grid) -> Result<Self> {
        check_dense_size(&grid)?;
        Ok(DenseOperator { grid, kernel: Mat::zeros(grid.len(), grid.len()) })
    }

    /// Kernel from a function of the flat point indices `(x, y)`.
    pub fn from_fn(grid: Grid, f: impl Fn(usize, usize) -> C64) -> Result<Self> {
        check_dense_size(&grid)?;
        Ok(DenseOperator { grid, kernel: Mat::from_fn(grid.len(), grid.len(), f) })
    }

    /// Operator whose plain matrix is `m`, i.e. `K = m / h^d`.
    pub fn from_matrix(grid: Grid, m: Mat<C64>) -> Result<Self> {
        let s = 1.0 / grid.cell_volume();
        let n = m.nrows();
        Self::new(grid, Mat::from_fn(n, m.ncols(), |i, j| m[(i, j)] * s))
    }

    /// Dense form of the translation-invariant operator `m(-i∇)`.
    pub fn from_multiplier(m: &FourierMultiplier) -> Result<Self> {
        let grid = *m.grid();
        let k = m.kernel();
        Self::from_fn(grid, |x, y| k[grid.difference_index(x, y)])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kernel(&self) -> &Mat<C64> {
        &self.kernel
    }

    /// The plain matrix `h^d K` whose singular values are the operator's.
    pub fn matrix(&self) -> Mat<C64> {
        let hd = self.grid.cell_volume();
        Mat::from_fn(self.kernel.nrows(), self.kernel.ncols(), |i, j| self.kernel[(i, j)] * hd)
    }

    pub fn apply(&self, f: &ComplexField) -> Result<ComplexField> {
        self.grid.check_same(f.grid())?;
        let n = self.grid.len();
        let hd = self.grid.cell_volume();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (y, fy) in f.values().iter().enumerate() {
            let col = self.kernel.col_as_slice(y);
            let w = fy * hd;
            for (o, k) in out.iter_mut().zip(col) {
                *o += k * w;
            }
        }
        ComplexField::new(self.grid, out)
    }

    pub fn adjoint(&self) -> DenseOperator {
        DenseOperator { grid: self.grid, kernel: self.kernel.adjoint().to_owned() }
    }

    pub fn scale(&self, c: C64) -> DenseOperator {
        let n = self.grid.len();
        DenseOperator { grid: self.grid, kernel: Mat::from_fn(n, n, |i, j| self.kernel[(i, j)] * c) }
    }

    pub fn add(&self, other: &DenseOperator) -> Result<DenseOperator> {
        self.grid.check_same(&other.grid)?;
        Ok(DenseOperator { grid: self.grid, kernel: &self.kernel + &other.kernel })
    }

    pub fn sub(&self, other: &DenseOperator) -> Result<DenseOperator> {
        self.grid.check_same(&other.grid)?;
        Ok(DenseOperator { grid: self.grid, kernel: &self.kernel - &other.kernel })
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: C64, other: &DenseOperator) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        for j in 0..self.grid.len() {
            let dst = self.kernel.col_as_slice_mut(j);
            for (d, s) in dst.iter_mut().zip(other.kernel.col_as_slice(j)) {
                *d += c * s;
            }
        }
        Ok(())
    }

    /// Operator product `self ∘ other`.
    pub fn compose(&self, other: &DenseOperator) -> Result<DenseOperator> {
        self.grid.check_same(&other.grid)?;
        let hd = self.grid.cell_volume();
        let prod = &self.kernel * &other.kernel;
        let n = self.grid.len();
        Ok(DenseOperator { grid: self.grid, kernel: Mat::from_fn(n, n, |i, j| prod[(i, j)] * hd) })
    }

    /// `(A + A^*) / 2`.
    pub fn symmetrize(&self) -> DenseOperator {
        let n = self.grid.len();
        let k = &self.kernel;
        DenseOperator { grid: self.grid, kernel: Mat::from_fn(n, n, |i, j| (k[(i, j)] + k[(j, i)].conj()) * 0.5) }
    }

    /// `‖A − A^*‖_{S²} / ‖A‖_{S²}` (zero for the zero operator).
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.len();
        let mut diff = 0.0;
        let mut total = 0.0;
        for j in 0..n {
            for i in 0..n {
                diff += (self.kernel[(i, j)] - self.kernel[(j, i)].conj()).norm_sqr();
                total += self.kernel[(i, j)].norm_sqr();
            }
        }
        if total == 0.0 {
            0.0
        } else {
            (diff / total).sqrt()
        }
    }

    /// Hilbert–Schmidt norm, `h^d ‖K‖_F`.
    pub fn hilbert_schmidt(&self) -> f64 {
        self.grid.cell_volume() * self.kernel.norm_l2()
    }

    /// Hilbert–Schmidt distance to another operator.
    pub fn hs_distance(&self, other: &DenseOperator) -> Result<f64> {
        Ok(self.sub(other)?.hilbert_schmidt())
    }

    /// `V(x) K(x, y)`, i.e. the product `V · A`.
    pub fn multiply_left(&self, v: &ComplexField) -> Result<DenseOperator> {
        self.grid.check_same(v.grid())?;
        let n = self.grid.len();
        let vv = v.values();
        Ok(DenseOperator { grid: self.grid, kernel: Mat::from_fn(n, n, |i, j| vv[i] * self.kernel[(i, j)]) })
    }

    /// `K(x, y) V(y)`, i.e. the product `A · V`.
    pub fn multiply_right(&self, v: &ComplexField) -> Result<DenseOperator> {
        self.grid.check_same(v.grid())?;
        let n = self.grid.len();
        let vv = v.values();
        Ok(DenseOperator { grid: self.grid, kernel: Mat::from_fn(n, n, |i, j| self.kernel[(i, j)] * vv[j]) })
    }

    /// `[V, A]` with kernel `(V(x) − V(y)) K(x, y)`.
    pub fn commutator_potential(&self, v: &ComplexField) -> Result<DenseOperator> {
        self.grid.check_same(v.grid())?;
        let n = self.grid.len();
        let vv = v.values();
        Ok(DenseOperator { grid: self.grid, kernel: Mat::from_fn(n, n, |i, j| (vv[i] - vv[j]) * self.kernel[(i, j)]) })
    }

    /// `m ∘ A`: applies the multiplier to every kernel column.
    pub fn left_multiplier(&self, m: &FourierMultiplier) -> Result<DenseOperator> {
        self.grid.check_same(m.grid())?;
        let mut kernel = self.kernel.clone();
        for j in 0..self.grid.len() {
            m.apply_in_place(kernel.col_as_slice_mut(j));
        }
        Ok(DenseOperator { grid: self.grid, kernel })
    }

    /// Unitary change of basis to plane waves `e_ξ(x) = e^{iξ·x} / L^{d/2}`:
    /// entry `(ξ, η)` is `⟨e_ξ, A e_η⟩`, indices in FFT order.
    pub fn to_plane_wave(&self) -> Mat<C64> {
        let once = |m: &Mat<C64>| -> Mat<C64> {
            let mut out = m.clone();
            for j in 0..out.ncols() {
                plane_wave_forward(&self.grid, out.col_as_slice_mut(j));
            }
            out.adjoint().to_owned()
        };
        let m = self.matrix();
        // F (F M^... )^*: two passes with an adjoint in between give F M F^*
        once(&once(&m))
    }

    /// Inverse of [`DenseOperator::to_plane_wave`].
    pub fn from_plane_wave(grid: Grid, b: &Mat<C64>) -> Result<DenseOperator> {
        check_dense_size(&grid)?;
        let once = |m: &Mat<C64>| -> Mat<C64> {
            let mut out = m.clone();
            for j in 0..out.ncols() {
                plane_wave_inverse(&grid, out.col_as_slice_mut(j));
            }
            out.adjoint().to_owned()
        };
        DenseOperator::from_matrix(grid, once(&once(b)))
    }

    /// Descending eigenvalues of a Hermitian operator.
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        let defect = self.hermitian_defect();
        if defect > 1e-8 {
            return Err(Error::NotHermitian(defect));
        }
        let m = self.symmetrize().matrix();
        let mut ev = m
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::LinearAlgebra(format!("eigen: {e:?}")))?;
        ev.reverse();
        Ok(ev)
    }

    pub fn is_finite(&self) -> bool {
        let n = self.grid.len();
        (0..n).all(|j| self.kernel.col_as_slice(j).iter().all(|v| v.re.is_finite() && v.im.is_finite()))
    }
}

/// Unitary DFT in place: `(1/√N) Σ_x e^{-iξ·x} u(x)` with the box offset phase.
fn plane_wave_forward(grid: &Grid, col: &mut [C64]) {
    fft_nd(grid, col, false);
    let s = 1.0 / (grid.len() as f64).sqrt();
    for (j, v) in col.iter_mut().enumerate() {
        *v *= s * offset_sign(grid, j);
    }
}

fn plane_wave_inverse(grid: &Grid, col: &mut [C64]) {
    for (j, v) in col.iter_mut().enumerate() {
        *v *= offset_sign(grid, j);
    }
    fft_nd(grid, col, true);
    let s = (grid.len() as f64).sqrt();
    for v in col.iter_mut() {
        *v *= s;
    }
}

/// `e^{iξ·L/2}` per axis is `(-1)^k`.
fn offset_sign(grid: &Grid, j: usize) -> f64 {
    let idx = grid.unflatten(j);
    let k: i64 = (0..grid.dim()).map(|a| grid.signed_index(idx[a])).sum();
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

impl Operator for DenseOperator {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn density(&self) -> ComplexField {
        let d = (0..self.grid.len()).map(|i| self.kernel[(i, i)]).collect();
        ComplexField::new(self.grid, d).expect("length")
    }

    fn trace(&self) -> C64 {
        (0..self.grid.len()).map(|i| self.kernel[(i, i)]).sum::<C64>() * self.grid.cell_volume()
    }

    fn singular_values(&self) -> Result<Vec<f64>> {
        matrix_singular_values(self.matrix().as_ref())
    }

    fn conjugate_multiplier(&self, m: &FourierMultiplier) -> Result<Self> {
        // m A m^* = (m (m A)^*)^*
        Ok(self.left_multiplier(m)?.adjoint().left_multiplier(m)?.adjoint())
    }
}

/// `[V, m(-i∇)]` as a dense operator, kernel `(V(x) − V(y)) k_m(x − y)`.
pub fn commutator_with_multiplier(v: &ComplexField, m: &FourierMultiplier) -> Result<DenseOperator> {
    v.grid().check_same(m.grid())?;
    let grid = *v.grid();
    let k = m.kernel();
    let vv = v.values();
    DenseOperator::from_fn(grid, |x, y| (vv[x] - vv[y]) * k[grid.difference_index(x, y)])
}

/// Descending eigenvalues of a Hermitian dense operator.
pub fn spectrum_hermitian(a: &DenseOperator) -> Result<Vec<f64>> {
    a.spectrum()
}

/// Result of a multiplication-sandwich evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub report: SchattenReport,
    /// `‖f‖_{L^α} (L^{-d} Σ_ξ |g(ξ)|^α)^{1/α}`, the lattice form of the
    /// Kato–Seiler–Simon right-hand side.
    pub bound: f64,
}

/// `‖f(x) g(-i∇)‖_{S^α}` for `α ≥ 2` together with its lattice upper bound.
pub fn multiplier_sandwich_schatten(f: &ComplexField, g: &FourierMultiplier, alpha: Exponent) -> Result<SandwichReport> {
    if alpha.value() < 2.0 {
        return Err(Error::InvalidExponent(format!("the sandwich bound needs alpha >= 2, got {alpha}")));
    }
    f.grid().check_same(g.grid())?;
    let grid = *f.grid();
    let op = DenseOperator::from_multiplier(g)?.multiply_left(f)?;
    let report = super::schatten_norm(&op, alpha)?;
    let bound = if alpha.is_infinite() {
        f.max_abs() * g.sup_norm()
    } else {
        let a = alpha.value();
        let f_norm = (grid.cell_volume() * f.values().iter().map(|v| v.norm().powf(a)).sum::<f64>()).powf(1.0 / a);
        let g_norm = (g.symbol().iter().map(|v| v.norm().powf(a)).sum::<f64>() / grid.volume()).powf(1.0 / a);
        f_norm * g_norm
    };
    Ok(SandwichReport { report, bound })
}
