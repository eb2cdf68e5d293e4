use faer::Mat;

use super::{fields_to_matrix, matrix_singular_values, matrix_to_fields, DenseOperator, Operator};
use crate::error::{Error, Result};
use crate::grid::{apply_multiplier, ComplexField, FourierMultiplier, Grid};
use crate::C64;

/// `A = Σ_n c_n |u_n⟩⟨v_n|`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankOperator {
    grid: Grid,
    coeffs: Vec<C64>,
    left: Vec<ComplexField>,
    right: Vec<ComplexField>,
}

impl LowRankOperator {
    pub fn new(grid: Grid, coeffs: Vec<C64>, left: Vec<ComplexField>, right: Vec<ComplexField>) -> Result<Self> {
        if coeffs.len() != left.len() || coeffs.len() != right.len() {
            return Err(Error::InvalidArgument(format!(
                "rank mismatch: {} coefficients, {} left, {} right factors",
                coeffs.len(),
                left.len(),
                right.len()
            )));
        }
        for f in left.iter().chain(&right) {
            grid.check_same(f.grid())?;
        }
        Ok(LowRankOperator { grid, coeffs, left, right })
    }

    pub fn zero(grid: Grid) -> Self {
        LowRankOperator { grid, coeffs: Vec::new(), left: Vec::new(), right: Vec::new() }
    }

    pub fn rank_one(c: C64, u: ComplexField, v: ComplexField) -> Result<Self> {
        let grid = *u.grid();
        Self::new(grid, vec![c], vec![u], vec![v])
    }

    /// `Σ λ_n |u_n⟩⟨u_n|`.
    pub fn spectral(grid: Grid, eigenvalues: &[f64], vectors: Vec<ComplexField>) -> Result<Self> {
        let coeffs = eigenvalues.iter().map(|&l| C64::new(l, 0.0)).collect();
        Self::new(grid, coeffs, vectors.clone(), vectors)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn left(&self) -> &[ComplexField] {
        &self.left
    }

    pub fn right(&self) -> &[ComplexField] {
        &self.right
    }

    pub fn with_coeffs(&self, coeffs: Vec<C64>) -> Result<Self> {
        Self::new(self.grid, coeffs, self.left.clone(), self.right.clone())
    }

    pub fn apply(&self, f: &ComplexField) -> Result<ComplexField> {
        let mut out = ComplexField::zeros(self.grid);
        for ((c, u), v) in self.coeffs.iter().zip(&self.left).zip(&self.right) {
            out.axpy(c * v.inner(f)?, u)?;
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Result<DenseOperator> {
        super::check_dense_size(&self.grid)?;
        let u = fields_to_matrix(&self.grid, &self.left, 1.0);
        let v = fields_to_matrix(&self.grid, &self.right, 1.0);
        let r = self.rank();
        let cu = Mat::from_fn(u.nrows(), r, |i, j| u[(i, j)] * self.coeffs[j]);
        DenseOperator::new(self.grid, &cu * v.adjoint())
    }

    pub fn adjoint(&self) -> LowRankOperator {
        LowRankOperator {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|c| c.conj()).collect(),
            left: self.right.clone(),
            right: self.left.clone(),
        }
    }

    pub fn scale(&self, c: C64) -> LowRankOperator {
        LowRankOperator {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|x| x * c).collect(),
            left: self.left.clone(),
            right: self.right.clone(),
        }
    }

    /// Sum by concatenating the factor lists; call [`Self::recompress`] to reduce rank.
    pub fn add(&self, other: &LowRankOperator) -> Result<LowRankOperator> {
        self.grid.check_same(&other.grid)?;
        let mut out = self.clone();
        out.coeffs.extend_from_slice(&other.coeffs);
        out.left.extend_from_slice(&other.left);
        out.right.extend_from_slice(&other.right);
        Ok(out)
    }

    /// `self ∘ other`, with the inner Gram core factored by an SVD so the rank is at most `min(R₁, R₂)`.
    pub fn compose(&self, other: &LowRankOperator) -> Result<LowRankOperator> {
        self.grid.check_same(&other.grid)?;
        if self.rank() == 0 || other.rank() == 0 {
            return Ok(LowRankOperator::zero(self.grid));
        }
        let (r1, r2) = (self.rank(), other.rank());
        let mut core = Mat::<C64>::zeros(r1, r2);
        for n in 0..r1 {
            for m in 0..r2 {
                core[(n, m)] = self.coeffs[n] * self.right[n].inner(&other.left[m])? * other.coeffs[m];
            }
        }
        let svd = core.thin_svd().map_err(|e| Error::LinearAlgebra(format!("svd: {e:?}")))?;
        let (w, s, z) = (svd.U(), svd.S().column_vector(), svd.V());
        let k = s.nrows();
        let mut coeffs = Vec::with_capacity(k);
        let mut left = Vec::with_capacity(k);
        let mut right = Vec::with_capacity(k);
        for j in 0..k {
            coeffs.push(C64::new(s[j].re, 0.0));
            let mut a = ComplexField::zeros(self.grid);
            for n in 0..r1 {
                a.axpy(w[(n, j)], &self.left[n])?;
            }
            let mut b = ComplexField::zeros(self.grid);
            for m in 0..r2 {
                b.axpy(z[(m, j)], &other.right[m])?;
            }
            left.push(a);
            right.push(b);
        }
        LowRankOperator::new(self.grid, coeffs, left, right)
    }

    /// Weighted QR of both factor families and the small core
    /// `R_u diag(c) R_v^*`; the core has the operator's singular values.
    fn factorize(&self) -> (Mat<C64>, Mat<C64>, Mat<C64>) {
        let sq = self.grid.cell_volume().sqrt();
        let u = fields_to_matrix(&self.grid, &self.left, sq);
        let v = fields_to_matrix(&self.grid, &self.right, sq);
        let qu = u.qr();
        let qv = v.qr();
        let ru = qu.thin_R();
        let rv = qv.thin_R();
        let cr = Mat::from_fn(ru.nrows(), ru.ncols(), |i, j| ru[(i, j)] * self.coeffs[j]);
        let core = &cr * rv.adjoint();
        (qu.compute_thin_Q(), core, qv.compute_thin_Q())
    }

    /// Truncated re-expansion in singular-value form, dropping the smallest
    /// singular values while the `S²` tail stays within `tol · ‖A‖_{S²}`.
    pub fn recompress(&self, tol: f64) -> Result<LowRankOperator> {
        if self.rank() == 0 {
            return Ok(self.clone());
        }
        let (qu, core, qv) = self.factorize();
        let svd = core.svd().map_err(|e| Error::LinearAlgebra(format!("svd: {e:?}")))?;
        let s: Vec<f64> = (0..svd.S().column_vector().nrows()).map(|j| svd.S().column_vector()[j].re).collect();
        // terms that cancel leave round-off singular values; treat them as zero
        let term_scale: f64 = self
            .coeffs
            .iter()
            .zip(&self.left)
            .zip(&self.right)
            .map(|((c, u), v)| c.norm() * u.norm_l2() * v.norm_l2())
            .sum();
        let s: Vec<f64> = s.into_iter().take_while(|&v| v > 1e-14 * term_scale).collect();
        let total: f64 = s.iter().map(|v| v * v).sum();
        let budget = (tol * total.sqrt()).powi(2);
        let mut keep = s.len();
        let mut tail = 0.0;
        while keep > 0 {
            let next = tail + s[keep - 1] * s[keep - 1];
            if next > budget {
                break;
            }
            tail = next;
            keep -= 1;
        }
        let inv = 1.0 / self.grid.cell_volume().sqrt();
        let a = &qu * svd.U().subcols(0, keep);
        let b = &qv * svd.V().subcols(0, keep);
        let coeffs = s[..keep].iter().map(|&v| C64::new(v, 0.0)).collect();
        LowRankOperator::new(
            self.grid,
            coeffs,
            matrix_to_fields(&self.grid, a.as_ref(), inv),
            matrix_to_fields(&self.grid, b.as_ref(), inv),
        )
    }

    /// `V · A` (left factors multiplied pointwise).
    pub fn multiply_left(&self, v: &ComplexField) -> Result<LowRankOperator> {
        let left = self.left.iter().map(|u| v.mul(u)).collect::<Result<_>>()?;
        LowRankOperator::new(self.grid, self.coeffs.clone(), left, self.right.clone())
    }

    /// `A · V` (right factors multiplied by `conj V`).
    pub fn multiply_right(&self, v: &ComplexField) -> Result<LowRankOperator> {
        let vc = v.conj();
        let right = self.right.iter().map(|u| vc.mul(u)).collect::<Result<_>>()?;
        LowRankOperator::new(self.grid, self.coeffs.clone(), self.left.clone(), right)
    }

    /// `[V, A] = V A − A V`, rank doubles.
    pub fn commutator_potential(&self, v: &ComplexField) -> Result<LowRankOperator> {
        self.multiply_left(v)?.add(&self.multiply_right(v)?.scale(C64::new(-1.0, 0.0)))
    }

    /// `‖A − A^*‖_{S²} ≤ tol · ‖A‖_{S²}`.
    pub fn is_hermitian(&self, tol: f64) -> Result<bool> {
        let norm = super::schatten_norm(self, super::Exponent::TWO)?.value;
        let diff = self.add(&self.adjoint().scale(C64::new(-1.0, 0.0)))?;
        let d = super::schatten_norm(&diff, super::Exponent::TWO)?.value;
        Ok(d <= tol * norm)
    }
}

impl Operator for LowRankOperator {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn density(&self) -> ComplexField {
        let mut rho = vec![C64::new(0.0, 0.0); self.grid.len()];
        for ((c, u), v) in self.coeffs.iter().zip(&self.left).zip(&self.right) {
            for ((r, a), b) in rho.iter_mut().zip(u.values()).zip(v.values()) {
                *r += c * a * b.conj();
            }
        }
        ComplexField::new(self.grid, rho).expect("length")
    }

    fn trace(&self) -> C64 {
        self.coeffs
            .iter()
            .zip(&self.left)
            .zip(&self.right)
            .map(|((c, u), v)| c * v.inner(u).expect("same grid"))
            .sum()
    }

    fn singular_values(&self) -> Result<Vec<f64>> {
        if self.rank() == 0 {
            return Ok(Vec::new());
        }
        let (_, core, _) = self.factorize();
        matrix_singular_values(core.as_ref())
    }

    fn conjugate_multiplier(&self, m: &FourierMultiplier) -> Result<Self> {
        let left = self.left.iter().map(|u| apply_multiplier(m, u)).collect::<Result<_>>()?;
        let right = self.right.iter().map(|v| apply_multiplier(m, v)).collect::<Result<_>>()?;
        LowRankOperator::new(self.grid, self.coeffs.clone(), left, right)
    }
}

/// Orthonormal basis (weighted inner product) of the span of `fields`, via QR.
pub fn orthonormalize(fields: &[ComplexField]) -> Result<Vec<ComplexField>> {
    let Some(first) = fields.first() else {
        return Ok(Vec::new());
    };
    let grid = *first.grid();
    for f in fields {
        grid.check_same(f.grid())?;
    }
    if fields.len() > grid.len() {
        return Err(Error::InvalidArgument("more vectors than grid points".into()));
    }
    let sq = grid.cell_volume().sqrt();
    let m = fields_to_matrix(&grid, fields, sq);
    let q = m.qr().compute_thin_Q();
    Ok(matrix_to_fields(&grid, q.as_ref(), 1.0 / sq))
}
