//! Duhamel terms `D_V[A](t) = -i ∫₀ᵗ U(t-τ)_⋆ [V(τ), A(τ)] dτ` with the trapezoid rule.

use crate::error::{Error, Result};
use crate::grid::{apply_multiplier, free_propagate, ComplexField, FourierMultiplier, Grid};
use crate::linop::{conjugate_free, DenseOperator, LowRankOperator, Operator, DENSE_LIMIT};
use crate::norms::{trapezoid_weights, Trajectory};
use crate::C64;

use super::background::BackgroundState;

const MINUS_I: C64 = C64::new(0.0, -1.0);

/// The operator inside the commutator.
#[derive(Clone, Copy, Debug)]
pub enum DuhamelSource<'a> {
    /// A trajectory of finite-rank operators aligned with `V`.
    LowRank(&'a [LowRankOperator]),
    /// A trajectory of dense operators aligned with `V`.
    Dense(&'a [DenseOperator]),
    /// The stationary `γ_f`, constant in time.
    Background(&'a BackgroundState),
}

/// `D_V[γ_f](t)` on grids too large for a dense kernel, kept as a sum of actions.
#[derive(Clone, Debug)]
pub struct DuhamelAction {
    t: f64,
    taus: Vec<f64>,
    weights: Vec<f64>,
    potentials: Vec<ComplexField>,
    f_symbol: FourierMultiplier,
}

impl DuhamelAction {
    pub fn apply(&self, u: &ComplexField) -> Result<ComplexField> {
        let mut out = ComplexField::zeros(*u.grid());
        for ((tau, w), v) in self.taus.iter().zip(&self.weights).zip(&self.potentials) {
            let x = free_propagate(u, tau - self.t);
            let y = v.mul(&apply_multiplier(&self.f_symbol, &x)?)?.sub(&apply_multiplier(&self.f_symbol, &v.mul(&x)?)?)?;
            out.axpy(MINUS_I * *w, &free_propagate(&y, self.t - tau))?;
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub enum DuhamelValue {
    LowRank(LowRankOperator),
    Dense(DenseOperator),
    Action(DuhamelAction),
}

impl DuhamelValue {
    pub fn apply(&self, u: &ComplexField) -> Result<ComplexField> {
        match self {
            DuhamelValue::LowRank(a) => a.apply(u),
            DuhamelValue::Dense(a) => a.apply(u),
            DuhamelValue::Action(a) => a.apply(u),
        }
    }

    pub fn to_dense(&self) -> Result<DenseOperator> {
        match self {
            DuhamelValue::LowRank(a) => a.to_dense(),
            DuhamelValue::Dense(a) => Ok(a.clone()),
            DuhamelValue::Action(_) => Err(Error::TooLarge { points: usize::MAX, limit: DENSE_LIMIT }),
        }
    }
}

/// Index `k` with `t = t_0 + k Δt`.
pub fn frame_index(v: &Trajectory, t: f64) -> Result<usize> {
    let s = (t - v.t0()) / v.dt();
    let k = s.round();
    if (s - k).abs() > 1e-9 * s.abs().max(1.0) || k < 0.0 || k as usize >= v.len() {
        return Err(Error::InvalidArgument(format!("t = {t} is off-grid for the trajectory (dt = {})", v.dt())));
    }
    Ok(k as usize)
}

fn check_aligned(v: &Trajectory, len: usize) -> Result<()> {
    if len != v.len() {
        return Err(Error::InvalidArgument(format!("operator trajectory has {len} frames, potential has {}", v.len())));
    }
    Ok(())
}

/// Dense `γ_f` from its convolution kernel.
pub fn background_operator(bg: &BackgroundState) -> Result<DenseOperator> {
    let grid = *bg.grid();
    let k = bg.gamma_kernel();
    DenseOperator::from_fn(grid, |x, y| k[grid.difference_index(x, y)])
}

/// `[V, γ_f]`, kernel `(V(x) − V(y)) k_f(x − y)`.
pub fn background_commutator(v: &ComplexField, bg: &BackgroundState) -> Result<DenseOperator> {
    bg.grid().check_same(v.grid())?;
    let grid = *bg.grid();
    let k = bg.gamma_kernel();
    let vv = v.values();
    DenseOperator::from_fn(grid, |x, y| (vv[x] - vv[y]) * k[grid.difference_index(x, y)])
}

/// `D_V[A](t)` for `t` on the time grid of `V`.
pub fn duhamel_term(v: &Trajectory, source: DuhamelSource<'_>, t: f64, tol: f64) -> Result<DuhamelValue> {
    let k = frame_index(v, t)?;
    let grid = *v.grid();
    let w = trapezoid_weights(k + 1, v.dt());
    let w = if k == 0 { vec![0.0] } else { w };
    match source {
        DuhamelSource::LowRank(a) => {
            check_aligned(v, a.len())?;
            let mut acc = LowRankOperator::zero(grid);
            for j in 0..=k {
                let c = a[j].commutator_potential(v.frame(j))?;
                let term = conjugate_free(&c, t - v.time(j)).scale(MINUS_I * w[j]);
                acc = acc.add(&term)?.recompress(tol)?;
            }
            Ok(DuhamelValue::LowRank(acc))
        }
        DuhamelSource::Dense(a) => {
            check_aligned(v, a.len())?;
            let mut acc = DenseOperator::zeros(grid)?;
            for j in 0..=k {
                let c = a[j].commutator_potential(v.frame(j))?;
                acc.axpy(MINUS_I * w[j], &conjugate_free(&c, t - v.time(j)))?;
            }
            Ok(DuhamelValue::Dense(acc))
        }
        DuhamelSource::Background(bg) => {
            bg.grid().check_same(&grid)?;
            if grid.len() > DENSE_LIMIT {
                return Ok(DuhamelValue::Action(DuhamelAction {
                    t,
                    taus: (0..=k).map(|j| v.time(j)).collect(),
                    weights: w,
                    potentials: v.frames()[..=k].to_vec(),
                    f_symbol: bg.f_symbol.clone(),
                }));
            }
            let mut acc = DenseOperator::zeros(grid)?;
            for j in 0..=k {
                let c = background_commutator(v.frame(j), bg)?;
                acc.axpy(MINUS_I * w[j], &conjugate_free(&c, t - v.time(j)))?;
            }
            Ok(DuhamelValue::Dense(acc))
        }
    }
}

/// All frames `D(t_k)`, `k = 0..=K`, from commutators `C_j` via
/// `P_k = U(Δt)_⋆ P_{k-1} + Δt C_k` and `D(t_k) = -i (P_k − Δt C_k / 2)`.
pub(crate) fn duhamel_recursion(
    grid: Grid,
    dt: f64,
    frames: usize,
    mut commutator: impl FnMut(usize) -> Result<DenseOperator>,
) -> Result<Vec<DenseOperator>> {
    let step = FourierMultiplier::free_propagator(grid, dt);
    let mut out = Vec::with_capacity(frames);
    let mut p: Option<DenseOperator> = None;
    for j in 0..frames {
        let c = commutator(j)?;
        let pj = match p {
            None => c.scale(C64::new(0.5 * dt, 0.0)),
            Some(prev) => {
                let mut q = prev.conjugate_multiplier(&step)?;
                q.axpy(C64::new(dt, 0.0), &c)?;
                q
            }
        };
        if j == 0 {
            out.push(DenseOperator::zeros(grid)?);
        } else {
            let mut t = pj.clone();
            t.axpy(C64::new(-0.5 * dt, 0.0), &c)?;
            out.push(t.scale(MINUS_I));
        }
        p = Some(pj);
    }
    Ok(out)
}

/// Every frame of `D_V[A]` as a dense operator (linear cost in the number of frames).
pub fn duhamel_trajectory(v: &Trajectory, source: DuhamelSource<'_>) -> Result<Vec<DenseOperator>> {
    let grid = *v.grid();
    match source {
        DuhamelSource::LowRank(a) => {
            check_aligned(v, a.len())?;
            let dense = a.iter().map(|x| x.to_dense()).collect::<Result<Vec<_>>>()?;
            duhamel_recursion(grid, v.dt(), v.len(), |j| dense[j].commutator_potential(v.frame(j)))
        }
        DuhamelSource::Dense(a) => {
            check_aligned(v, a.len())?;
            duhamel_recursion(grid, v.dt(), v.len(), |j| a[j].commutator_potential(v.frame(j)))
        }
        DuhamelSource::Background(bg) => {
            let gamma = background_operator(bg)?;
            duhamel_recursion(grid, v.dt(), v.len(), |j| gamma.commutator_potential(v.frame(j)))
        }
    }
}

/// Real part of the density of a dense operator.
pub(crate) fn real_density(a: &DenseOperator) -> ComplexField {
    a.density().real_part()
}
