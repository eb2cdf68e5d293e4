//! Local solution of the perturbation equation
//! `i∂_t Q = [-Δ + w*ρ_Q, Q + γ_f]` by Picard iteration, and a dense RK4 reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, FourierMultiplier};
use crate::linop::{conjugate_free, DenseOperator, Exponent};
use crate::norms::{lebesgue_norm, mixed_norm, time_norm, Trajectory};
use crate::C64;

use super::background::BackgroundState;
use super::duhamel::{background_operator, duhamel_recursion, real_density};

/// Which pair of unknowns the fixed point is posed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// `(Q, ρ_Q)` with `ρ_Q ∈ L⁴_T L²`.
    D1,
    /// `(Q, ρ_Q)` with `ρ_Q ∈ L²_T L²`.
    D2,
    /// `(Q, V)` with `V = w*ρ_Q ∈ L²_T (L² ∩ L^∞)`.
    D3,
}

impl Scheme {
    pub fn for_dim(d: usize) -> Result<Self> {
        match d {
            1 => Ok(Scheme::D1),
            2 => Ok(Scheme::D2),
            3 => Ok(Scheme::D3),
            _ => Err(Error::InvalidArgument(format!("no scheme for d = {d}"))),
        }
    }

    /// The auxiliary unknown is the potential rather than the density.
    pub fn tracks_potential(self) -> bool {
        self == Scheme::D3
    }

    /// Norm of the auxiliary unknown.
    pub fn aux_norm(self, aux: &Trajectory) -> f64 {
        match self {
            Scheme::D1 => mixed_norm(aux, Exponent::new(4.0).expect("4"), Exponent::TWO),
            Scheme::D2 => mixed_norm(aux, Exponent::TWO, Exponent::TWO),
            Scheme::D3 => {
                let inner: Vec<f64> =
                    aux.frames().iter().map(|f| lebesgue_norm(f, Exponent::TWO) + lebesgue_norm(f, Exponent::INFINITY)).collect();
                time_norm(&inner, aux.dt(), Exponent::TWO)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    #[serde(rename = "T")]
    pub t_target: f64,
    pub dt: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_max_halvings")]
    pub max_halvings: usize,
    #[serde(default = "default_ratio_limit")]
    pub ratio_limit: f64,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    200
}

fn default_max_halvings() -> usize {
    8
}

fn default_ratio_limit() -> f64 {
    0.9
}

impl PicardOptions {
    pub fn new(t_target: f64, dt: f64, tol: f64) -> Self {
        PicardOptions {
            t_target,
            dt,
            tol,
            max_iter: default_max_iter(),
            max_halvings: default_max_halvings(),
            ratio_limit: default_ratio_limit(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Picard(Scheme),
    Oracle,
    Linearized,
}

/// A solved trajectory. `q` is sampled at `q_times`; `rho` and `potential` on the full time grid.
#[derive(Clone, Debug)]
pub struct HartreeRun {
    pub kind: RunKind,
    pub t_final: f64,
    pub dt: f64,
    pub q_times: Vec<f64>,
    pub q: Vec<DenseOperator>,
    pub rho: Trajectory,
    pub potential: Trajectory,
    /// Per-iteration deltas in `C_T S²` plus the auxiliary norm (Picard only).
    pub deltas: Vec<f64>,
    /// Radius `R` of the ball the iteration runs in.
    pub radius: f64,
    pub halvings: usize,
    /// Norm of the free auxiliary unknown, the data norm of the local theory.
    pub data_norm: f64,
}

/// Scalar summary for run records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub kind: RunKind,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub dt: f64,
    pub iterations: usize,
    pub deltas: Vec<f64>,
    pub max_ratio: Option<f64>,
    #[serde(rename = "R")]
    pub radius: f64,
    pub halvings: usize,
    pub data_norm: f64,
    pub final_hs_norm: f64,
    pub self_adjoint_drift: f64,
}

impl HartreeRun {
    pub fn hs_norms(&self) -> Vec<f64> {
        self.q.iter().map(|a| a.hilbert_schmidt()).collect()
    }

    pub fn rho_norms(&self) -> Vec<f64> {
        self.rho.frames().iter().map(|f| f.norm_l2()).collect()
    }

    /// `max_k ‖Q − Q^*‖_{S²} / ‖Q‖_{S²}`.
    pub fn self_adjoint_drift(&self) -> f64 {
        self.q.iter().map(|a| a.hermitian_defect()).fold(0.0, f64::max)
    }

    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.deltas.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect()
    }

    pub fn max_ratio(&self) -> Option<f64> {
        let r = self.contraction_ratios();
        if r.is_empty() {
            None
        } else {
            Some(r.into_iter().fold(0.0, f64::max))
        }
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            kind: self.kind,
            t_final: self.t_final,
            dt: self.dt,
            iterations: self.deltas.len(),
            deltas: self.deltas.clone(),
            max_ratio: self.max_ratio(),
            radius: self.radius,
            halvings: self.halvings,
            data_norm: self.data_norm,
            final_hs_norm: self.q.last().map(|a| a.hilbert_schmidt()).unwrap_or(0.0),
            self_adjoint_drift: self.self_adjoint_drift(),
        }
    }
}

fn check_self_adjoint(q0: &DenseOperator) -> Result<()> {
    let defect = q0.hermitian_defect();
    if defect > 1e-10 {
        return Err(Error::NotHermitian(defect));
    }
    Ok(())
}

fn steps_of(t: f64, dt: f64) -> Result<usize> {
    if !(t > 0.0 && dt > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument("need T > 0 and dt > 0".into()));
    }
    let s = t / dt;
    let k = s.round();
    if (s - k).abs() > 1e-9 * s.max(1.0) {
        return Err(Error::InvalidArgument(format!("T = {t} is not an integer multiple of dt = {dt}")));
    }
    Ok(k as usize)
}

fn all_finite(ops: &[DenseOperator]) -> bool {
    ops.iter().all(|a| a.is_finite())
}

/// Picard iteration `Q ← U(t)_⋆Q₀ + D_V[Q] + D_V[γ_f]` with the auxiliary unknown
/// regenerated from `Q` each sweep. `T` is halved (at most `max_halvings` times)
/// whenever two consecutive deltas shrink by less than `ratio_limit`.
pub fn picard_solve(q0: &DenseOperator, bg: &BackgroundState, opts: &PicardOptions, scheme: Scheme) -> Result<HartreeRun> {
    q0.grid().check_same(bg.grid())?;
    check_self_adjoint(q0)?;
    if !(opts.tol > 0.0) || !(opts.ratio_limit > 0.0 && opts.ratio_limit < 1.0) || opts.max_iter == 0 {
        return Err(Error::InvalidArgument("need tol > 0, 0 < ratio_limit < 1 and max_iter >= 1".into()));
    }
    let mut steps = steps_of(opts.t_target, opts.dt)?;
    let gamma = background_operator(bg)?;
    for halvings in 0..=opts.max_halvings {
        if steps < 4 {
            return Err(Error::NoContraction(format!(
                "T = {} collapsed below 4 dt = {}",
                steps as f64 * opts.dt,
                4.0 * opts.dt
            )));
        }
        if let Some(mut run) = picard_attempt(q0, bg, &gamma, steps, opts, scheme)? {
            run.halvings = halvings;
            return Ok(run);
        }
        steps /= 2;
    }
    Err(Error::NoContraction(format!("still not contracting after {} halvings of T", opts.max_halvings)))
}

fn aux_of(bg: &BackgroundState, scheme: Scheme, q: &[DenseOperator], dt: f64) -> Result<Trajectory> {
    let frames = q
        .iter()
        .map(|a| {
            let rho = real_density(a);
            if scheme.tracks_potential() {
                bg.potential(&rho)
            } else {
                Ok(rho)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(0.0, dt, frames)
}

fn picard_attempt(
    q0: &DenseOperator,
    bg: &BackgroundState,
    gamma: &DenseOperator,
    steps: usize,
    opts: &PicardOptions,
    scheme: Scheme,
) -> Result<Option<HartreeRun>> {
    let grid = *q0.grid();
    let dt = opts.dt;
    let frames = steps + 1;
    let free: Vec<DenseOperator> = (0..frames).map(|k| conjugate_free(q0, k as f64 * dt)).collect();
    let mut q = free.clone();
    let mut aux = aux_of(bg, scheme, &q, dt)?;
    let data_norm = scheme.aux_norm(&aux);
    let radius = 2.0 * (q0.hilbert_schmidt() + data_norm);
    let floor = 1e-13 * radius.max(1.0);
    let mut deltas: Vec<f64> = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let potentials: Vec<ComplexField> = if scheme.tracks_potential() {
            aux.frames().to_vec()
        } else {
            aux.frames().iter().map(|r| bg.potential(r)).collect::<Result<_>>()?
        };
        let d = duhamel_recursion(grid, dt, frames, |j| q[j].add(gamma)?.commutator_potential(&potentials[j]))?;
        let q_new: Vec<DenseOperator> = free.iter().zip(&d).map(|(f, x)| f.add(x)).collect::<Result<_>>()?;
        if !all_finite(&q_new) {
            return Err(Error::Divergence("non-finite operator during Picard iteration".into()));
        }
        let aux_new = aux_of(bg, scheme, &q_new, dt)?;
        let dq = q_new.iter().zip(&q).map(|(a, b)| a.hs_distance(b)).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
        let delta = dq + scheme.aux_norm(&aux_new.sub(&aux)?);
        if !delta.is_finite() {
            return Err(Error::Divergence("non-finite Picard delta".into()));
        }
        q = q_new;
        aux = aux_new;
        let prev = deltas.last().copied();
        deltas.push(delta);
        if delta <= opts.tol.max(floor) {
            converged = true;
            break;
        }
        if let Some(p) = prev {
            if delta >= opts.ratio_limit * p {
                return Ok(None);
            }
        }
    }
    if !converged {
        return Ok(None);
    }
    let rho = Trajectory::new(0.0, dt, q.iter().map(real_density).collect())?;
    let potential = if scheme.tracks_potential() { aux } else { aux_of(bg, Scheme::D3, &q, dt)? };
    Ok(Some(HartreeRun {
        kind: RunKind::Picard(scheme),
        t_final: steps as f64 * dt,
        dt,
        q_times: (0..frames).map(|k| k as f64 * dt).collect(),
        q,
        rho,
        potential,
        deltas,
        radius,
        halvings: 0,
        data_norm,
    }))
}

/// `[m(-i∇), A]` for a real symbol `m`.
fn multiplier_commutator(a: &DenseOperator, m: &FourierMultiplier) -> Result<DenseOperator> {
    // A m = (m A^*)^*
    a.left_multiplier(m)?.sub(&a.adjoint().left_multiplier(m)?.adjoint())
}

/// Classical RK4 for `i∂_t Q = [-Δ + V, Q] + [V, γ_f]`, `V = w*ρ_Q`, on the dense kernel.
pub fn dense_rk4_oracle(q0: &DenseOperator, bg: &BackgroundState, t_final: f64, dt: f64) -> Result<HartreeRun> {
    q0.grid().check_same(bg.grid())?;
    check_self_adjoint(q0)?;
    let steps = steps_of(t_final, dt)?;
    let grid = *q0.grid();
    let gamma = background_operator(bg)?;
    let lap = FourierMultiplier::negative_laplacian(grid);
    let rhs = |q: &DenseOperator| -> Result<DenseOperator> {
        let v = bg.potential(&real_density(q))?;
        let c = multiplier_commutator(q, &lap)?.add(&q.add(&gamma)?.commutator_potential(&v)?)?;
        Ok(c.scale(C64::new(0.0, -1.0)))
    };
    let mut q = vec![q0.clone()];
    for _ in 0..steps {
        let y = q.last().expect("nonempty");
        let k1 = rhs(y)?;
        let mut y2 = y.clone();
        y2.axpy(C64::new(0.5 * dt, 0.0), &k1)?;
        let k2 = rhs(&y2)?;
        let mut y3 = y.clone();
        y3.axpy(C64::new(0.5 * dt, 0.0), &k2)?;
        let k3 = rhs(&y3)?;
        let mut y4 = y.clone();
        y4.axpy(C64::new(dt, 0.0), &k3)?;
        let k4 = rhs(&y4)?;
        let mut next = y.clone();
        next.axpy(C64::new(dt / 6.0, 0.0), &k1)?;
        next.axpy(C64::new(dt / 3.0, 0.0), &k2)?;
        next.axpy(C64::new(dt / 3.0, 0.0), &k3)?;
        next.axpy(C64::new(dt / 6.0, 0.0), &k4)?;
        if !next.is_finite() {
            return Err(Error::Divergence("non-finite operator in the RK4 oracle".into()));
        }
        q.push(next);
    }
    let rho = Trajectory::new(0.0, dt, q.iter().map(real_density).collect())?;
    let potential = rho.frames().iter().map(|r| bg.potential(r)).collect::<Result<Vec<_>>>()?;
    let potential = Trajectory::new(0.0, dt, potential)?;
    Ok(HartreeRun {
        kind: RunKind::Oracle,
        t_final: steps as f64 * dt,
        dt,
        q_times: (0..=steps).map(|k| k as f64 * dt).collect(),
        q,
        rho,
        potential,
        deltas: Vec::new(),
        radius: 0.0,
        halvings: 0,
        data_norm: 0.0,
    })
}

/// Eigenvalues of `Q(t_k) + γ_f` at every stored time, for conservation checks.
pub fn total_spectra(run: &HartreeRun, bg: &BackgroundState) -> Result<Vec<Vec<f64>>> {
    let gamma = background_operator(bg)?;
    run.q.iter().map(|a| a.add(&gamma)?.spectrum()).collect()
}
