//! The linear response map `ℒ₁[g](t) = ρ(i∫₀ᵗ U(t-τ)_⋆[w*g(τ), γ_f] dτ)`, the
//! linearized solver `(1 + ℒ₁)ρ = ρ(U(t)_⋆Q₀)` and the scattering ladder.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{fft_nd, ComplexField, Grid};
use crate::initial::plane_wave;
use crate::linop::{matrix_singular_values, schatten_value, DenseOperator, Exponent, LowRankOperator};
use crate::norms::{density_trajectory, mixed_norm, Trajectory};
use crate::strichartz::TimeWindow;
use crate::C64;

use super::background::BackgroundState;
use super::picard::{HartreeRun, RunKind};

/// Fixed number of partial sums in the direct path, so the reduction order never depends on the worker count.
const DIRECT_CHUNKS: usize = 16;

/// Weight of source frame `j` in the trapezoid rule on `[t_0, t_k]`.
fn weight(j: usize, k: usize, dt: f64) -> f64 {
    if k == 0 {
        0.0
    } else if j == 0 || j == k {
        0.5 * dt
    } else {
        dt
    }
}

fn dft(u: &ComplexField) -> Vec<C64> {
    let mut c = u.values().to_vec();
    fft_nd(u.grid(), &mut c, false);
    c
}

fn real_inverse(grid: &Grid, mut c: Vec<C64>) -> ComplexField {
    fft_nd(grid, &mut c, true);
    ComplexField::new(*grid, c.into_iter().map(|v| C64::new(v.re, 0.0)).collect()).expect("length")
}

/// `ℒ₁[g]` by operator quadrature: `γ_f = Σ_η f(η)|e_η⟩⟨e_η|`, so
/// `ρ(i U(s)_⋆[V, γ_f]) = -2 Σ_η f(η) Im(U(s)(V e_η) · conj(U(s) e_η))`.
pub fn l1_apply_direct(g: &Trajectory, bg: &BackgroundState) -> Result<Trajectory> {
    let grid = *g.grid();
    bg.grid().check_same(&grid)?;
    let frames = g.len();
    let dt = g.dt();
    let potentials = g.frames().iter().map(|r| bg.potential(r)).collect::<Result<Vec<_>>>()?;
    let k2 = grid.frequencies_sq();
    let support = bg.support();
    let chunk = support.len().div_ceil(DIRECT_CHUNKS).max(1);
    let partials: Vec<Vec<Vec<f64>>> = support
        .par_chunks(chunk)
        .map(|part| {
            let mut acc = vec![vec![0.0; grid.len()]; frames];
            for &(eta_idx, f_eta) in part {
                let idx = grid.unflatten(eta_idx);
                let mode = [grid.signed_index(idx[0]), grid.signed_index(idx[1]), grid.signed_index(idx[2])];
                let e = plane_wave(grid, mode);
                let eta2 = k2[eta_idx];
                for (j, v) in potentials.iter().enumerate() {
                    let spec = dft(&v.mul(&e).expect("same grid"));
                    for (k, out) in acc.iter_mut().enumerate().skip(j.max(1)) {
                        let w = weight(j, k, dt);
                        let s = (k - j) as f64 * dt;
                        let mut a: Vec<C64> = spec.iter().zip(&k2).map(|(c, q)| c * C64::from_polar(1.0, -s * q)).collect();
                        fft_nd(&grid, &mut a, true);
                        let phase_b = C64::from_polar(1.0, -s * eta2);
                        for ((o, av), ev) in out.iter_mut().zip(&a).zip(e.values()) {
                            *o -= 2.0 * f_eta * w * (av * (phase_b * ev).conj()).im;
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![vec![0.0; grid.len()]; frames];
    for p in &partials {
        for (t, f) in total.iter_mut().zip(p) {
            for (a, b) in t.iter_mut().zip(f) {
                *a += b;
            }
        }
    }
    let out = total.iter().map(|v| ComplexField::from_real(grid, v)).collect::<Result<Vec<_>>>()?;
    Trajectory::new(g.t0(), dt, out)
}

/// `c₀ ŵ(ξ) sin(s|ξ|²) f̌(-2sξ)` for lags `s = mΔt`, `m = 0..frames`.
fn fourier_kernels(bg: &BackgroundState, frames: usize, dt: f64, c0: f64) -> Vec<Vec<C64>> {
    let grid = bg.grid();
    let k2 = grid.frequencies_sq();
    (0..frames)
        .into_par_iter()
        .map(|m| {
            let s = m as f64 * dt;
            let fc = bg.f_check_scaled(s);
            fc.iter()
                .zip(&k2)
                .zip(bg.w_hat.symbol())
                .map(|((f, q), w)| *f * *w * (c0 * (s * q).sin()))
                .collect()
        })
        .collect()
}

fn check_constant(c0: f64) -> Result<()> {
    if !c0.is_finite() || c0 == 0.0 {
        return Err(Error::Calibration(format!("the response constant is uncalibrated ({c0})")));
    }
    Ok(())
}

/// Frequency-side `Σ_{j<k} w_j K(t_k − τ_j, ξ) ĝ_j(ξ)`, complex, per output frame.
fn fourier_sum(kernels: &[Vec<C64>], spectra: &[Vec<C64>], k: usize, dt: f64) -> Vec<C64> {
    let n = kernels[0].len();
    let mut acc = vec![C64::new(0.0, 0.0); n];
    for (j, gj) in spectra.iter().enumerate().take(k) {
        let w = weight(j, k, dt);
        for ((a, kv), gv) in acc.iter_mut().zip(&kernels[k - j]).zip(gj) {
            *a += kv * gv * w;
        }
    }
    acc
}

/// `ℒ₁[g]` from the frame-wise frequency formula with constant `c0`.
pub fn l1_apply_fourier(g: &Trajectory, bg: &BackgroundState, c0: f64) -> Result<Trajectory> {
    check_constant(c0)?;
    Ok(l1_fourier_complex(g, bg, c0)?.0)
}

fn l1_fourier_complex(g: &Trajectory, bg: &BackgroundState, c0: f64) -> Result<(Trajectory, Vec<Vec<C64>>)> {
    let grid = *g.grid();
    bg.grid().check_same(&grid)?;
    let kernels = fourier_kernels(bg, g.len(), g.dt(), c0);
    let spectra: Vec<Vec<C64>> = g.frames().iter().map(dft).collect();
    let sums: Vec<Vec<C64>> = (0..g.len()).into_par_iter().map(|k| fourier_sum(&kernels, &spectra, k, g.dt())).collect();
    let frames = sums.iter().map(|s| real_inverse(&grid, s.clone())).collect();
    Ok((Trajectory::new(g.t0(), g.dt(), frames)?, sums))
}

/// Largest `|k|_∞` such that `η + k` never wraps for `η` in the support of `f`
/// (entries below `1e-12 · sup f` ignored).
pub fn alias_free_band(bg: &BackgroundState) -> f64 {
    let g = bg.grid();
    let top = bg.f_symbol.sup_norm();
    let reach = bg
        .support()
        .iter()
        .filter(|(_, f)| f.abs() > 1e-12 * top)
        .map(|(j, _)| g.frequency(*j).iter().take(g.dim()).fold(0.0f64, |m, v| m.max(v.abs())))
        .fold(0.0, f64::max);
    (g.n() / 2 - 1) as f64 * g.frequency_spacing() - reach
}

/// A random real density `g(τ) = A + τB + τ²C` with every `A, B, C` band-limited to `|k|_∞ ≤ band`.
pub fn random_band_density(grid: Grid, band: f64, window: &TimeWindow, seed: u64, stream: u64) -> Result<Trajectory> {
    let frames = window.frames()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut field = || -> Result<ComplexField> {
        let c: Vec<C64> = (0..grid.len())
            .map(|j| {
                let xi = grid.frequency(j);
                let inside = xi.iter().take(grid.dim()).all(|v| v.abs() <= band + 1e-12);
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                if inside {
                    C64::new(re, im)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
            .collect();
        Ok(ComplexField::from_coefficients(grid, &c)?.real_part())
    };
    let (a, b, c) = (field()?, field()?, field()?);
    let out = (0..frames)
        .map(|k| {
            let t = k as f64 * window.dt;
            let mut f = a.clone();
            f.axpy(C64::new(t, 0.0), &b)?;
            f.axpy(C64::new(t * t, 0.0), &c)?;
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(0.0, window.dt, out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L1Calibration {
    pub c0: f64,
    /// Imaginary part of the complex least-squares fit.
    pub imag: f64,
    /// `‖c₀ F − D‖ / ‖D‖` over the ensemble.
    pub residual: f64,
    pub probes: usize,
    pub band: f64,
}

/// Least-squares fit of the frequency formula (with `c₀ = 1`) to the direct path on
/// `probes` random alias-free densities; fails when the fit residual exceeds `1e-6`.
pub fn calibrate_l1_constant(bg: &BackgroundState, window: &TimeWindow, probes: usize, seed: u64) -> Result<L1Calibration> {
    if bg.is_trivial() || bg.interaction_vanishes() {
        return Err(Error::Calibration("f or w vanishes, so the response is identically zero".into()));
    }
    if probes == 0 {
        return Err(Error::InvalidArgument("need at least one probe".into()));
    }
    let grid = *bg.grid();
    let band = alias_free_band(bg);
    if band < grid.frequency_spacing() {
        return Err(Error::Calibration(format!(
            "grid too coarse: the support of f leaves no alias-free band (band {band:.3} < dk {:.3})",
            grid.frequency_spacing()
        )));
    }
    let mut cross = C64::new(0.0, 0.0);
    let mut ff = 0.0;
    let mut pairs = Vec::with_capacity(probes);
    for p in 0..probes {
        let g = random_band_density(grid, band, window, seed, p as u64)?;
        let direct = l1_apply_direct(&g, bg)?;
        let (_, fourier) = l1_fourier_complex(&g, bg, 1.0)?;
        for (d, f) in direct.frames().iter().zip(&fourier) {
            for (dv, fv) in dft(d).iter().zip(f) {
                cross += fv.conj() * dv;
                ff += fv.norm_sqr();
            }
        }
        pairs.push((direct, fourier));
    }
    if ff == 0.0 {
        return Err(Error::Calibration("the frequency formula vanishes on every probe".into()));
    }
    let c = cross / ff;
    let (mut res, mut norm) = (0.0, 0.0);
    for (direct, fourier) in &pairs {
        for (d, f) in direct.frames().iter().zip(fourier) {
            for (dv, fv) in dft(d).iter().zip(f) {
                res += (fv * c.re - dv).norm_sqr();
                norm += dv.norm_sqr();
            }
        }
    }
    let residual = if norm > 0.0 { (res / norm).sqrt() } else { 0.0 };
    if residual > 1e-6 {
        return Err(Error::Calibration(format!("fit residual {residual:e} exceeds 1e-6; transform conventions are inconsistent")));
    }
    Ok(L1Calibration { c0: c.re, imag: c.im, residual, probes, band })
}

/// Solution of the linearized equation `i∂_t Q = [-Δ, Q] + [w*ρ_Q, γ_f]`.
#[derive(Clone, Debug)]
pub struct LinearizedSolution {
    bg: BackgroundState,
    q0: LowRankOperator,
    pub c0: f64,
    pub source: Trajectory,
    pub rho: Trajectory,
    pub potential: Trajectory,
    /// `‖ρ + ℒ₁ρ − source‖_{L²_t L²_x} / ‖source‖_{L²_t L²_x}`.
    pub residual: f64,
    /// `max_k ‖ρ(t_k)‖ / max_k ‖source(t_k)‖`.
    pub growth: f64,
}

/// Growth factor beyond which the marched density counts as divergent.
pub const DIVERGENCE_GROWTH: f64 = 1e8;

/// Causal time marching for `(1 + ℒ₁)ρ = ρ(U(t)_⋆Q₀)`: the quadrature kernel vanishes
/// at `τ = t`, so each frame follows from the earlier ones.
pub fn linearized_solve(q0: &LowRankOperator, bg: &BackgroundState, window: &TimeWindow, c0: f64) -> Result<LinearizedSolution> {
    check_constant(c0)?;
    q0.grid().check_same(bg.grid())?;
    if q0.rank() > 0 && !q0.is_hermitian(1e-10)? {
        return Err(Error::NotHermitian(f64::NAN));
    }
    let grid = *q0.grid();
    let frames = window.frames()?;
    let dt = window.dt;
    let source = density_trajectory(q0, 0.0, dt, frames)?.map(|f| f.real_part());
    let kernels = fourier_kernels(bg, frames, dt, c0);
    let mut spectra: Vec<Vec<C64>> = Vec::with_capacity(frames);
    let mut rho = Vec::with_capacity(frames);
    for k in 0..frames {
        let acc = fourier_sum(&kernels, &spectra, k, dt);
        let response = real_inverse(&grid, acc);
        let r = source.frame(k).sub(&response)?;
        if !r.is_finite() {
            return Err(Error::Divergence(format!("non-finite density at frame {k}")));
        }
        spectra.push(dft(&r));
        rho.push(r);
    }
    let rho = Trajectory::new(0.0, dt, rho)?;
    let smax = source.frames().iter().map(|f| f.norm_l2()).fold(0.0, f64::max);
    let rmax = rho.frames().iter().map(|f| f.norm_l2()).fold(0.0, f64::max);
    let growth = if smax > 0.0 { rmax / smax } else { 0.0 };
    if growth > DIVERGENCE_GROWTH {
        return Err(Error::Divergence(format!("density grew by a factor {growth:e}; 1 + L1 is not invertible on this horizon")));
    }
    let l1 = l1_apply_fourier(&rho, bg, c0)?;
    let lhs = rho.add(&l1)?;
    let two = Exponent::TWO;
    let snorm = mixed_norm(&source, two, two);
    let residual = if snorm > 0.0 { mixed_norm(&lhs.sub(&source)?, two, two) / snorm } else { mixed_norm(&lhs, two, two) };
    let potential = rho.map(|r| bg.potential(r).expect("same grid"));
    Ok(LinearizedSolution { bg: bg.clone(), q0: q0.clone(), c0, source, rho, potential, residual, growth })
}

impl LinearizedSolution {
    pub fn grid(&self) -> &Grid {
        self.bg.grid()
    }

    pub fn dt(&self) -> f64 {
        self.rho.dt()
    }

    pub fn frames(&self) -> usize {
        self.rho.len()
    }

    /// `W(t_k) = U(-t_k)_⋆ Q(t_k)` in the plane-wave basis for ascending frame indices `ks`.
    pub fn interaction_picture(&self, ks: &[usize]) -> Result<Vec<Mat<C64>>> {
        if ks.windows(2).any(|w| w[0] > w[1]) || ks.iter().any(|&k| k >= self.frames()) {
            return Err(Error::InvalidArgument("checkpoints must be ascending frame indices".into()));
        }
        let grid = *self.grid();
        let n = grid.len();
        let dt = self.dt();
        let b0 = if self.q0.rank() == 0 { Mat::zeros(n, n) } else { self.q0.to_dense()?.to_plane_wave() };
        let k2 = grid.frequencies_sq();
        let f: Vec<f64> = self.bg.f_symbol.symbol().iter().map(|v| v.re).collect();
        let diff: Vec<usize> = (0..n * n).map(|p| grid.frequency_diff_index(p % n, p / n)).collect();
        let sign: Vec<f64> = (0..n)
            .map(|m| {
                let idx = grid.unflatten(m);
                let s: i64 = (0..grid.dim()).map(|a| grid.signed_index(idx[a])).sum();
                if s.rem_euclid(2) == 0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        // X_j(ξ, η) = e^{iτ_j(|ξ|²−|η|²)} v_j[ξ ⊖ η] (f(η) − f(ξ))
        let x_of = |j: usize| -> Mat<C64> {
            let mut v = dft(self.potential.frame(j));
            for (c, s) in v.iter_mut().zip(&sign) {
                *c *= s / n as f64;
            }
            let tau = j as f64 * dt;
            Mat::from_fn(n, n, |a, b| {
                let df = f[b] - f[a];
                if df == 0.0 {
                    return C64::new(0.0, 0.0);
                }
                v[diff[a + n * b]] * C64::from_polar(df, tau * (k2[a] - k2[b]))
            })
        };
        let last = ks.last().copied().unwrap_or(0);
        let mut out = Vec::with_capacity(ks.len());
        let mut acc: Mat<C64> = Mat::zeros(n, n);
        let mut next = 0;
        for j in 0..=last {
            let x = x_of(j);
            let a = if j == 0 { 0.5 * dt } else { dt };
            acc += &x * faer::Scale(C64::new(a, 0.0));
            while next < ks.len() && ks[next] == j {
                let integral = if j == 0 { Mat::zeros(n, n) } else { &acc - &x * faer::Scale(C64::new(0.5 * dt, 0.0)) };
                out.push(&b0 + &integral * faer::Scale(C64::new(0.0, -1.0)));
                next += 1;
            }
        }
        Ok(out)
    }

    /// `Q(t_k)` reconstructed from the Duhamel formula.
    pub fn q_at(&self, k: usize) -> Result<DenseOperator> {
        let w = self.interaction_picture(&[k])?.pop().expect("one checkpoint");
        let grid = *self.grid();
        let k2 = grid.frequencies_sq();
        let t = k as f64 * self.dt();
        let n = grid.len();
        let b = Mat::from_fn(n, n, |a, c| w[(a, c)] * C64::from_polar(1.0, -t * (k2[a] - k2[c])));
        DenseOperator::from_plane_wave(grid, &b)
    }

    /// Run record with `Q` stored at the frames `checkpoints`.
    pub fn run(&self, checkpoints: &[usize]) -> Result<HartreeRun> {
        let q = checkpoints.iter().map(|&k| self.q_at(k)).collect::<Result<Vec<_>>>()?;
        Ok(HartreeRun {
            kind: RunKind::Linearized,
            t_final: (self.frames() - 1) as f64 * self.dt(),
            dt: self.dt(),
            q_times: checkpoints.iter().map(|&k| k as f64 * self.dt()).collect(),
            q,
            rho: self.rho.clone(),
            potential: self.potential.clone(),
            deltas: Vec::new(),
            radius: 0.0,
            halvings: 0,
            data_norm: mixed_norm(&self.source, Exponent::TWO, Exponent::TWO),
        })
    }
}

/// `ρ ← source − ℒ₁ρ` iterated to a fixed point; an independent route to the linearized density.
pub fn linearized_fixed_point(source: &Trajectory, bg: &BackgroundState, c0: f64, tol: f64, max_iter: usize) -> Result<Trajectory> {
    let mut rho = source.clone();
    for _ in 0..max_iter {
        let next = source.sub(&l1_apply_fourier(&rho, bg, c0)?)?;
        let change = mixed_norm(&next.sub(&rho)?, Exponent::TWO, Exponent::TWO);
        rho = next;
        if change <= tol {
            return Ok(rho);
        }
    }
    Err(Error::Divergence(format!("fixed-point iteration did not settle in {max_iter} sweeps")))
}

/// Times `0, T/2^{levels-1}, …, T/2, T`.
pub fn dyadic_ladder(t_final: f64, levels: usize) -> Vec<f64> {
    let mut v = vec![0.0];
    for m in (0..levels).rev() {
        v.push(t_final / 2f64.powi(m as i32));
    }
    v
}

/// `2d/(d-1)`, or `∞` in one dimension.
pub fn scattering_exponent(d: usize) -> Exponent {
    if d <= 1 {
        Exponent::INFINITY
    } else {
        Exponent::new(2.0 * d as f64 / (d as f64 - 1.0)).expect("at least 2")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringReport {
    pub times: Vec<f64>,
    /// `‖W(t_{i+1}) − W(t_i)‖_{S^α}`.
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
    pub alpha: Exponent,
    /// Successive distances shrink by at least `0.9` (or all vanish).
    pub cauchy_consistent: bool,
}

impl ScatteringReport {
    pub fn verdict(&self) -> &'static str {
        if self.cauchy_consistent {
            "Cauchy-consistent"
        } else {
            "no scattering at this horizon"
        }
    }
}

/// Distances of the interaction picture `W(t) = U(-t)Q(t)U(t)` along `ladder`.
pub fn scattering_diagnostic(sol: &LinearizedSolution, ladder: &[f64], alpha: Exponent) -> Result<ScatteringReport> {
    if ladder.len() < 2 {
        return Err(Error::InvalidArgument("the ladder needs at least two times".into()));
    }
    let ks = ladder.iter().map(|&t| super::duhamel::frame_index(&sol.rho, t)).collect::<Result<Vec<_>>>()?;
    let ws = sol.interaction_picture(&ks)?;
    let distances = ws
        .windows(2)
        .map(|w| {
            let d = &w[1] - &w[0];
            Ok(schatten_value(&matrix_singular_values(d.as_ref())?, alpha))
        })
        .collect::<Result<Vec<f64>>>()?;
    let ratios: Vec<f64> = distances.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect();
    let all_zero = distances.iter().all(|&d| d == 0.0);
    let cauchy_consistent = all_zero || (distances.windows(2).all(|w| w[0] > 0.0 && w[1] <= 0.9 * w[0]));
    Ok(ScatteringReport { times: ladder.to_vec(), distances, ratios, alpha, cauchy_consistent })
}
