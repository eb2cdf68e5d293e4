//! Lebesgue and space-time mixed norms, density trajectories and Monte Carlo
//! moment tables.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid};
use crate::linop::{conjugate_free, Exponent, Operator};

/// Resamples used for every bootstrap estimate.
pub const BOOTSTRAP_RESAMPLES: usize = 200;
const BOOTSTRAP_SEED: u64 = 0x6d6f_6d65_6e74;

/// Pairwise summation; round-off grows like `log n` instead of `n`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// `(h^d Σ |u|^q)^{1/q}`, or `max |u|` for `q = ∞`.
pub fn lebesgue_norm(u: &ComplexField, q: Exponent) -> f64 {
    let abs: Vec<f64> = u.values().iter().map(|v| v.norm()).collect();
    lebesgue_norm_abs(u.grid(), &abs, q)
}

fn lebesgue_norm_abs(grid: &Grid, abs: &[f64], q: Exponent) -> f64 {
    let top = abs.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 || q.is_infinite() {
        return top;
    }
    let qv = q.value();
    let scaled: Vec<f64> = abs.iter().map(|v| (v / top).powf(qv)).collect();
    top * (grid.cell_volume() * pairwise_sum(&scaled)).powf(1.0 / qv)
}

/// Frames `u(t_0 + k Δt)`, `k = 0..=K`, on a uniform time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    t0: f64,
    dt: f64,
    frames: Vec<ComplexField>,
}

impl Trajectory {
    pub fn new(t0: f64, dt: f64, frames: Vec<ComplexField>) -> Result<Self> {
        if frames.len() < 3 {
            return Err(Error::InvalidArgument(format!("a trajectory needs at least 3 frames, got {}", frames.len())));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let g = *frames[0].grid();
        for f in &frames[1..] {
            g.check_same(f.grid())?;
        }
        Ok(Trajectory { t0, dt, frames })
    }

    pub fn zeros(grid: Grid, t0: f64, dt: f64, frames: usize) -> Result<Self> {
        Self::new(t0, dt, vec![ComplexField::zeros(grid); frames])
    }

    pub fn grid(&self) -> &Grid {
        self.frames[0].grid()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    /// `t_K − t_0`.
    pub fn span(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    pub fn frames(&self) -> &[ComplexField] {
        &self.frames
    }

    pub fn frame(&self, k: usize) -> &ComplexField {
        &self.frames[k]
    }

    pub fn frames_mut(&mut self) -> &mut [ComplexField] {
        &mut self.frames
    }

    pub fn into_frames(self) -> Vec<ComplexField> {
        self.frames
    }

    /// Trapezoid weights `Δt (1/2, 1, …, 1, 1/2)`.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.len(), self.dt)
    }

    pub fn map(&self, f: impl FnMut(&ComplexField) -> ComplexField) -> Trajectory {
        Trajectory { t0: self.t0, dt: self.dt, frames: self.frames.iter().map(f).collect() }
    }

    pub fn sub(&self, other: &Trajectory) -> Result<Trajectory> {
        if self.len() != other.len() {
            return Err(Error::InvalidArgument("trajectories differ in length".into()));
        }
        let frames = self.frames.iter().zip(&other.frames).map(|(a, b)| a.sub(b)).collect::<Result<_>>()?;
        Ok(Trajectory { t0: self.t0, dt: self.dt, frames })
    }

    pub fn add(&self, other: &Trajectory) -> Result<Trajectory> {
        if self.len() != other.len() {
            return Err(Error::InvalidArgument("trajectories differ in length".into()));
        }
        let frames = self.frames.iter().zip(&other.frames).map(|(a, b)| a.add(b)).collect::<Result<_>>()?;
        Ok(Trajectory { t0: self.t0, dt: self.dt, frames })
    }
}

pub fn trapezoid_weights(points: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![dt; points];
    if points > 0 {
        w[0] *= 0.5;
        w[points - 1] *= 0.5;
    }
    w
}

/// `‖u‖_{L^p_t L^q_x}` with the trapezoid rule in time.
pub fn mixed_norm(tr: &Trajectory, p: Exponent, q: Exponent) -> f64 {
    let inner: Vec<f64> = tr.frames.iter().map(|f| lebesgue_norm(f, q)).collect();
    time_norm(&inner, tr.dt, p)
}

/// `L^p` norm in time of per-frame values sampled with step `dt`.
pub fn time_norm(values: &[f64], dt: f64, p: Exponent) -> f64 {
    let top = values.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 || p.is_infinite() {
        return top;
    }
    let pv = p.value();
    let w = trapezoid_weights(values.len(), dt);
    let terms: Vec<f64> = values.iter().zip(&w).map(|(v, w)| w * (v / top).powf(pv)).collect();
    top * pairwise_sum(&terms).powf(1.0 / pv)
}

/// Frames `ρ(U(t_k) A U(t_k)^*)`; a low-rank operator is propagated through its factors.
pub fn density_trajectory<A: Operator + Clone>(a: &A, t0: f64, dt: f64, frames: usize) -> Result<Trajectory> {
    let f = (0..frames).map(|k| conjugate_free(a, t0 + k as f64 * dt).density()).collect();
    Trajectory::new(t0, dt, f)
}

/// An `L^r_ω` norm estimate with its bootstrap standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub stderr: f64,
}

fn moment_value(samples: &[f64], r: f64, top: f64) -> f64 {
    if top == 0.0 {
        return 0.0;
    }
    let terms: Vec<f64> = samples.iter().map(|x| (x / top).powf(r)).collect();
    top * (pairwise_sum(&terms) / samples.len() as f64).powf(1.0 / r)
}

fn check_samples(samples: &[f64], r: f64) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    if !(r >= 1.0 && r.is_finite()) {
        return Err(Error::InvalidExponent(format!("moment order must lie in [1, inf), got {r}")));
    }
    if samples.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument("samples must be finite and non-negative".into()));
    }
    Ok(())
}

fn resample_indices(m: usize) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(BOOTSTRAP_SEED);
    (0..BOOTSTRAP_RESAMPLES).map(|_| (0..m).map(|_| rng.random_range(0..m)).collect()).collect()
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    (pairwise_sum(&dev) / (n - 1.0)).sqrt()
}

/// `((1/M) Σ X^r)^{1/r}` with a 200-resample bootstrap standard error.
pub fn empirical_moment(samples: &[f64], r: f64) -> Result<MomentEstimate> {
    check_samples(samples, r)?;
    let top = samples.iter().cloned().fold(0.0, f64::max);
    let value = moment_value(samples, r, top);
    let boot: Vec<f64> = resample_indices(samples.len())
        .iter()
        .map(|idx| {
            let s: Vec<f64> = idx.iter().map(|&i| samples[i]).collect();
            moment_value(&s, r, top)
        })
        .collect();
    Ok(MomentEstimate { value, stderr: std_dev(&boot) })
}

/// Least-squares slope of `ln value` against `ln r`.
pub fn log_log_slope(rs: &[f64], values: &[f64]) -> f64 {
    if values.iter().any(|v| *v <= 0.0) || rs.len() < 2 {
        return 0.0;
    }
    let x: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Fitted growth exponent with a percentile bootstrap 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub r: f64,
    pub value: f64,
    pub stderr: f64,
}

/// Provenance columns written next to every row.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TableProvenance {
    pub seed: u64,
    /// e.g. `d=1;n=64;L=40`.
    pub grid: String,
    pub dt: f64,
    pub t_final: f64,
}

/// Empirical `L^r_ω` norms over a list of moment orders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub rows: Vec<MomentRow>,
    pub samples: usize,
    pub provenance: TableProvenance,
    pub slope: SlopeFit,
}

pub const MOMENT_CSV_HEADER: [&str; 8] = ["r", "value", "stderr", "M", "seed", "grid", "dt", "T"];

/// Shortest representation that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

impl MomentTable {
    /// Moments, bootstrap errors and the slope fit, all from one shared set of resamples.
    pub fn from_samples(samples: &[f64], rs: &[f64], provenance: TableProvenance) -> Result<Self> {
        if rs.is_empty() {
            return Err(Error::InvalidArgument("empty list of moment orders".into()));
        }
        for &r in rs {
            check_samples(samples, r)?;
        }
        let top = samples.iter().cloned().fold(0.0, f64::max);
        let values: Vec<f64> = rs.iter().map(|&r| moment_value(samples, r, top)).collect();
        let mut boot_values = vec![Vec::with_capacity(BOOTSTRAP_RESAMPLES); rs.len()];
        let mut boot_slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
        for idx in resample_indices(samples.len()) {
            let s: Vec<f64> = idx.iter().map(|&i| samples[i]).collect();
            let v: Vec<f64> = rs.iter().map(|&r| moment_value(&s, r, top)).collect();
            boot_slopes.push(log_log_slope(rs, &v));
            for (b, x) in boot_values.iter_mut().zip(v) {
                b.push(x);
            }
        }
        let rows = rs
            .iter()
            .zip(&values)
            .zip(&boot_values)
            .map(|((&r, &value), b)| MomentRow { r, value, stderr: std_dev(b) })
            .collect();
        boot_slopes.sort_by(|a, b| a.total_cmp(b));
        let q = |p: f64| boot_slopes[((p * (boot_slopes.len() - 1) as f64).round()) as usize];
        let slope = SlopeFit { slope: log_log_slope(rs, &values), lower: q(0.025), upper: q(0.975) };
        Ok(MomentTable { rows, samples: samples.len(), provenance, slope })
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    pub fn orders(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.r).collect()
    }

    /// `value(r₁) ≤ value(r₂) + 2·stderr` for every `r₁ < r₂`.
    pub fn is_monotone(&self) -> bool {
        self.rows.iter().enumerate().all(|(i, a)| {
            self.rows[i + 1..].iter().all(|b| a.r >= b.r || a.value <= b.value + 2.0 * (a.stderr.max(b.stderr)) + 1e-15 * b.value)
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(MOMENT_CSV_HEADER)?;
        let p = &self.provenance;
        for row in &self.rows {
            w.write_record([
                format_f64(row.r),
                format_f64(row.value),
                format_f64(row.stderr),
                self.samples.to_string(),
                p.seed.to_string(),
                p.grid.clone(),
                format_f64(p.dt),
                format_f64(p.t_final),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf8")
    }
}
