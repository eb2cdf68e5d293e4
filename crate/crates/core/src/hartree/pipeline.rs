//! Randomize the initial operator, record the data norm the local theory needs, then solve.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::initial::InitialOperator;
use crate::linop::{schatten_norm, sobolev_schatten_norm, Exponent, LowRankOperator};
use crate::norms::{density_trajectory, lebesgue_norm, mixed_norm, time_norm, Trajectory};
use crate::randomize::{sobolev_conjugated_randomize, stream_id, DrawTag, PartitionOfUnity, RandomizationSpec, SubgaussianFamily};
use crate::strichartz::GridSpec;

use super::background::{BackgroundSpec, BackgroundState};
use super::picard::{picard_solve, HartreeRun, PicardOptions, Scheme};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomizationKind {
    /// Singular values only.
    Singular,
    /// Singular values and a Wiener conjugation.
    Full,
}

/// Class the deterministic data is measured in: `S^{α−ε}` or `ℋ^{ε,α}`,
/// with `α = 2` for `d ≤ 2` and `α = 3/2` for `d = 3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataClass {
    Schatten,
    Sobolev,
}

fn default_class() -> DataClass {
    DataClass::Schatten
}

fn default_draws() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LwpConfig {
    pub grid: GridSpec,
    pub background: BackgroundSpec,
    pub initial: InitialOperator,
    pub randomization: RandomizationKind,
    #[serde(default = "default_class")]
    pub class: DataClass,
    /// The `ε` of `S^{α−ε}` / `ℋ^{ε,α}`; ignored in one dimension.
    #[serde(default)]
    pub epsilon: f64,
    pub family: SubgaussianFamily,
    /// Wiener coefficients for full randomization.
    #[serde(default)]
    pub family_l: Option<SubgaussianFamily>,
    pub picard: PicardOptions,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub experiment: u32,
}

/// One draw of the pipeline.
#[derive(Clone, Debug)]
pub struct LwpDraw {
    pub draw: u32,
    pub tags: Vec<DrawTag>,
    /// Norm of the deterministic data in its class.
    pub class_norm: f64,
    /// Data norm of the randomized free evolution on `[0, T_target]`.
    pub data_norm: f64,
    pub run: HartreeRun,
}

/// Serializable digest of a draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LwpDrawSummary {
    pub draw: u32,
    pub tags: Vec<DrawTag>,
    pub class_norm: f64,
    pub data_norm: f64,
    #[serde(rename = "T")]
    pub t_achieved: f64,
    pub halvings: usize,
    pub iterations: usize,
    pub max_ratio: Option<f64>,
}

impl LwpDraw {
    pub fn summary(&self) -> LwpDrawSummary {
        LwpDrawSummary {
            draw: self.draw,
            tags: self.tags.clone(),
            class_norm: self.class_norm,
            data_norm: self.data_norm,
            t_achieved: self.run.t_final,
            halvings: self.run.halvings,
            iterations: self.run.deltas.len(),
            max_ratio: self.run.max_ratio(),
        }
    }
}

impl LwpConfig {
    /// Checks the exponent hypotheses and returns `(σ, class exponent)`.
    pub fn exponents(&self) -> Result<(f64, Exponent)> {
        let d = self.grid.d;
        let base = match d {
            1 | 2 => 2.0,
            3 => 1.5,
            _ => return Err(Error::InvalidArgument(format!("no local theory for d = {d}"))),
        };
        if d == 1 {
            return Ok((0.0, Exponent::TWO));
        }
        let eps = self.epsilon;
        match self.class {
            DataClass::Schatten => {
                if !(eps > 0.0 && base - eps >= 1.0) {
                    return Err(Error::Exponents(format!(
                        "data class S^({base}-eps) needs 0 < eps <= {}, got {eps}",
                        base - 1.0
                    )));
                }
                Ok((0.0, Exponent::new(base - eps)?))
            }
            DataClass::Sobolev => {
                if !(eps > 0.0 && eps < 0.5 * d as f64) {
                    return Err(Error::Exponents(format!("data class H^(eps,{base}) needs 0 < eps < d/2, got {eps}")));
                }
                Ok((eps, Exponent::new(base)?))
            }
        }
    }

    fn scheme(&self) -> Result<Scheme> {
        Scheme::for_dim(self.grid.d)
    }
}

/// The norm each local theory asks of the randomized free evolution.
pub fn lwp_data_norm(q: &LowRankOperator, bg: &BackgroundState, kind: RandomizationKind, frames: usize, dt: f64) -> Result<f64> {
    let d = q.grid().dim();
    let rho = density_trajectory(q, 0.0, dt, frames)?.map(|f| f.real_part());
    let potential = |rho: &Trajectory| -> Result<Trajectory> {
        let frames = rho.frames().iter().map(|r| bg.potential(r)).collect::<Result<Vec<_>>>()?;
        Trajectory::new(0.0, dt, frames)
    };
    let capped = |v: &Trajectory, p: f64| -> Result<f64> {
        let inner: Vec<f64> =
            v.frames().iter().map(|f| lebesgue_norm(f, Exponent::TWO) + lebesgue_norm(f, Exponent::INFINITY)).collect();
        Ok(time_norm(&inner, dt, Exponent::new(p)?))
    };
    match (d, kind) {
        (1, _) => Ok(mixed_norm(&rho, Exponent::new(4.0)?, Exponent::TWO)),
        (2, RandomizationKind::Singular) => Ok(mixed_norm(&rho, Exponent::TWO, Exponent::TWO)),
        (2, RandomizationKind::Full) => capped(&potential(&rho)?, 4.0),
        _ => capped(&potential(&rho)?, 2.0),
    }
}

/// Randomize `q0` (draw `draw` of the config's experiment), record the data norm and solve.
pub fn randomized_lwp_pipeline(q0: &LowRankOperator, bg: &BackgroundState, cfg: &LwpConfig, draw: u32) -> Result<LwpDraw> {
    let (sigma, class_alpha) = cfg.exponents()?;
    let grid = *q0.grid();
    let class_norm = if sigma > 0.0 {
        sobolev_schatten_norm(q0, sigma, class_alpha)?.value
    } else {
        schatten_norm(q0, class_alpha)?.value
    };
    if !class_norm.is_finite() {
        return Err(Error::Divergence("initial data has infinite class norm".into()));
    }
    let pou;
    let spec = match cfg.randomization {
        RandomizationKind::Singular => RandomizationSpec::Singular { family: cfg.family, stream: stream_id(cfg.experiment, draw) },
        RandomizationKind::Full => {
            let family_l = cfg
                .family_l
                .ok_or_else(|| Error::InvalidArgument("full randomization needs family_l".into()))?;
            pou = PartitionOfUnity::new(grid)?;
            RandomizationSpec::Full {
                family_g: cfg.family,
                family_l,
                pou: &pou,
                stream_g: stream_id(cfg.experiment, draw),
                stream_l: stream_id(cfg.experiment | 0x8000_0000, draw),
            }
        }
    };
    let randomized = sobolev_conjugated_randomize(q0, sigma, &spec)?;
    let steps = (cfg.picard.t_target / cfg.picard.dt).round() as usize;
    let data_norm = lwp_data_norm(&randomized.value, bg, cfg.randomization, steps + 1, cfg.picard.dt)?;
    if !data_norm.is_finite() {
        return Err(Error::Divergence(format!("draw {draw}: data norm is not finite")));
    }
    let dense = randomized.value.to_dense()?.symmetrize();
    let run = picard_solve(&dense, bg, &cfg.picard, cfg.scheme()?)?;
    Ok(LwpDraw { draw, tags: randomized.draws, class_norm, data_norm, run })
}

/// All draws of the config, solved in parallel and returned in draw order.
pub fn lwp_ensemble(cfg: &LwpConfig) -> Result<Vec<LwpDraw>> {
    let grid = cfg.grid.grid()?;
    let bg = cfg.background.build(grid)?;
    let q0 = cfg.initial.build(grid)?;
    (0..cfg.draws as u32).into_par_iter().map(|m| randomized_lwp_pipeline(&q0, &bg, cfg, m)).collect()
}
