//! Dynamics around the stationary state `γ_f`: local Picard solutions of the
//! perturbation equation, the linear response map and its causal inversion,
//! and scattering diagnostics.

mod background;
mod duhamel;
mod picard;
mod pipeline;
mod response;

pub use background::{stationarity_residual, BackgroundSpec, BackgroundState, Distribution, Interaction};
pub use duhamel::{
    background_commutator, background_operator, duhamel_term, duhamel_trajectory, frame_index, DuhamelAction,
    DuhamelSource, DuhamelValue,
};
pub use picard::{dense_rk4_oracle, picard_solve, total_spectra, HartreeRun, PicardOptions, RunKind, RunSummary, Scheme};
pub use pipeline::{
    lwp_data_norm, lwp_ensemble, randomized_lwp_pipeline, DataClass, LwpConfig, LwpDraw, LwpDrawSummary, RandomizationKind,
};
pub use response::{
    alias_free_band, calibrate_l1_constant, dyadic_ladder, l1_apply_direct, l1_apply_fourier, linearized_fixed_point,
    linearized_solve, random_band_density, scattering_diagnostic, scattering_exponent, L1Calibration, LinearizedSolution,
    ScatteringReport, DIVERGENCE_GROWTH,
};
