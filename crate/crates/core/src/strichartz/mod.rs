//! Exponent geometry of the randomized Strichartz estimates and the Monte
//! Carlo experiments that measure their moment growth.

mod exponents;
mod key_estimate;
mod monte_carlo;

pub use exponents::{
    alpha_comparison_scan, deterministic_sharp_alpha, full_strichartz_exponents, function_randomization_exponents,
    key_estimate_exponents, parse_rational, rational_opt, rational_str, region_membership, scaling_sum,
    sharp_q_limit, singular_strichartz_exponents, sobolev_admissible, standard_admissible, strichartz_alpha, to_f64,
    Admissibility, AlphaComparison, ExponentTuple, KeyExponents, Membership, Point, Rational, RegionAbcd,
};
pub use key_estimate::{key_estimate_probe, key_estimate_sides, KeyEstimateConfig, KeyEstimateStats, KeyInstance, KeySides};
pub use monte_carlo::{
    deterministic_norm, full_sample_direct, function_sample_direct, mc_function_randomization, mc_strichartz_full,
    mc_strichartz_singular, singular_sample_direct, wiener_stream, FullConfig, FunctionConfig, GridSpec,
    SingularConfig, StrichartzRun, TimeWindow, EDGE_TOLERANCE,
};
