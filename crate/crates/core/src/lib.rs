//! Numerical laboratory for Strichartz estimates in Schatten classes.
//!
//! The crate works on a periodic box `[-L/2, L/2)^d` (d = 1, 2, 3) and provides
//!
//! * [`grid`]: fields, Fourier multipliers and the free Schrödinger group,
//! * [`linop`]: low-rank and dense compact operators with Schatten norms,
//! * [`randomize`]: subgaussian samplers, Wiener, singular value and full randomization,
//! * [`initial`]: reproducible wave-packet and plane-wave initial data,
//! * [`norms`]: space-time mixed norms and Monte Carlo moment tables,
//! * [`strichartz`]: exponent geometry and the randomized Strichartz experiments,
//! * [`hartree`]: the stationary background, Picard and RK4 solvers, the linear
//!   response operator and the linearized scattering solver.

pub mod error;
pub mod grid;
pub mod hartree;
pub mod initial;
pub mod linop;
pub mod norms;
pub mod randomize;
pub mod strichartz;

pub use error::{Error, Result};
pub use grid::{ComplexField, FourierMultiplier, Grid};
pub use linop::{DenseOperator, Exponent, LowRankOperator, SchattenReport};
pub use norms::{MomentTable, Trajectory};
pub use randomize::{FamilyKind, PartitionOfUnity, SubgaussianFamily};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
