//! Fourier pseudospectral solvers for dipolar Gross–Pitaevskii–Poisson models
//! and their quasi-2D and quasi-1D reductions.
//!
//! The numerical core is generic over the floating-point scalar; the aliases
//! below fix it to `f64`, which is what the command-line tool uses.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod grid;
pub mod ground_state;
pub mod io;
pub mod kernels;
pub mod models;
pub mod parallel;
pub mod reduction;
pub mod special;

pub use error::{
    ConfigError, DynamicsError, GridError, GroundStateError, KernelError, ModelError, ReductionError, RunError,
    SnapshotError,
};
pub use reduction::{RateFit, ReductionCase, ReductionSetup, TransverseMode};
pub use ground_state::{GNConstant, RegimeVerdict, Verdict};
pub use models::{EnergyBreakdown, ModelKind, ModelParams, PotentialSpec};
pub use kernels::DipoleAxis;

/// Double-precision grid.
pub type Grid = grid::Grid<f64>;
/// Double-precision wavefunction.
pub type Wavefunction = grid::Wavefunction<f64>;
/// Double-precision transform coefficients.
pub type SpectralField = grid::SpectralField<f64>;
/// Double-precision symbol table.
pub type KernelSymbol = kernels::KernelSymbol<f64>;
/// Complex double.
pub type C64 = num_complex::Complex<f64>;
/// Double-precision bound model.
pub type Model = models::Model<f64>;
