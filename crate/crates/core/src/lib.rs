//! Pseudospectral toolkit for nonlinear Schrödinger and Choquard equations
//! with a slowly decaying potential `γ|x|^{-α}` on periodic boxes in one to
//! three dimensions.
//!
//! * [`grid`], [`field`]: grids, complex fields, norms, spectral transforms
//!   and the mass-preserving dilation.
//! * [`potential`], [`riesz`]: the potential, Riesz-potential convolution and
//!   an explicit lower bound for the potential energy.
//! * [`energy`]: nonlinearities, energy, frequency and residual.
//! * [`constants`], [`petviashvili`], [`thresholds`]: sharp constants,
//!   reference profiles, critical masses and hypothesis checks.
//! * [`ground_state`], [`propagator`], [`stability`]: minimizers, time
//!   evolution and orbital-stability experiments.

mod cache;
pub mod constants;
pub mod energy;
pub mod error;
pub mod exec;
pub mod field;
pub mod grid;
pub mod ground_state;
pub mod petviashvili;
pub mod potential;
pub mod propagator;
pub mod riesz;
pub mod sampling;
pub mod special;
pub mod stability;
pub mod thresholds;

pub use num_complex::Complex64;

pub use energy::{NonlinearitySpec, ProblemSpec};
pub use error::{Error, Result};
pub use field::ComplexField;
pub use grid::{make_grid, Grid};
pub use potential::PotentialSpec;
pub use riesz::{RieszKernel, RieszSpec, ZeroMode};
