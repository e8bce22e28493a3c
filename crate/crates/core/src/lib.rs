//! ℓ1-regularized identification of partially observed linear dynamical
//! systems from a single input/output trajectory.
//!
//! The crate is organised bottom-up:
//!
//! * [`system`]: state-space models, the banded synthetic generator,
//!   trajectory simulation and stability certificates.
//! * [`design`]: the stacked regression `Y = U Gᵀ + W Fᵀ + E + V`.
//! * [`estimators`]: row-wise lasso by coordinate descent, the
//!   minimum-norm least-squares baseline, λ rules and error metrics.
//! * [`realization`]: higher-order Markov and Hankel matrices and a
//!   balanced Ho-Kalman realization.
//! * [`theory`]: closed-form error bounds and Monte Carlo checks of the
//!   concentration inequalities behind them.
//! * [`harness`]: grid experiments, tidy CSV output and the config format.
//! * [`io`]: the `system.v1` JSON matrix container.

pub mod design;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod realization;
pub mod rng;
pub mod system;
pub mod theory;

pub use error::{Error, Result};
pub use nalgebra::{DMatrix, DVector};
