//! Euler–Maruyama under irregular drift.
//!
//! Building blocks for measuring strong convergence rates of the
//! Euler–Maruyama scheme when the drift is only bounded measurable or has
//! fractional Sobolev regularity:
//!
//! * [`rng`] and [`paths`]: counter-based Brownian lattices on dyadic grids,
//!   with exact coarsening and Brownian-bridge refinement.
//! * [`coefficients`]: catalogue drifts and diffusions with regularity
//!   metadata, and a fractional Sobolev seminorm estimator.
//! * [`scheme`]: the (driftless) EM scheme and reference solutions.
//! * [`metrics`]: strong errors, occupation-time quadrature functionals,
//!   rate fits, and the density diagnostic.
//! * [`heatkernel`]: Gaussian densities and heat-semigroup quadrature.
//! * [`harness`]: experiment configs, canned experiments, parallel runner,
//!   CSV and manifest output.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::manual_is_multiple_of, clippy::large_enum_variant)]

pub mod coefficients;
pub mod error;
pub mod harness;
pub mod heatkernel;
pub mod metrics;
mod nan_serde;
pub mod paths;
pub mod rng;
pub mod scheme;

pub use coefficients::{
    builtin_diffusion, builtin_drift, DiffusionSpec, DriftSpec, Params, RegularityClass, ScalarField, SeminormEstimate,
};
pub use error::{Error, Result};
pub use metrics::{ErrorTable, QuadratureSample, RateFit};
pub use paths::{BrownianLattice, GridMap};
pub use rng::SeedLineage;
pub use scheme::{AssumptionProfile, SdeSpec, Trajectory};
