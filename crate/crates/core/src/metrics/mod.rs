//! Empirical error functionals and rate estimation.
//!
//! Monte Carlo work is organised per path: every path index gets its own
//! lattice from the counter-based generator, paths are processed on the
//! ambient rayon pool, and results are collected in path order before any
//! reduction. Aggregates therefore do not depend on the number of workers.

mod density;
mod fit;
mod quadrature;
mod strong;

pub use density::{density_bound_diagnostic, DensityBump, DensityRow};
pub use fit::{fit_power_law, fit_rate, RateFit};
pub use quadrature::{
    path_quadrature, quadrature_functional, quadrature_rate_sweep, quadrature_table, QuadratureMode, QuadratureProcess,
    QuadratureSample, QuadratureSpec,
};
pub use strong::{path_sup_errors, strong_error, strong_error_aggregate, strong_error_table, ErrorTable};

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::paths::BrownianLattice;
use crate::rng::SeedLineage;

/// How many paths to draw and at which lattice resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingPlan {
    pub experiment_seed: u64,
    pub paths: usize,
    pub batches: usize,
    pub dim: usize,
    /// Lattice level every path is generated at.
    pub level: u32,
}

impl SamplingPlan {
    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 || self.batches == 0 {
            return Err(invalid!("need at least one path and one batch"));
        }
        if self.paths % self.batches != 0 {
            return Err(invalid!("path count {} not divisible by batch count {}", self.paths, self.batches));
        }
        Ok(())
    }

    pub fn lineage(&self, path: usize) -> SeedLineage {
        SeedLineage::new(self.experiment_seed, path as u64)
    }

    /// Runs `work` on every path's lattice; results in path order.
    pub fn map_paths<T, F>(&self, work: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&BrownianLattice) -> Result<T> + Sync,
    {
        self.validate()?;
        (0..self.paths)
            .into_par_iter()
            .map(|i| {
                let lattice = BrownianLattice::generate(self.dim, self.level, self.lineage(i))?;
                work(&lattice)
            })
            .collect()
    }
}

/// Checks that `levels` are strictly increasing powers of two.
pub(crate) fn check_levels(levels: &[usize]) -> Result<()> {
    if levels.is_empty() {
        return Err(invalid!("no levels given"));
    }
    for w in levels.windows(2) {
        if w[0] >= w[1] {
            return Err(invalid!("levels must be strictly increasing: {levels:?}"));
        }
    }
    if let Some(bad) = levels.iter().find(|n| !n.is_power_of_two()) {
        return Err(invalid!("level {bad} is not a power of two"));
    }
    Ok(())
}
