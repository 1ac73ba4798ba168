use serde::{Deserialize, Serialize};

use super::{check_levels, SamplingPlan};
use crate::error::{invalid, Error, Result};
use crate::paths::BrownianLattice;
use crate::scheme::{reference_solution, visit_dense, SdeSpec, Trajectory};

/// Per-level empirical `(E sup_t |X_t - X^n_t|^p)^{1/p}` with batch replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub levels: Vec<usize>,
    pub p: f64,
    pub errors: Vec<f64>,
    /// `batch_errors[b][l]`: the same statistic over batch `b` only.
    pub batch_errors: Vec<Vec<f64>>,
    pub path_count: usize,
}

impl ErrorTable {
    /// Aggregates per-path `p`-th moments, `moments[path][level]`, summing in
    /// path order.
    pub fn from_moments(levels: Vec<usize>, p: f64, moments: &[Vec<f64>], batches: usize) -> Result<Self> {
        check_levels(&levels)?;
        if !(p > 0.0) {
            return Err(invalid!("moment exponent must be positive, got {p}"));
        }
        let m = moments.len();
        if m == 0 || batches == 0 || m % batches != 0 {
            return Err(invalid!("{m} paths cannot be split into {batches} batches"));
        }
        if let Some(row) = moments.iter().find(|r| r.len() != levels.len()) {
            return Err(Error::DimensionMismatch { expected: levels.len(), got: row.len() });
        }
        let per_batch = m / batches;
        let root = |sum: f64, count: usize| (sum / count as f64).powf(1.0 / p);
        let mut totals = vec![0.0; levels.len()];
        let mut batch_errors = Vec::with_capacity(batches);
        for chunk in moments.chunks(per_batch) {
            let mut sums = vec![0.0; levels.len()];
            for row in chunk {
                for (s, v) in sums.iter_mut().zip(row) {
                    *s += *v;
                }
            }
            for (t, s) in totals.iter_mut().zip(&sums) {
                *t += *s;
            }
            batch_errors.push(sums.iter().map(|s| root(*s, per_batch)).collect());
        }
        let errors = totals.iter().map(|s| root(*s, m)).collect();
        Ok(Self { levels, p, errors, batch_errors, path_count: m })
    }

    pub fn batch_count(&self) -> usize {
        self.batch_errors.len()
    }

    /// Standard error of the per-level error, from batch replicates.
    pub fn batch_stderr(&self) -> Vec<f64> {
        let b = self.batch_count();
        (0..self.levels.len())
            .map(|l| {
                if b < 2 {
                    return f64::NAN;
                }
                let vals: Vec<f64> = self.batch_errors.iter().map(|r| r[l]).collect();
                let mean = vals.iter().sum::<f64>() / b as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
                (var / b as f64).sqrt()
            })
            .collect()
    }
}

/// `sup_k |reference_k - approx_k|^p` over shared nodes.
pub fn strong_error(reference: &Trajectory, approx: &Trajectory, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(invalid!("moment exponent must be positive, got {p}"));
    }
    if reference.lineage() != approx.lineage() {
        return Err(Error::Coupling(format!(
            "trajectories driven by different lattices: {:?} vs {:?}",
            reference.lineage(),
            approx.lineage()
        )));
    }
    if reference.resolution() != approx.resolution() || reference.dim() != approx.dim() {
        return Err(Error::Coupling(format!(
            "trajectories stored on different grids ({} vs {} nodes)",
            reference.node_count(),
            approx.node_count()
        )));
    }
    let sup = reference
        .states()
        .chunks(reference.dim())
        .zip(approx.states().chunks(approx.dim()))
        .map(|(a, b)| euclid(a, b))
        .fold(0.0, f64::max);
    Ok(sup.powf(p))
}

/// `(mean of single-path contributions)^{1/p}`, summed in order.
pub fn strong_error_aggregate(contributions: &[f64], p: f64) -> f64 {
    let sum: f64 = contributions.iter().sum();
    (sum / contributions.len() as f64).powf(1.0 / p)
}

#[inline]
fn euclid(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == 1 {
        return (a[0] - b[0]).abs();
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// One path's `sup |X_ref - X^n|^p` for every `n` in `levels`, the EM
/// trajectories being evaluated densely at the reference nodes.
pub fn path_sup_errors(
    spec: &SdeSpec,
    lattice: &BrownianLattice,
    reference: &Trajectory,
    levels: &[usize],
    p: f64,
) -> Result<Vec<f64>> {
    if reference.lineage() != lattice.lineage() {
        return Err(Error::Coupling("reference was driven by another lattice".into()));
    }
    if reference.resolution() != lattice.steps() {
        return Err(Error::Coupling("reference not stored at lattice resolution".into()));
    }
    let d = spec.dim();
    let states = reference.states();
    levels
        .iter()
        .map(|&n| {
            let mut sup = 0.0f64;
            visit_dense(spec, lattice, n, false, |node, y| {
                let e = euclid(&states[node * d..(node + 1) * d], y);
                if e > sup {
                    sup = e;
                }
            })?;
            Ok(sup.powf(p))
        })
        .collect()
}

/// Strong errors of the EM scheme against the reference solution at
/// `plan.level`, which must sit `gap` levels above the finest entry of
/// `levels`.
pub fn strong_error_table(
    spec: &SdeSpec,
    plan: &SamplingPlan,
    levels: &[usize],
    p: f64,
    gap: u32,
) -> Result<ErrorTable> {
    check_levels(levels)?;
    let max_level = levels.last().unwrap().trailing_zeros();
    if plan.dim != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: plan.dim });
    }
    let moments = plan.map_paths(|lattice| {
        let reference = reference_solution(spec, lattice, max_level, gap)?;
        path_sup_errors(spec, lattice, &reference, levels, p)
    })?;
    ErrorTable::from_moments(levels.to_vec(), p, &moments, plan.batches)
}
