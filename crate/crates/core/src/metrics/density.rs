use serde::Serialize;

use super::SamplingPlan;
use crate::error::{invalid, Error, Result};
use crate::scheme::{em_solve, AssumptionProfile, SdeSpec};

/// `G = 1` on the cube `center + [-half_width, half_width)^d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityBump {
    pub center: Vec<f64>,
    pub half_width: f64,
}

impl DensityBump {
    pub fn new(center: Vec<f64>, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(invalid!("bump half width must be positive, got {half_width}"));
        }
        Ok(Self { center, half_width })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let inside =
            x.iter().zip(&self.center).all(|(xi, ci)| (xi - ci) >= -self.half_width && (xi - ci) < self.half_width);
        if inside {
            1.0
        } else {
            0.0
        }
    }

    /// `||G||_{L_p} = (2 h)^{d/p}`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        (2.0 * self.half_width).powf(self.center.len() as f64 / p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityRow {
    pub t: f64,
    /// Monte Carlo estimate of `E G(X^n_t)`.
    pub mean: f64,
    pub stderr: f64,
    /// `|E G(X^n_t)| / (||G||_p t^{-d/(2p)})`.
    pub ratio: f64,
}

/// Ratio table at `t = 2^{-j}` for each `j` in `exponents`, with the EM
/// scheme at `2^{plan.level}` steps.
pub fn density_bound_diagnostic(
    spec: &SdeSpec,
    bump: &DensityBump,
    exponents: &[u32],
    p: f64,
    plan: &SamplingPlan,
) -> Result<Vec<DensityRow>> {
    if spec.profile() == AssumptionProfile::OracleOnly {
        return Err(Error::Assumption(format!(
            "density bound needs nondegenerate bounded coefficients; {} / {} is oracle-only",
            spec.drift().name(),
            spec.diffusion().name()
        )));
    }
    if !(p > 1.0) {
        return Err(invalid!("density bound exponent must exceed 1, got {p}"));
    }
    let d = spec.dim();
    if bump.center.len() != d || plan.dim != d {
        return Err(Error::DimensionMismatch { expected: d, got: bump.center.len() });
    }
    if exponents.is_empty() {
        return Err(invalid!("no time points"));
    }
    if let Some(j) = exponents.iter().find(|&&j| j == 0 || j > plan.level) {
        return Err(invalid!("time 2^-{j} not a grid point of the {}-level scheme", plan.level));
    }
    let n = 1usize << plan.level;
    let hits = plan.map_paths(|lattice| {
        let traj = em_solve(spec, lattice, n)?;
        Ok(exponents.iter().map(|&j| bump.eval(traj.state(n >> j))).collect::<Vec<f64>>())
    })?;
    let m = hits.len() as f64;
    let norm = bump.lp_norm(p);
    Ok(exponents
        .iter()
        .enumerate()
        .map(|(c, &j)| {
            let t = 0.5f64.powi(j as i32);
            let mean = hits.iter().map(|r| r[c]).sum::<f64>() / m;
            let stderr = (mean * (1.0 - mean) / (m - 1.0).max(1.0)).sqrt();
            let ratio = mean.abs() / (norm * t.powf(-(d as f64) / (2.0 * p)));
            DensityRow { t, mean, stderr, ratio }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{builtin_diffusion, builtin_drift, Params};
    use crate::rng::normal_cdf;

    fn spec(drift: &str, diff: &str, dp: &str) -> SdeSpec {
        SdeSpec::new(
            builtin_drift(drift, 1, &Params::new()).unwrap(),
            builtin_diffusion(diff, 1, &dp.parse().unwrap()).unwrap(),
            vec![0.0],
        )
        .unwrap()
    }

    #[test]
    fn gaussian_case_matches_exact_probability() {
        let s = spec("zero", "identity", "");
        let bump = DensityBump::new(vec![0.0], 0.05).unwrap();
        let plan = SamplingPlan { experiment_seed: 3, paths: 20_000, batches: 8, dim: 1, level: 10 };
        let rows = density_bound_diagnostic(&s, &bump, &[2, 4, 6, 8, 10], 2.0, &plan).unwrap();
        for pair in rows.windows(2) {
            // t halves between rows
            let q = pair[1].ratio / pair[0].ratio;
            assert!(q > 0.5 && q < 2.0, "{q}");
        }
        for r in &rows {
            let exact = normal_cdf(0.05 / r.t.sqrt()) - normal_cdf(-0.05 / r.t.sqrt());
            assert!((r.mean - exact).abs() < 4.0 * r.stderr + 1e-12, "{} vs {exact}", r.mean);
        }
    }

    #[test]
    fn oracle_only_rejected() {
        let s = SdeSpec::new(
            builtin_drift("linear_ou", 1, &Params::new()).unwrap(),
            builtin_diffusion("identity", 1, &Params::new()).unwrap(),
            vec![0.0],
        )
        .unwrap();
        let bump = DensityBump::new(vec![0.0], 0.1).unwrap();
        let plan = SamplingPlan { experiment_seed: 3, paths: 8, batches: 8, dim: 1, level: 4 };
        assert!(matches!(density_bound_diagnostic(&s, &bump, &[2], 2.0, &plan), Err(Error::Assumption(_))));
        let ok = spec("zero", "identity", "");
        assert!(density_bound_diagnostic(&ok, &bump, &[5], 2.0, &plan).is_err());
        assert!(DensityBump::new(vec![0.0], 0.0).is_err());
    }
}
