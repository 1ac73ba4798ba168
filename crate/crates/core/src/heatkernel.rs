//! Gaussian densities and the heat semigroup `P_t f = p_t * f`.
//!
//! In one and two dimensions `P_t f(x)` is computed by cell-mass quadrature:
//! the window `x ± 8 sqrt(t)` is covered by cells on a dyadic lattice, each
//! cell's Gaussian mass is exact (differences of the normal CDF) and `f` is
//! sampled at the cell midpoint. Discontinuities at dyadic points, which
//! covers every catalogue drift, therefore fall on cell edges. Higher
//! dimensions fall back to Monte Carlo.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::coefficients::{estimate_sobolev_seminorm, ScalarField, SeminormOptions};
use crate::error::{invalid, Error, Result};
use crate::rng::{normal_cdf, CounterRng, SeedLineage};

/// Window half-width in units of `sqrt(t)`.
pub const WINDOW_SIGMAS: f64 = 8.0;
pub const DEFAULT_CELLS: usize = 4096;
/// Sample count for the Monte Carlo semigroup in `d > 2`.
pub const MC_SAMPLES: usize = 1_000_000;

const SYMMETRY_TOL: f64 = 1e-12;

/// Centred Gaussian density with covariance `Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    cov: DMatrix<f64>,
    inv: DMatrix<f64>,
    det: f64,
    norm: f64,
}

impl GaussianKernel {
    /// `cov` is row-major `d x d`.
    pub fn new(dim: usize, cov: &[f64]) -> Result<Self> {
        if dim == 0 || cov.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: cov.len() });
        }
        let cov = DMatrix::from_row_slice(dim, dim, cov);
        for i in 0..dim {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(invalid!("covariance not symmetric at ({i}, {j})"));
                }
            }
        }
        let chol = cov.clone().cholesky().ok_or_else(|| invalid!("covariance is not positive definite"))?;
        let det = chol.determinant();
        if !(det > 0.0) || !det.is_finite() {
            return Err(invalid!("covariance determinant {det} is not positive"));
        }
        let inv = chol.inverse();
        let norm = (2.0 * std::f64::consts::PI).powf(-(dim as f64) / 2.0) / det.sqrt();
        Ok(Self { cov, inv, det, norm })
    }

    /// `Σ = t I`.
    pub fn isotropic(dim: usize, t: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(invalid!("variance must be positive, got {t}"));
        }
        let mut cov = vec![0.0; dim * dim];
        for i in 0..dim {
            cov[i * dim + i] = t;
        }
        Self::new(dim, &cov)
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inv
    }

    pub fn determinant(&self) -> f64 {
        self.det
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let v = DVector::from_column_slice(x);
        let q = v.dot(&(&self.inv * &v));
        Ok(self.norm * (-0.5 * q).exp())
    }

    /// Midpoint-rule integral of the density over a box of `±8` standard
    /// deviations per axis with `cells` cells per axis. `d <= 2` only.
    pub fn mass(&self, cells: usize) -> Result<f64> {
        let d = self.dim();
        if d > 2 {
            return Err(invalid!("mass quadrature supports d <= 2, got {d}"));
        }
        if cells == 0 {
            return Err(invalid!("need at least one cell"));
        }
        let half: Vec<f64> = (0..d).map(|i| WINDOW_SIGMAS * self.cov[(i, i)].sqrt()).collect();
        let w: Vec<f64> = half.iter().map(|h| 2.0 * h / cells as f64).collect();
        let mid = |i: usize, k: usize| -half[i] + (k as f64 + 0.5) * w[i];
        let mut total = 0.0;
        if d == 1 {
            for k in 0..cells {
                total += self.density(&[mid(0, k)])? * w[0];
            }
        } else {
            for k in 0..cells {
                for l in 0..cells {
                    total += self.density(&[mid(0, k), mid(1, l)])? * w[0] * w[1];
                }
            }
        }
        Ok(total)
    }
}

/// `P_t f(x)` with an error indicator: the difference to the same rule on
/// cells twice as wide (or the Monte Carlo standard error in `d > 2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SemigroupValue {
    pub value: f64,
    pub mesh_error: f64,
}

/// Largest power of two not above `x`.
fn dyadic_floor(x: f64) -> f64 {
    2f64.powi(x.log2().floor() as i32)
}

/// One-dimensional cell masses of `N(x, t)` on `[k w, (k+1) w)` for the
/// cells overlapping `x ± 8 sqrt(t)`; returns the first cell index.
fn cell_masses(t: f64, x: f64, w: f64) -> (i64, Vec<f64>) {
    let sd = t.sqrt();
    let first = ((x - WINDOW_SIGMAS * sd) / w).floor() as i64;
    let last = ((x + WINDOW_SIGMAS * sd) / w).ceil() as i64;
    let cdf: Vec<f64> = (first..=last).map(|k| normal_cdf((k as f64 * w - x) / sd)).collect();
    (first, cdf.windows(2).map(|c| c[1] - c[0]).collect())
}

fn convolve<F>(f: &F, t: f64, x: &[f64], w: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    match x.len() {
        1 => {
            let (first, mass) = cell_masses(t, x[0], w);
            mass.iter().enumerate().map(|(j, m)| m * f(&[((first + j as i64) as f64 + 0.5) * w])).sum()
        }
        _ => {
            let (f0, m0) = cell_masses(t, x[0], w);
            let (f1, m1) = cell_masses(t, x[1], w);
            let mut total = 0.0;
            for (i, a) in m0.iter().enumerate() {
                let y0 = ((f0 + i as i64) as f64 + 0.5) * w;
                for (j, b) in m1.iter().enumerate() {
                    let y1 = ((f1 + j as i64) as f64 + 0.5) * w;
                    total += a * b * f(&[y0, y1]);
                }
            }
            total
        }
    }
}

/// `P_t f(x)`; `cells` sets the resolution of the `±8 sqrt(t)` window per
/// axis (rounded to a dyadic cell width).
pub fn semigroup_apply<F>(f: F, t: f64, x: &[f64], cells: usize) -> Result<SemigroupValue>
where
    F: Fn(&[f64]) -> f64,
{
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid!("semigroup time must be positive, got {t}"));
    }
    if x.is_empty() {
        return Err(invalid!("empty evaluation point"));
    }
    if cells < 2 {
        return Err(invalid!("need at least two cells"));
    }
    if x.len() > 2 {
        return Ok(monte_carlo(&f, t, x));
    }
    let w = dyadic_floor(2.0 * WINDOW_SIGMAS * t.sqrt() / cells as f64);
    let value = convolve(&f, t, x, w);
    let coarse = convolve(&f, t, x, 2.0 * w);
    Ok(SemigroupValue { value, mesh_error: (value - coarse).abs() })
}

fn monte_carlo<F>(f: &F, t: f64, x: &[f64]) -> SemigroupValue
where
    F: Fn(&[f64]) -> f64,
{
    let d = x.len();
    let sd = t.sqrt();
    let mut rng = CounterRng::at(SeedLineage::new(0, 0), 0);
    let mut y = vec![0.0; d];
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..MC_SAMPLES {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi + sd * rng.next_normal();
        }
        let v = f(&y);
        sum += v;
        sq += v * v;
    }
    let m = MC_SAMPLES as f64;
    let mean = sum / m;
    let var = (sq / m - mean * mean).max(0.0) * m / (m - 1.0);
    SemigroupValue { value: mean, mesh_error: (var / m).sqrt() }
}

/// `P_t f` in `d = 1` at the nodes `i w` inside `[lo, hi]`; `w` must be a
/// power of two. Cell masses depend only on `k - i`, so this is a discrete
/// convolution.
pub fn semigroup_on_grid<F>(f: F, t: f64, lo: f64, hi: f64, w: f64) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(f64) -> f64,
{
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid!("semigroup time must be positive, got {t}"));
    }
    if !(w > 0.0) || dyadic_floor(w) != w {
        return Err(invalid!("grid width {w} is not a power of two"));
    }
    if !(hi > lo) {
        return Err(invalid!("empty range [{lo}, {hi}]"));
    }
    let first = (lo / w).ceil() as i64;
    let last = (hi / w).floor() as i64;
    // kernel[j] is the mass of cell i + offset + j seen from node i w
    let (offset, kernel) = cell_masses(t, 0.0, w);
    let cells: Vec<f64> =
        (first + offset..last + offset + kernel.len() as i64).map(|k| f((k as f64 + 0.5) * w)).collect();
    let xs: Vec<f64> = (first..=last).map(|i| i as f64 * w).collect();
    let values = (0..xs.len()).map(|i| kernel.iter().zip(&cells[i..]).map(|(m, v)| m * v).sum()).collect();
    Ok((xs, values))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeRegularityOptions {
    /// `x` range of the `L_m` norm.
    pub lo: f64,
    pub hi: f64,
    /// Grid width as a fraction of the smallest `sqrt(s)`, rounded down to
    /// a power of two.
    pub resolution: f64,
    /// Largest admissible `max/min` ratio.
    pub spread: f64,
}

impl Default for TimeRegularityOptions {
    fn default() -> Self {
        Self { lo: -10.0, hi: 10.0, resolution: 1.0 / 32.0, spread: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeRegularity {
    pub pairs: Vec<(f64, f64)>,
    /// `||P_t f - P_s f||_{L_m}`.
    pub lhs: Vec<f64>,
    /// `lhs / (|t-s|^delta s^{alpha/2 - delta})` with `delta = alpha/2`.
    pub ratios: Vec<f64>,
    pub bounded: bool,
}

/// Evaluates `||P_t f - P_s f||_{L_m}` against `|t-s|^delta s^{alpha/2-delta}`
/// with `delta = alpha/2` over `pairs`. The unknown constant is not
/// estimated: the sweep is bounded when the positive ratios stay within
/// `opts.spread` of each other.
pub fn check_semigroup_time_regularity(
    f: &ScalarField,
    alpha: f64,
    m: f64,
    pairs: &[(f64, f64)],
    opts: &TimeRegularityOptions,
) -> Result<TimeRegularity> {
    if f.dim() != 1 {
        return Err(invalid!("time regularity check supports d = 1, got {}", f.dim()));
    }
    if pairs.is_empty() {
        return Err(invalid!("empty (s, t) sweep"));
    }
    if let Some((s, t)) = pairs.iter().find(|(s, t)| !(*s > 0.0 && s <= t && *t <= 1.0)) {
        return Err(invalid!("need 0 < s <= t <= 1, got s={s}, t={t}"));
    }
    // local finiteness on the x range; the infinite tail of a function with
    // different limits at ±inf is not a failure here
    let half = 0.5 * (opts.hi - opts.lo);
    let semi = estimate_sobolev_seminorm(
        f,
        alpha,
        m,
        &SeminormOptions { radius: half, center: opts.lo + half, exterior: false, ..Default::default() },
    )?;
    if semi.divergent {
        return Err(Error::Divergent(format!("[{}] at alpha={alpha}, m={m}", f.name())));
    }
    let s_min = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let w = dyadic_floor(s_min.sqrt() * opts.resolution);
    let eval = |x: f64| f.eval(&[x]);
    let delta = alpha / 2.0;
    let mut lhs = Vec::with_capacity(pairs.len());
    let mut ratios = Vec::with_capacity(pairs.len());
    for &(s, t) in pairs {
        if s == t {
            lhs.push(0.0);
            ratios.push(0.0);
            continue;
        }
        let (_, ps) = semigroup_on_grid(eval, s, opts.lo, opts.hi, w)?;
        let (_, pt) = semigroup_on_grid(eval, t, opts.lo, opts.hi, w)?;
        let norm = ps.iter().zip(&pt).map(|(a, b)| (a - b).abs().powf(m) * w).sum::<f64>().powf(1.0 / m);
        lhs.push(norm);
        ratios.push(norm / ((t - s).powf(delta) * s.powf(alpha / 2.0 - delta)));
    }
    let positive: Vec<f64> = ratios.iter().copied().filter(|r| *r > 0.0).collect();
    let bounded = positive.is_empty() || {
        let max = positive.iter().copied().fold(0.0, f64::max);
        let min = positive.iter().copied().fold(f64::INFINITY, f64::min);
        max.is_finite() && max / min < opts.spread
    };
    Ok(TimeRegularity { pairs: pairs.to_vec(), lhs, ratios, bounded })
}

/// `|x|^k p_t(x) / (t^{k/2} p_{2t}(x))` at each point. Uniformly bounded in
/// `x` and `t`; the envelope needs the wider kernel `p_{2t}`.
pub fn moment_bound_ratios(k: u32, t: f64, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = points.first().map_or(1, |p| p.len());
    let narrow = GaussianKernel::isotropic(d, t)?;
    let wide = GaussianKernel::isotropic(d, 2.0 * t)?;
    points
        .iter()
        .map(|x| {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            Ok(r.powi(k as i32) * narrow.density(x)? / (t.powf(k as f64 / 2.0) * wide.density(x)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn heaviside(x: &[f64]) -> f64 {
        if x[0] >= 0.0 {
            1.0
        } else {
            0.0
        }
    }

    #[test]
    fn density_values() {
        let k1 = GaussianKernel::isotropic(1, 1.0).unwrap();
        assert_relative_eq!(k1.density(&[0.0]).unwrap(), 0.398_942_280_401_432_7, epsilon = 1e-15);
        let k2 = GaussianKernel::isotropic(2, 1.0).unwrap();
        assert_relative_eq!(k2.density(&[0.0, 0.0]).unwrap(), 1.0 / (2.0 * std::f64::consts::PI), epsilon = 1e-15);
        assert!(k1.density(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn density_scaling() {
        for t in [0.01, 0.3, 2.0] {
            let kt = GaussianKernel::isotropic(2, t).unwrap();
            let k1 = GaussianKernel::isotropic(2, 1.0).unwrap();
            let x = [0.3, -0.2];
            let y = [x[0] / t.sqrt(), x[1] / t.sqrt()];
            assert_relative_eq!(kt.density(&x).unwrap(), k1.density(&y).unwrap() / t, max_relative = 1e-13);
        }
    }

    #[test]
    fn construction_checks() {
        assert!(GaussianKernel::new(2, &[1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(GaussianKernel::new(2, &[1.0, 2.0, 2.0, 1.0]).is_err());
        assert!(GaussianKernel::new(2, &[1.0, 0.0, 0.0]).is_err());
        assert!(GaussianKernel::isotropic(1, 0.0).is_err());
        let k = GaussianKernel::new(2, &[2.0, 0.5, 0.5, 1.0]).unwrap();
        assert_relative_eq!(k.determinant(), 1.75, epsilon = 1e-14);
        let id = k.covariance() * k.inverse();
        assert!((id - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn unit_mass() {
        for k in [GaussianKernel::isotropic(1, 0.2).unwrap(), GaussianKernel::new(2, &[2.0, 0.5, 0.5, 1.0]).unwrap()] {
            assert!((k.mass(400).unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn semigroup_identities() {
        for t in [1e-3, 0.1, 1.0] {
            let one = semigroup_apply(|_| 1.0, t, &[0.37], DEFAULT_CELLS).unwrap();
            assert!((one.value - 1.0).abs() < 1e-8);
            let c = semigroup_apply(|_| -2.5, t, &[0.1, 0.2], 256).unwrap();
            assert!((c.value + 2.5).abs() < 1e-8);
            let half = semigroup_apply(heaviside, t, &[0.0], DEFAULT_CELLS).unwrap();
            assert!((half.value - 0.5).abs() < 1e-12);
            let shifted = semigroup_apply(heaviside, t, &[t.sqrt()], DEFAULT_CELLS).unwrap();
            assert!((shifted.value - normal_cdf(1.0)).abs() < 1e-6, "{}", shifted.value);
        }
        assert!((normal_cdf(1.0) - 0.841_345).abs() < 1e-6);
        assert!(semigroup_apply(heaviside, 0.0, &[0.0], 64).is_err());
    }

    #[test]
    fn smooth_integrand_against_closed_form() {
        // P_t cos(x) = exp(-t/2) cos(x)
        let v = semigroup_apply(|x| x[0].cos(), 0.3, &[0.7], 2048).unwrap();
        let err = (v.value - (-0.15f64).exp() * 0.7f64.cos()).abs();
        assert!(err < 1e-6 && err <= v.mesh_error, "{err} {}", v.mesh_error);
    }

    #[test]
    fn semigroup_composition() {
        let unit = |x: &[f64]| if (0.0..1.0).contains(&x[0]) { 1.0 } else { 0.0 };
        for f in [heaviside as fn(&[f64]) -> f64, unit] {
            let (s, t, x) = (0.05, 0.1, 0.3);
            let direct = semigroup_apply(f, s + t, &[x], 2048).unwrap().value;
            let inner = |y: &[f64]| semigroup_apply(f, s, y, 1024).unwrap().value;
            let nested = semigroup_apply(inner, t, &[x], 1024).unwrap().value;
            assert!((direct - nested).abs() < 1e-5, "{direct} vs {nested}");
        }
    }

    #[test]
    fn grid_matches_pointwise() {
        let f = |x: f64| if (0.0..1.0).contains(&x) { 1.0 } else { 0.0 };
        let w = 1.0 / 256.0;
        let (xs, vs) = semigroup_on_grid(f, 0.04, -0.5, 1.5, w).unwrap();
        for (x, v) in xs.iter().zip(&vs).step_by(37) {
            let exact = normal_cdf(*x / 0.2) - normal_cdf((*x - 1.0) / 0.2);
            assert!((v - exact).abs() < 1e-12, "{x}: {v} vs {exact}");
        }
        assert!(semigroup_on_grid(f, 0.04, 0.0, 1.0, 0.3).is_err());
    }

    #[test]
    fn monte_carlo_in_three_dimensions() {
        let v = semigroup_apply(|x| x[0] * x[0] + x[1] * x[2], 0.5, &[1.0, 0.0, 0.0], 64).unwrap();
        assert!((v.value - 1.5).abs() < 4.0 * v.mesh_error, "{v:?}");
    }

    #[test]
    fn time_regularity_sweep() {
        let f = ScalarField::custom(1, "heaviside", 1.0, heaviside);
        let pairs: Vec<(f64, f64)> = (2..=8)
            .map(|j| {
                let s = 0.5f64.powi(j);
                (s, 2.0 * s)
            })
            .collect();
        let r = check_semigroup_time_regularity(&f, 0.45, 2.0, &pairs, &Default::default()).unwrap();
        assert!(r.bounded, "{:?}", r.ratios);
        // closed form: ||Phi(x/sqrt(2s)) - Phi(x/sqrt(s))||_2 scales like s^{1/4}
        let q = r.lhs[0] / r.lhs[1];
        assert!((q - 2f64.powf(0.25)).abs() < 1e-3, "{q}");

        let c = ScalarField::custom(1, "c", 1.0, |_| 1.0);
        let rc = check_semigroup_time_regularity(&c, 0.45, 2.0, &pairs, &Default::default()).unwrap();
        assert!(rc.bounded && rc.lhs.iter().all(|v| v.abs() < 1e-12));

        let same = check_semigroup_time_regularity(&f, 0.45, 2.0, &[(0.25, 0.25)], &Default::default()).unwrap();
        assert_eq!(same.lhs, vec![0.0]);
        assert!(matches!(
            check_semigroup_time_regularity(&f, 0.5, 2.0, &pairs, &Default::default()),
            Err(Error::Divergent(_))
        ));
    }

    #[test]
    fn moment_bound_is_uniform() {
        let pts: Vec<Vec<f64>> = (0..400).map(|i| vec![-10.0 + 0.05 * i as f64]).collect();
        for k in [1, 2] {
            let sup = 2f64.sqrt() * (2.0 * k as f64).powf(k as f64 / 2.0) * (-(k as f64) / 2.0).exp();
            for t in [1e-3f64, 0.1, 1.0] {
                let scaled: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0] * t.sqrt()]).collect();
                let r = moment_bound_ratios(k, t, &scaled).unwrap();
                let max = r.iter().copied().fold(0.0, f64::max);
                assert!(max <= sup * (1.0 + 1e-12) && max > 0.9 * sup);
            }
        }
    }

    #[test]
    fn half_covariance_envelope_is_not_uniform() {
        // with p_{t/2} in the denominator the ratio grows like exp(x^2/2t)
        let t = 0.1;
        let narrow = GaussianKernel::isotropic(1, t).unwrap();
        let half = GaussianKernel::isotropic(1, t / 2.0).unwrap();
        let ratio = |x: f64| (x / t.sqrt()).powi(2) * narrow.density(&[x]).unwrap() / half.density(&[x]).unwrap();
        assert!(ratio(2.0) > 1e3 * ratio(0.5));
    }
}
