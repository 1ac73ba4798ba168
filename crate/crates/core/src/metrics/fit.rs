use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::strong::ErrorTable;
use crate::error::{Error, Result};

/// Least squares fit of `log2 error` against `log2 n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_sum: f64,
    /// 95% half width for the order, from per-batch refits. NaN with fewer
    /// than two usable batches.
    #[serde(deserialize_with = "crate::nan_serde::f64")]
    pub ci_halfwidth: f64,
    /// The `n` values that entered the fit.
    pub window: Vec<usize>,
}

impl RateFit {
    /// Convergence order, `-slope`.
    pub fn order(&self) -> f64 {
        -self.slope
    }
}

/// OLS on `(log2 n, log2 e)`: returns `(slope, intercept, residual_sum)`.
pub fn fit_power_law(ns: &[usize], errors: &[f64]) -> Result<(f64, f64, f64)> {
    if ns.len() != errors.len() {
        return Err(Error::DimensionMismatch { expected: ns.len(), got: errors.len() });
    }
    if ns.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 levels, got {}", ns.len())));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::Fit(format!("error {e} cannot enter a log-log fit")));
    }
    let xs: Vec<f64> = ns.iter().map(|n| (*n as f64).log2()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.log2()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_sum = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok((slope, intercept, residual_sum))
}

/// Fits the table over the levels with `lo <= n <= hi`, or all of them.
pub fn fit_rate(table: &ErrorTable, window: Option<(usize, usize)>) -> Result<RateFit> {
    let (lo, hi) = window.unwrap_or((0, usize::MAX));
    let idx: Vec<usize> = (0..table.levels.len()).filter(|&i| (lo..=hi).contains(&table.levels[i])).collect();
    let ns: Vec<usize> = idx.iter().map(|&i| table.levels[i]).collect();
    let errs: Vec<f64> = idx.iter().map(|&i| table.errors[i]).collect();
    let (slope, intercept, residual_sum) = fit_power_law(&ns, &errs)?;

    let batch_slopes: Vec<f64> = table
        .batch_errors
        .iter()
        .filter_map(|row| {
            let e: Vec<f64> = idx.iter().map(|&i| row[i]).collect();
            fit_power_law(&ns, &e).ok().map(|f| f.0)
        })
        .collect();
    let b = batch_slopes.len();
    let ci_halfwidth = if b >= 2 {
        let mean = batch_slopes.iter().sum::<f64>() / b as f64;
        let var = batch_slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (b - 1) as f64).map_err(|e| Error::Fit(e.to_string()))?.inverse_cdf(0.975);
        t * (var / b as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(RateFit { slope, intercept, residual_sum, ci_halfwidth, window: ns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(levels: Vec<usize>, f: impl Fn(f64) -> f64) -> ErrorTable {
        let errors: Vec<f64> = levels.iter().map(|&n| f(n as f64)).collect();
        ErrorTable { batch_errors: vec![errors.clone(); 8], levels, p: 2.0, errors, path_count: 8 }
    }

    #[test]
    fn exact_power_laws() {
        let levels = vec![16, 32, 64, 128, 256, 512, 1024];
        for (r, c) in [(0.5, 3.0), (0.75, 0.2), (0.0, 1.7)] {
            let f = fit_rate(&table(levels.clone(), |n| c * n.powf(-r)), None).unwrap();
            assert!((f.order() - r).abs() < 1e-10, "{r}: {}", f.order());
            assert!(f.residual_sum < 1e-20);
            assert!(f.ci_halfwidth.abs() < 1e-10);
        }
    }

    #[test]
    fn window_selects_levels() {
        let t = table(vec![2, 4, 8, 16, 32], |n| if n < 8.0 { 1.0 } else { 1.0 / n });
        let f = fit_rate(&t, Some((8, 32))).unwrap();
        assert_eq!(f.window, vec![8, 16, 32]);
        assert!((f.order() - 1.0).abs() < 1e-12);
        assert!(fit_rate(&t, Some((16, 32))).is_err());
    }

    #[test]
    fn zero_error_rejected() {
        let t = table(vec![2, 4, 8], |n| if n == 4.0 { 0.0 } else { 1.0 });
        assert!(matches!(fit_rate(&t, None), Err(Error::Fit(_))));
    }

    #[test]
    fn ci_from_noisy_batches() {
        let mut t = table(vec![16, 64, 256], |n| n.powf(-0.5));
        for (b, row) in t.batch_errors.iter_mut().enumerate() {
            let wobble = 1.0 + 0.05 * (b as f64 - 3.5);
            row[2] *= wobble;
        }
        let f = fit_rate(&t, None).unwrap();
        assert!(f.ci_halfwidth > 0.0 && f.ci_halfwidth < 0.1);
    }

    proptest! {
        #[test]
        fn slope_invariant_under_rescaling(
            errs in proptest::collection::vec(1e-6f64..10.0, 3..8),
            c in 1e-3f64..1e3,
        ) {
            let levels: Vec<usize> = (0..errs.len()).map(|i| 1usize << (i + 2)).collect();
            let a = fit_power_law(&levels, &errs).unwrap();
            let scaled: Vec<f64> = errs.iter().map(|e| e * c).collect();
            let b = fit_power_law(&levels, &scaled).unwrap();
            prop_assert!((a.0 - b.0).abs() < 1e-12);
        }
    }
}
