use std::fmt;
use std::sync::Arc;

use super::{param_f64, spot_points, Params};
use crate::error::{invalid, Error, Result};

/// Catalogue keys accepted by [`builtin_diffusion`].
pub const DIFFUSION_KEYS: [&str; 4] = ["identity", "scaled_identity", "sine_elliptic", "gbm_test"];

type MatrixFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
enum DiffusionKind {
    Identity,
    ScaledIdentity(f64),
    SineElliptic(f64),
    Gbm,
    Custom(MatrixFn),
}

/// How a frozen `sigma(x)` acts on a Brownian increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum NoiseShape {
    Identity,
    /// `d` diagonal entries in the buffer.
    Diagonal,
    /// `d * d` row-major entries in the buffer.
    Full,
}

/// A diffusion coefficient `sigma: R^d -> R^{d x d}`.
#[derive(Clone)]
pub struct DiffusionSpec {
    name: String,
    dim: usize,
    kind: DiffusionKind,
    ellipticity_lambda: f64,
    c2_bound: f64,
    is_additive: bool,
    oracle_only: bool,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("ellipticity_lambda", &self.ellipticity_lambda)
            .field("c2_bound", &self.c2_bound)
            .field("is_additive", &self.is_additive)
            .field("oracle_only", &self.oracle_only)
            .finish()
    }
}

impl DiffusionSpec {
    /// User-supplied `sigma`, written row-major into a `d * d` buffer.
    /// A nonpositive `ellipticity_lambda` marks the coefficient oracle-only.
    pub fn custom<F>(dim: usize, name: impl Into<String>, ellipticity_lambda: f64, c2_bound: f64, evaluator: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            kind: DiffusionKind::Custom(Arc::new(evaluator)),
            ellipticity_lambda,
            c2_bound,
            is_additive: false,
            oracle_only: ellipticity_lambda <= 0.0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ellipticity_lambda(&self) -> f64 {
        self.ellipticity_lambda
    }

    pub fn c2_bound(&self) -> f64 {
        self.c2_bound
    }

    /// `sigma == I`.
    pub fn is_additive(&self) -> bool {
        self.is_additive
    }

    pub fn is_oracle_only(&self) -> bool {
        self.oracle_only
    }

    /// `Some(s)` when `sigma == s I`.
    pub fn constant_scale(&self) -> Option<f64> {
        match self.kind {
            DiffusionKind::Identity => Some(1.0),
            DiffusionKind::ScaledIdentity(s) => Some(s),
            _ => None,
        }
    }

    /// `sigma(x) = diag(x)`.
    pub fn is_geometric(&self) -> bool {
        matches!(self.kind, DiffusionKind::Gbm)
    }

    /// Full matrix `sigma(x)`, row-major.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        if let DiffusionKind::Custom(f) = &self.kind {
            f(x, out);
            return;
        }
        out.fill(0.0);
        let mut diag = vec![0.0; d];
        self.freeze(x, &mut diag);
        for i in 0..d {
            out[i * d + i] = if self.is_additive { 1.0 } else { diag[i] };
        }
    }

    /// Fills `buf` with the entries needed to apply `sigma(x)` and reports
    /// their layout. `buf` must hold `d * d` values.
    #[inline]
    pub(crate) fn freeze(&self, x: &[f64], buf: &mut [f64]) -> NoiseShape {
        match &self.kind {
            DiffusionKind::Identity => NoiseShape::Identity,
            DiffusionKind::ScaledIdentity(s) => {
                buf[..self.dim].fill(*s);
                NoiseShape::Diagonal
            }
            DiffusionKind::SineElliptic(c) => {
                for (b, xi) in buf.iter_mut().zip(x) {
                    *b = 1.0 + c * xi.sin();
                }
                NoiseShape::Diagonal
            }
            DiffusionKind::Gbm => {
                buf[..self.dim].copy_from_slice(x);
                NoiseShape::Diagonal
            }
            DiffusionKind::Custom(f) => {
                f(x, buf);
                NoiseShape::Full
            }
        }
    }

    /// Checks `y^T sigma sigma^T y >= lambda^2 |y|^2` on a deterministic
    /// cloud of `(x, y)` pairs.
    pub fn spot_check_ellipticity(&self, count: usize, seed: u64) -> Result<()> {
        let d = self.dim;
        let xs = spot_points(d, count, 5.0, seed);
        let ys = spot_points(d, count, 1.0, seed ^ 0xA5A5);
        let mut sigma = vec![0.0; d * d];
        let lam2 = self.ellipticity_lambda * self.ellipticity_lambda;
        for (x, y) in xs.iter().zip(&ys) {
            self.eval(x, &mut sigma);
            // |sigma^T y|^2
            let q: f64 = (0..d).map(|j| (0..d).map(|i| sigma[i * d + j] * y[i]).sum::<f64>().powi(2)).sum();
            let y2: f64 = y.iter().map(|v| v * v).sum();
            if q < lam2 * y2 * (1.0 - 1e-12) {
                return Err(invalid!("diffusion `{}` fails ellipticity at x={x:?}: {q} < {} |y|^2", self.name, lam2));
            }
        }
        Ok(())
    }
}

/// Builds a catalogue diffusion in dimension `dim`.
pub fn builtin_diffusion(name: &str, dim: usize, params: &Params) -> Result<DiffusionSpec> {
    if dim == 0 {
        return Err(invalid!("dimension must be at least 1"));
    }
    let spec = |kind, lambda: f64, c2: f64, additive: bool, oracle_only: bool| DiffusionSpec {
        name: name.to_string(),
        dim,
        kind,
        ellipticity_lambda: lambda,
        c2_bound: c2,
        is_additive: additive,
        oracle_only,
    };
    match name {
        "identity" => Ok(spec(DiffusionKind::Identity, 1.0, 1.0, true, false)),
        "scaled_identity" => {
            let s = param_f64(params, "scale", 1.0)?;
            if !s.is_finite() {
                return Err(invalid!("scale must be finite"));
            }
            if s == 1.0 {
                return Ok(spec(DiffusionKind::Identity, 1.0, 1.0, true, false));
            }
            // scale 0 is the deterministic oracle
            Ok(spec(DiffusionKind::ScaledIdentity(s), s.abs(), s.abs(), false, s == 0.0))
        }
        "sine_elliptic" => {
            let c = param_f64(params, "c", 0.5)?;
            if !(c.abs() < 1.0) {
                return Err(invalid!("sine_elliptic needs |c| < 1, got {c}"));
            }
            Ok(spec(DiffusionKind::SineElliptic(c), 1.0 - c.abs(), 1.0 + 3.0 * c.abs(), false, false))
        }
        "gbm_test" => Ok(spec(DiffusionKind::Gbm, 0.0, f64::INFINITY, false, true)),
        other => Err(Error::UnknownKey(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(src: &str) -> Params {
        src.parse::<toml::Table>().unwrap()
    }

    #[test]
    fn identity_in_three_dimensions() {
        let s = builtin_diffusion("identity", 3, &Params::new()).unwrap();
        assert!(s.is_additive());
        assert_eq!(s.ellipticity_lambda(), 1.0);
        let mut m = [7.0; 9];
        s.eval(&[0.3, -8.0, 1e6], &mut m);
        assert_eq!(m, [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn sine_elliptic_lambda() {
        let s = builtin_diffusion("sine_elliptic", 1, &params("c = 0.5")).unwrap();
        assert_eq!(s.ellipticity_lambda(), 0.5);
        assert!(!s.is_additive());
        s.spot_check_ellipticity(10_000, 2).unwrap();
        assert!(builtin_diffusion("sine_elliptic", 1, &params("c = 1.0")).is_err());
        assert!(builtin_diffusion("sine_elliptic", 1, &params("c = -1.2")).is_err());
    }

    #[test]
    fn gbm_matrix() {
        let s = builtin_diffusion("gbm_test", 1, &Params::new()).unwrap();
        let mut m = [0.0];
        s.eval(&[2.0], &mut m);
        assert_eq!(m, [2.0]);
        assert!(s.is_oracle_only());
        assert!(s.spot_check_ellipticity(100, 1).is_ok()); // lambda = 0 is vacuous
    }

    #[test]
    fn scaled_identity_variants() {
        let one = builtin_diffusion("scaled_identity", 2, &Params::new()).unwrap();
        assert!(one.is_additive());
        let zero = builtin_diffusion("scaled_identity", 2, &params("scale = 0")).unwrap();
        assert!(zero.is_oracle_only());
        assert_eq!(zero.constant_scale(), Some(0.0));
        let half = builtin_diffusion("scaled_identity", 2, &params("scale = 0.5")).unwrap();
        assert!(!half.is_additive());
        half.spot_check_ellipticity(100, 4).unwrap();
    }

    #[test]
    fn ellipticity_violation_detected() {
        let bad = DiffusionSpec::custom(1, "bad", 1.0, 1.0, |x, out| out[0] = x[0].sin());
        assert!(bad.spot_check_ellipticity(1000, 0).is_err());
        assert!(matches!(builtin_diffusion("nope", 1, &Params::new()), Err(Error::UnknownKey(_))));
    }
}
