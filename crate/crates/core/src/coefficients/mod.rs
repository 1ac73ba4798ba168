//! Drift and diffusion coefficients with regularity metadata.
//!
//! Builtins are addressed by catalogue key plus a parameter table, which is
//! the same table a harness config carries under `[drift]` / `[diffusion]`.

mod diffusion;
mod drift;
mod seminorm;

pub(crate) use diffusion::NoiseShape;
pub use diffusion::{builtin_diffusion, DiffusionSpec, DIFFUSION_KEYS};
pub use drift::{builtin_drift, piecewise_constant_seminorm, DriftSpec, ScalarField, WeightedInterval, DRIFT_KEYS};
pub use seminorm::{check_interpolation_embedding, estimate_sobolev_seminorm, SeminormEstimate, SeminormOptions};

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

/// Parameters of a catalogue entry.
pub type Params = toml::Table;

/// Declared regularity of a drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum RegularityClass {
    Smooth,
    Lipschitz,
    Hoelder { alpha: f64 },
    Sobolev { alpha: f64, m: f64 },
    BoundedMeasurable,
}

impl RegularityClass {
    /// Classes admitted by the additive-noise Sobolev setting.
    pub fn admits_additive_theory(&self) -> bool {
        !matches!(self, RegularityClass::BoundedMeasurable)
    }

    /// Smoothness index used to predict the additive-noise rate `(1+alpha)/2`.
    pub fn alpha(&self) -> Option<f64> {
        match *self {
            RegularityClass::Smooth | RegularityClass::Lipschitz => Some(1.0),
            RegularityClass::Hoelder { alpha } | RegularityClass::Sobolev { alpha, .. } => Some(alpha),
            RegularityClass::BoundedMeasurable => None,
        }
    }
}

pub(crate) fn param_f64(params: &Params, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(toml::Value::Float(v)) => Ok(*v),
        Some(toml::Value::Integer(v)) => Ok(*v as f64),
        Some(other) => Err(invalid!("parameter `{key}` must be a number, got {other}")),
    }
}

pub(crate) fn param_vec(params: &Params, key: &str) -> Result<Option<Vec<f64>>> {
    let Some(value) = params.get(key) else { return Ok(None) };
    let as_num = |v: &toml::Value| match v {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(x) => Ok(*x as f64),
        other => Err(invalid!("parameter `{key}` must hold numbers, got {other}")),
    };
    match value {
        toml::Value::Array(items) => items.iter().map(as_num).collect::<Result<_>>().map(Some),
        scalar => Ok(Some(vec![as_num(scalar)?])),
    }
}

/// Deterministic SplitMix64 point cloud in `[-radius, radius]^dim` for spot checks.
pub(crate) fn spot_points(dim: usize, count: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut state = seed;
    let mut next = move || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64
    };
    (0..count).map(|_| (0..dim).map(|_| radius * (2.0 * next() - 1.0)).collect()).collect()
}
