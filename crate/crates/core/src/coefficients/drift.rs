use std::fmt;
use std::sync::Arc;

use super::{param_f64, param_vec, spot_points, Params, RegularityClass};
use crate::error::{invalid, Error, Result};

/// Catalogue keys accepted by [`builtin_drift`].
pub const DRIFT_KEYS: [&str; 8] = [
    "zero",
    "constant",
    "linear_ou",
    "hoelder_cusp",
    "indicator_interval",
    "indicator_lipschitz_domain",
    "oscillatory_measurable",
    "custom",
];

type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `weight * 1_{[lo, hi)}` on the real line. `hi` may be `+inf`, `lo` may be `-inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedInterval {
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
}

#[derive(Clone)]
enum DriftKind {
    Zero,
    Constant(Vec<f64>),
    LinearOu { rate: f64 },
    HoelderCusp { exponent: f64, height: f64 },
    Intervals(Vec<WeightedInterval>),
    Ball { center: Vec<f64>, radius: f64, weight: f64 },
    Oscillatory,
    Custom(VectorFn),
}

/// A drift `b: R^d -> R^d` with declared regularity.
///
/// Discontinuous builtins are evaluated with a fixed pointwise
/// representative: right-continuous in one dimension (`1_{[lo, hi)}`), and
/// boundary-inclusive for indicators of domains.
#[derive(Clone)]
pub struct DriftSpec {
    name: String,
    dim: usize,
    kind: DriftKind,
    regularity: RegularityClass,
    sup_norm_bound: f64,
    seminorm_bound: Option<f64>,
    oracle_only: bool,
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("regularity", &self.regularity)
            .field("sup_norm_bound", &self.sup_norm_bound)
            .field("seminorm_bound", &self.seminorm_bound)
            .field("oracle_only", &self.oracle_only)
            .finish()
    }
}

impl DriftSpec {
    /// User-supplied drift. `sup_norm_bound` may be infinite, which marks the
    /// drift as outside the bounded-drift theory.
    pub fn custom<F>(
        dim: usize,
        name: impl Into<String>,
        regularity: RegularityClass,
        sup_norm_bound: f64,
        seminorm_bound: Option<f64>,
        evaluator: F,
    ) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            kind: DriftKind::Custom(Arc::new(evaluator)),
            regularity,
            sup_norm_bound,
            seminorm_bound,
            oracle_only: !sup_norm_bound.is_finite(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn regularity(&self) -> RegularityClass {
        self.regularity
    }

    /// `‖b‖_B`, infinite for unbounded drifts.
    pub fn sup_norm_bound(&self) -> f64 {
        self.sup_norm_bound
    }

    /// Declared `[b]_{W^alpha_m}` for the alpha, m of the regularity class.
    pub fn seminorm_bound(&self) -> Option<f64> {
        self.seminorm_bound
    }

    pub fn is_bounded(&self) -> bool {
        self.sup_norm_bound.is_finite()
    }

    /// Entries that violate the bounded-drift assumptions and exist only to
    /// validate the integrator against closed forms.
    pub fn is_oracle_only(&self) -> bool {
        self.oracle_only
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, DriftKind::Zero)
    }

    /// `Some(rate)` for `b(x) = -rate x`.
    pub fn linear_rate(&self) -> Option<f64> {
        match self.kind {
            DriftKind::LinearOu { rate } => Some(rate),
            DriftKind::Zero => Some(0.0),
            _ => None,
        }
    }

    /// `Some(c)` for constant drifts (including zero).
    pub fn constant_value(&self) -> Option<Vec<f64>> {
        match &self.kind {
            DriftKind::Zero => Some(vec![0.0; self.dim]),
            DriftKind::Constant(v) => Some(v.clone()),
            _ => None,
        }
    }

    /// Writes `b(x)` into `out`.
    #[inline]
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            DriftKind::Zero => out.fill(0.0),
            DriftKind::Constant(v) => out.copy_from_slice(v),
            DriftKind::LinearOu { rate } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -rate * xi;
                }
            }
            DriftKind::Custom(f) => f(x, out),
            _ => out.fill(self.shared_scalar(x)),
        }
    }

    /// Component `i` of `b(x)`.
    #[inline]
    pub fn component(&self, x: &[f64], i: usize) -> f64 {
        match &self.kind {
            DriftKind::Zero => 0.0,
            DriftKind::Constant(v) => v[i],
            DriftKind::LinearOu { rate } => -rate * x[i],
            DriftKind::Custom(f) => {
                let mut buf = vec![0.0; self.dim];
                f(x, &mut buf);
                buf[i]
            }
            _ => self.shared_scalar(x),
        }
    }

    /// Builtins whose components all coincide.
    #[inline]
    fn shared_scalar(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DriftKind::HoelderCusp { exponent, height } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r >= 1.0 {
                    0.0
                } else {
                    height * (1.0 - r.powf(*exponent))
                }
            }
            DriftKind::Intervals(list) => interval_sum(list, x[0]),
            DriftKind::Ball { center, radius, weight } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                if r2 <= radius * radius {
                    *weight
                } else {
                    0.0
                }
            }
            DriftKind::Oscillatory => {
                let v = x[0];
                if v == 0.0 || (1.0 / v).sin() > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            _ => unreachable!("not a shared-scalar drift"),
        }
    }

    /// Checks `|b(x)| <= ‖b‖_B` on a deterministic point cloud.
    pub fn spot_check_sup_norm(&self, count: usize, seed: u64) -> Result<()> {
        let mut out = vec![0.0; self.dim];
        for x in spot_points(self.dim, count, 3.0, seed) {
            self.eval(&x, &mut out);
            let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > self.sup_norm_bound * (1.0 + 1e-12) {
                return Err(invalid!(
                    "drift `{}` has |b({x:?})| = {norm} above declared bound {}",
                    self.name,
                    self.sup_norm_bound
                ));
            }
        }
        Ok(())
    }
}

#[inline]
fn interval_sum(list: &[WeightedInterval], x: f64) -> f64 {
    list.iter().filter(|iv| iv.lo <= x && x < iv.hi).map(|iv| iv.weight).sum()
}

/// Builds a catalogue drift in dimension `dim`.
pub fn builtin_drift(name: &str, dim: usize, params: &Params) -> Result<DriftSpec> {
    if dim == 0 {
        return Err(invalid!("dimension must be at least 1"));
    }
    let need_scalar_line = |key: &str| -> Result<()> {
        if dim != 1 {
            return Err(invalid!("drift `{key}` is defined for d = 1 only, got d = {dim}"));
        }
        Ok(())
    };
    let spec = |kind, regularity, sup: f64, seminorm| DriftSpec {
        name: name.to_string(),
        dim,
        kind,
        regularity,
        sup_norm_bound: sup,
        seminorm_bound: seminorm,
        oracle_only: !sup.is_finite(),
    };
    let sqrt_d = (dim as f64).sqrt();
    match name {
        "zero" => Ok(spec(DriftKind::Zero, RegularityClass::Smooth, 0.0, Some(0.0))),
        "constant" => {
            let value = match param_vec(params, "value")? {
                None => vec![1.0; dim],
                Some(v) if v.len() == 1 => vec![v[0]; dim],
                Some(v) if v.len() == dim => v,
                Some(v) => return Err(Error::DimensionMismatch { expected: dim, got: v.len() }),
            };
            let sup = value.iter().map(|v| v * v).sum::<f64>().sqrt();
            Ok(spec(DriftKind::Constant(value), RegularityClass::Smooth, sup, Some(0.0)))
        }
        "linear_ou" => {
            let rate = param_f64(params, "rate", 1.0)?;
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(invalid!("linear_ou rate must be positive, got {rate}"));
            }
            Ok(spec(DriftKind::LinearOu { rate }, RegularityClass::Smooth, f64::INFINITY, None))
        }
        "hoelder_cusp" => {
            let exponent = param_f64(params, "exponent", 0.5)?;
            let height = param_f64(params, "height", 1.0)?;
            if !(exponent > 0.0 && exponent < 1.0) {
                return Err(invalid!("hoelder_cusp exponent must lie in (0, 1), got {exponent}"));
            }
            if !(height >= 0.0 && height.is_finite()) {
                return Err(invalid!("hoelder_cusp height must be nonnegative, got {height}"));
            }
            Ok(spec(
                DriftKind::HoelderCusp { exponent, height },
                RegularityClass::Hoelder { alpha: exponent },
                height * sqrt_d,
                None,
            ))
        }
        "indicator_interval" => {
            need_scalar_line(name)?;
            let (alpha, m) = sobolev_index(params)?;
            let intervals = parse_intervals(params)?;
            let seminorm = piecewise_constant_seminorm(&intervals, alpha, m);
            let sup = interval_sup(&intervals);
            Ok(spec(DriftKind::Intervals(intervals), RegularityClass::Sobolev { alpha, m }, sup, Some(seminorm)))
        }
        "indicator_lipschitz_domain" => {
            let (alpha, m) = sobolev_index(params)?;
            let center = match param_vec(params, "center")? {
                None => vec![0.0; dim],
                Some(v) if v.len() == dim => v,
                Some(v) => return Err(Error::DimensionMismatch { expected: dim, got: v.len() }),
            };
            let radius = param_f64(params, "radius", 1.0)?;
            let weight = param_f64(params, "weight", 1.0)?;
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(invalid!("domain radius must be positive, got {radius}"));
            }
            let seminorm = (dim == 1).then(|| {
                let iv = WeightedInterval { lo: center[0] - radius, hi: center[0] + radius, weight };
                piecewise_constant_seminorm(&[iv], alpha, m)
            });
            Ok(spec(
                DriftKind::Ball { center, radius, weight },
                RegularityClass::Sobolev { alpha, m },
                weight.abs() * sqrt_d,
                seminorm,
            ))
        }
        "oscillatory_measurable" => {
            need_scalar_line(name)?;
            Ok(spec(DriftKind::Oscillatory, RegularityClass::BoundedMeasurable, 1.0, None))
        }
        "custom" => Err(invalid!("drift `custom` needs an in-process evaluator; use DriftSpec::custom")),
        other => Err(Error::UnknownKey(other.to_string())),
    }
}

fn sobolev_index(params: &Params) -> Result<(f64, f64)> {
    let alpha = param_f64(params, "alpha", 0.25)?;
    let m = param_f64(params, "m", 2.0)?;
    if !(alpha > 0.0 && alpha < 1.0) || m < 1.0 {
        return Err(invalid!("need alpha in (0, 1) and m >= 1, got alpha={alpha}, m={m}"));
    }
    if alpha * m >= 1.0 {
        return Err(invalid!("indicators lie in W^alpha_m only for alpha*m < 1, got {}", alpha * m));
    }
    Ok((alpha, m))
}

fn parse_intervals(params: &Params) -> Result<Vec<WeightedInterval>> {
    let Some(raw) = params.get("intervals") else {
        return Ok(vec![WeightedInterval { lo: 0.0, hi: 1.0, weight: 1.0 }]);
    };
    let rows = raw.as_array().ok_or_else(|| invalid!("`intervals` must be an array of [lo, hi, weight]"))?;
    let num = |v: &toml::Value| -> Result<f64> {
        match v {
            toml::Value::Float(x) => Ok(*x),
            toml::Value::Integer(x) => Ok(*x as f64),
            toml::Value::String(s) if s == "inf" || s == "+inf" => Ok(f64::INFINITY),
            toml::Value::String(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            other => Err(invalid!("bad interval entry {other}")),
        }
    };
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let items = row
            .as_array()
            .filter(|a| a.len() == 3)
            .ok_or_else(|| invalid!("each interval must be [lo, hi, weight], got {row}"))?;
        let iv = WeightedInterval { lo: num(&items[0])?, hi: num(&items[1])?, weight: num(&items[2])? };
        if !(iv.lo < iv.hi) || !iv.weight.is_finite() {
            return Err(invalid!("degenerate interval {iv:?}"));
        }
        out.push(iv);
    }
    if out.is_empty() {
        return Err(invalid!("`intervals` must not be empty"));
    }
    Ok(out)
}

/// Breakpoints and cell values of a step function: cell `k` is
/// `[breaks[k-1], breaks[k])` with `breaks[-1] = -inf`, `breaks[K] = +inf`.
fn step_cells(intervals: &[WeightedInterval]) -> (Vec<f64>, Vec<f64>) {
    let mut breaks: Vec<f64> = intervals.iter().flat_map(|iv| [iv.lo, iv.hi]).filter(|v| v.is_finite()).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut values = Vec::with_capacity(breaks.len() + 1);
    for k in 0..=breaks.len() {
        let probe = match (k.checked_sub(1).map(|j| breaks[j]), breaks.get(k)) {
            (None, Some(&b)) => b - 1.0,
            (Some(a), None) => a + 1.0,
            (Some(a), Some(&b)) => 0.5 * (a + b),
            (None, None) => 0.0,
        };
        values.push(interval_sum(intervals, probe));
    }
    (breaks, values)
}

fn interval_sup(intervals: &[WeightedInterval]) -> f64 {
    step_cells(intervals).1.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Closed-form `[f]_{W^alpha_m(R)}` of a step function `f = Σ w 1_{[lo,hi)}`.
///
/// Sums `2 |v_a - v_b|^m ∫_{cell a} ∫_{cell b} |x-y|^{-1-αm}` over pairs of
/// cells, each pair integral being elementary. Returns `+inf` when `f` has
/// different values at `-inf` and `+inf` or when `alpha * m >= 1` and `f`
/// jumps.
pub fn piecewise_constant_seminorm(intervals: &[WeightedInterval], alpha: f64, m: f64) -> f64 {
    let s = alpha * m;
    let (breaks, values) = step_cells(intervals);
    let bounds = |k: usize| -> (f64, f64) {
        let lo = if k == 0 { f64::NEG_INFINITY } else { breaks[k - 1] };
        let hi = breaks.get(k).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    };
    let g = |u: f64| u.powf(1.0 - s);
    let mut total = 0.0;
    for a in 0..values.len() {
        for b in a + 1..values.len() {
            let jump = (values[a] - values[b]).abs();
            if jump == 0.0 {
                continue;
            }
            if s >= 1.0 {
                return f64::INFINITY;
            }
            let (p, q) = bounds(a);
            let (r, t) = bounds(b);
            let pair = match (p.is_finite(), t.is_finite()) {
                (false, false) => f64::INFINITY,
                (true, true) => g(r - p) - g(r - q) - g(t - p) + g(t - q),
                (true, false) => g(r - p) - g(r - q),
                (false, true) => g(t - q) - g(r - q),
            } / (s * (1.0 - s));
            total += 2.0 * jump.powf(m) * pair;
        }
    }
    total.powf(1.0 / m)
}

/// A real-valued function on `R^d` whose sup norm is known.
#[derive(Clone)]
pub struct ScalarField {
    name: String,
    dim: usize,
    kind: FieldKind,
    sup_norm: f64,
}

#[derive(Clone)]
enum FieldKind {
    Drift(DriftSpec, usize),
    Coordinate(usize),
    Custom(ScalarFn),
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("sup_norm", &self.sup_norm)
            .finish()
    }
}

impl ScalarField {
    /// Component `component` of a drift.
    pub fn from_drift(drift: &DriftSpec, component: usize) -> Result<Self> {
        if component >= drift.dim() {
            return Err(Error::OutOfRange { index: component, max: drift.dim() - 1 });
        }
        Ok(Self {
            name: format!("{}[{component}]", drift.name()),
            dim: drift.dim(),
            sup_norm: drift.sup_norm_bound(),
            kind: FieldKind::Drift(drift.clone(), component),
        })
    }

    /// `f(x) = x_i`. Unbounded; only admitted where oracle-only
    /// integrands are explicitly allowed.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        Self { name: format!("x[{i}]"), dim, kind: FieldKind::Coordinate(i), sup_norm: f64::INFINITY }
    }

    pub fn custom<F>(dim: usize, name: impl Into<String>, sup_norm: f64, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { name: name.into(), dim, kind: FieldKind::Custom(Arc::new(f)), sup_norm }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn is_bounded(&self) -> bool {
        self.sup_norm.is_finite()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            FieldKind::Drift(d, i) => d.component(x, *i),
            FieldKind::Coordinate(i) => x[*i],
            FieldKind::Custom(f) => f(x),
        }
    }
}
