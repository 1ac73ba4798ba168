use serde::{Deserialize, Serialize};

use super::fit::{fit_rate, RateFit};
use super::strong::ErrorTable;
use super::{check_levels, SamplingPlan};
use crate::coefficients::ScalarField;
use crate::error::{invalid, Error, Result};
use crate::paths::{BrownianLattice, GridMap};
use crate::scheme::{visit_dense, SdeSpec};

/// The process `U` along which the integrand is evaluated.
#[derive(Debug, Clone)]
pub enum QuadratureProcess {
    /// `U = x0 + W`.
    Brownian { x0: Vec<f64> },
    /// `U = X^n`, the dense EM trajectory at the level being measured.
    Em(SdeSpec),
}

impl QuadratureProcess {
    pub fn dim(&self) -> usize {
        match self {
            QuadratureProcess::Brownian { x0 } => x0.len(),
            QuadratureProcess::Em(spec) => spec.dim(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureMode {
    /// `sup_t |I_t|`.
    Sup,
    /// The signed value `I_1`.
    Terminal,
}

/// Integrand, optional weight and process for the functional
/// `I_t = int_0^t g(U_r) (f(U_r) - f(U_{kappa_n(r)})) dr`.
#[derive(Debug, Clone)]
pub struct QuadratureSpec {
    f: ScalarField,
    weight: Option<ScalarField>,
    process: QuadratureProcess,
    mode: QuadratureMode,
}

impl QuadratureSpec {
    /// Rejects integrands without a finite sup norm.
    pub fn new(f: ScalarField, process: QuadratureProcess) -> Result<Self> {
        if !f.is_bounded() {
            return Err(Error::Assumption(format!("integrand {} is not bounded", f.name())));
        }
        Self::oracle(f, process)
    }

    /// Like `new` but admits unbounded integrands such as `f(x) = x`, for
    /// closed-form comparisons.
    pub fn oracle(f: ScalarField, process: QuadratureProcess) -> Result<Self> {
        if f.dim() != process.dim() {
            return Err(Error::DimensionMismatch { expected: process.dim(), got: f.dim() });
        }
        Ok(Self { f, weight: None, process, mode: QuadratureMode::Sup })
    }

    pub fn with_weight(mut self, g: ScalarField) -> Result<Self> {
        if !g.is_bounded() {
            return Err(Error::Assumption(format!("weight {} is not bounded", g.name())));
        }
        if g.dim() != self.f.dim() {
            return Err(Error::DimensionMismatch { expected: self.f.dim(), got: g.dim() });
        }
        self.weight = Some(g);
        Ok(self)
    }

    pub fn with_mode(mut self, mode: QuadratureMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn integrand(&self) -> &ScalarField {
        &self.f
    }

    pub fn weight(&self) -> Option<&ScalarField> {
        self.weight.as_ref()
    }

    pub fn process(&self) -> &QuadratureProcess {
        &self.process
    }

    pub fn mode(&self) -> QuadratureMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.process.dim()
    }
}

/// Running left-point sum for one grid.
struct Running {
    /// `stride - 1`; strides are powers of two.
    mask: usize,
    track_sup: bool,
    anchor: f64,
    sum: f64,
    sup: f64,
}

impl Running {
    fn new(stride: usize, mode: QuadratureMode) -> Self {
        Self { mask: stride - 1, track_sup: mode == QuadratureMode::Sup, anchor: 0.0, sum: 0.0, sup: 0.0 }
    }

    /// Adds the cell `[r h, (r+1) h)` given `g(U_r)`, `f(U_r)`.
    #[inline]
    fn step(&mut self, r: usize, gu: f64, fu: f64, h: f64) {
        if r & self.mask == 0 {
            self.anchor = fu;
        }
        self.sum += gu * (fu - self.anchor) * h;
        if self.track_sup {
            self.sup = self.sup.max(self.sum.abs());
        }
    }

    fn value(&self, mode: QuadratureMode) -> f64 {
        match mode {
            QuadratureMode::Sup => self.sup,
            QuadratureMode::Terminal => self.sum,
        }
    }
}

/// The functional on one lattice, for every `n` in `levels`. Terminal
/// values are signed; sup values are nonnegative.
pub fn path_quadrature(q: &QuadratureSpec, lattice: &BrownianLattice, levels: &[usize]) -> Result<Vec<f64>> {
    check_levels(levels)?;
    let d = q.dim();
    if lattice.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: lattice.dim() });
    }
    let grids: Vec<GridMap> = levels.iter().map(|&n| GridMap::new(n, lattice.level())).collect::<Result<_>>()?;
    let h = lattice.step_size();
    let steps = lattice.steps();
    let weight = |u: &[f64]| q.weight.as_ref().map_or(1.0, |g| g.eval(u));
    match &q.process {
        QuadratureProcess::Brownian { x0 } if q.mode == QuadratureMode::Terminal && q.weight.is_none() => {
            // I_1 = h (sum_r f(U_r) - sum_cells stride f(U_anchor))
            let finest = grids.iter().map(|g| g.stride()).min().unwrap_or(1);
            let inc = lattice.increments();
            let mut u = x0.clone();
            let mut total = 0.0;
            let mut anchored = vec![0.0; grids.len()];
            for r in 0..steps {
                let fu = q.f.eval(&u);
                total += fu;
                if r & (finest - 1) == 0 {
                    for (a, g) in anchored.iter_mut().zip(&grids) {
                        if r & (g.stride() - 1) == 0 {
                            *a += fu * g.stride() as f64;
                        }
                    }
                }
                for (ui, w) in u.iter_mut().zip(&inc[r * d..(r + 1) * d]) {
                    *ui += *w;
                }
            }
            Ok(anchored.iter().map(|a| (total - a) * h).collect())
        }
        QuadratureProcess::Brownian { x0 } => {
            let mut runs: Vec<Running> = grids.iter().map(|g| Running::new(g.stride(), q.mode)).collect();
            let inc = lattice.increments();
            let mut u = x0.clone();
            for r in 0..steps {
                let fu = q.f.eval(&u);
                let gu = weight(&u);
                for run in runs.iter_mut() {
                    run.step(r, gu, fu, h);
                }
                for (ui, w) in u.iter_mut().zip(&inc[r * d..(r + 1) * d]) {
                    *ui += *w;
                }
            }
            Ok(runs.iter().map(|r| r.value(q.mode)).collect())
        }
        QuadratureProcess::Em(spec) => grids
            .iter()
            .map(|grid| {
                let mut run = Running::new(grid.stride(), q.mode);
                let mut fu = q.f.eval(spec.x0());
                let mut gu = weight(spec.x0());
                visit_dense(spec, lattice, grid.n(), false, |node, y| {
                    run.step(node - 1, gu, fu, h);
                    fu = q.f.eval(y);
                    gu = weight(y);
                })?;
                Ok(run.value(q.mode))
            })
            .collect(),
    }
}

/// Per-path functional values at one level with their empirical `L_p` norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureSample {
    pub n: usize,
    pub p: f64,
    pub weighted: bool,
    pub mode: QuadratureMode,
    pub values: Vec<f64>,
    pub norm: f64,
    pub batch_norms: Vec<f64>,
}

impl QuadratureSample {
    pub fn batch_stderr(&self) -> f64 {
        let b = self.batch_norms.len();
        if b < 2 {
            return f64::NAN;
        }
        let mean = self.batch_norms.iter().sum::<f64>() / b as f64;
        let var = self.batch_norms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
        (var / b as f64).sqrt()
    }

    /// Sample mean of the (signed) values.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

pub fn quadrature_functional(q: &QuadratureSpec, plan: &SamplingPlan, n: usize, p: f64) -> Result<QuadratureSample> {
    let values: Vec<f64> = plan.map_paths(|lattice| path_quadrature(q, lattice, &[n]).map(|v| v[0]))?;
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(invalid!("non-finite functional value {v}"));
    }
    let moments: Vec<Vec<f64>> = values.iter().map(|v| vec![v.abs().powf(p)]).collect();
    let table = ErrorTable::from_moments(vec![n], p, &moments, plan.batches)?;
    Ok(QuadratureSample {
        n,
        p,
        weighted: q.weight.is_some(),
        mode: q.mode,
        values,
        norm: table.errors[0],
        batch_norms: table.batch_errors.iter().map(|r| r[0]).collect(),
    })
}

/// Empirical `L_p` norms of the functional across `levels`.
pub fn quadrature_table(q: &QuadratureSpec, plan: &SamplingPlan, levels: &[usize], p: f64) -> Result<ErrorTable> {
    check_levels(levels)?;
    let moments = plan.map_paths(|lattice| {
        let v = path_quadrature(q, lattice, levels)?;
        Ok(v.iter().map(|x| x.abs().powf(p)).collect::<Vec<f64>>())
    })?;
    ErrorTable::from_moments(levels.to_vec(), p, &moments, plan.batches)
}

pub fn quadrature_rate_sweep(q: &QuadratureSpec, plan: &SamplingPlan, levels: &[usize], p: f64) -> Result<RateFit> {
    fit_rate(&quadrature_table(q, plan, levels, p)?, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{builtin_diffusion, builtin_drift, Params};
    use crate::rng::SeedLineage;
    use proptest::prelude::*;

    fn brownian() -> QuadratureProcess {
        QuadratureProcess::Brownian { x0: vec![0.0] }
    }

    fn step_fn() -> ScalarField {
        ScalarField::custom(1, "heaviside", 1.0, |x| if x[0] >= 0.0 { 1.0 } else { 0.0 })
    }

    #[test]
    fn constant_integrand_vanishes() {
        let f = ScalarField::custom(1, "c", 3.0, |_| 3.0);
        let q = QuadratureSpec::new(f, brownian()).unwrap();
        for i in 0..20 {
            let l = BrownianLattice::generate(1, 10, SeedLineage::new(2, i)).unwrap();
            assert_eq!(path_quadrature(&q, &l, &[4, 64, 1024]).unwrap(), vec![0.0; 3]);
        }
    }

    #[test]
    fn unbounded_needs_oracle_constructor() {
        assert!(QuadratureSpec::new(ScalarField::coordinate(1, 0), brownian()).is_err());
        assert!(QuadratureSpec::oracle(ScalarField::coordinate(1, 0), brownian()).is_ok());
        let q = QuadratureSpec::new(step_fn(), brownian()).unwrap();
        assert!(q.with_weight(ScalarField::coordinate(1, 0)).is_err());
    }

    #[test]
    fn matches_naive_riemann_sum() {
        let l = BrownianLattice::generate(1, 8, SeedLineage::new(9, 3)).unwrap();
        let f = ScalarField::custom(1, "sin", 1.0, |x| x[0].sin());
        let q = QuadratureSpec::new(f, brownian()).unwrap().with_mode(QuadratureMode::Terminal);
        let w = l.path_values();
        let n = 16;
        let stride = 256 / n;
        let naive: f64 = (0..256).map(|r| (w[r].sin() - w[r / stride * stride].sin()) / 256.0).sum();
        let got = path_quadrature(&q, &l, &[n]).unwrap()[0];
        assert!((got - naive).abs() < 1e-14);
    }

    #[test]
    fn terminal_shortcut_matches_running_sum() {
        let l = BrownianLattice::generate(1, 12, SeedLineage::new(5, 1)).unwrap();
        let f = ScalarField::custom(1, "step", 1.0, |x| if x[0] >= 0.1 { 1.0 } else { -0.5 });
        let plain = QuadratureSpec::new(f.clone(), brownian()).unwrap().with_mode(QuadratureMode::Terminal);
        // a unit weight forces the general loop
        let weighted = plain.clone().with_weight(ScalarField::custom(1, "one", 1.0, |_| 1.0)).unwrap();
        let levels = [4, 64, 1024];
        let a = path_quadrature(&plain, &l, &levels).unwrap();
        let b = path_quadrature(&weighted, &l, &levels).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-13, "{x} vs {y}");
        }
    }

    #[test]
    fn em_process_with_zero_drift_equals_brownian() {
        let spec = SdeSpec::new(
            builtin_drift("zero", 1, &Params::new()).unwrap(),
            builtin_diffusion("identity", 1, &Params::new()).unwrap(),
            vec![0.0],
        )
        .unwrap();
        let a = QuadratureSpec::new(step_fn(), brownian()).unwrap();
        let b = QuadratureSpec::new(step_fn(), QuadratureProcess::Em(spec)).unwrap();
        let l = BrownianLattice::generate(1, 10, SeedLineage::new(4, 4)).unwrap();
        let va = path_quadrature(&a, &l, &[8, 32]).unwrap();
        let vb = path_quadrature(&b, &l, &[8, 32]).unwrap();
        for (x, y) in va.iter().zip(&vb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_shape_and_symmetry() {
        let q = QuadratureSpec::new(step_fn(), brownian()).unwrap().with_mode(QuadratureMode::Terminal);
        let plan = SamplingPlan { experiment_seed: 1, paths: 4000, batches: 8, dim: 1, level: 10 };
        let s = quadrature_functional(&q, &plan, 16, 2.0).unwrap();
        assert_eq!(s.values.len(), 4000);
        assert_eq!(s.batch_norms.len(), 8);
        // every cell but the first has P(U_r >= 0) = P(U_anchor >= 0) = 1/2;
        // on the first the anchor value f(0) = 1 is deterministic, so the
        // mean is (1/2 - 1) / n
        let se = s.norm / (4000f64).sqrt();
        let expected = -0.5 / 16.0;
        assert!((s.mean() - expected).abs() < 4.0 * se, "mean {} se {se}", s.mean());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn running_integral_bounded(seed in 0u64..1000, weighted in any::<bool>()) {
            let mut q = QuadratureSpec::new(step_fn(), brownian()).unwrap();
            if weighted {
                q = q.with_weight(ScalarField::custom(1, "cos", 1.0, |x| x[0].cos())).unwrap();
            }
            let l = BrownianLattice::generate(1, 9, SeedLineage::new(seed, 0)).unwrap();
            // the sup over [0,1] is bounded by 2 ||g|| ||f|| * 1
            for v in path_quadrature(&q, &l, &[4, 32, 512]).unwrap() {
                prop_assert!(v.is_finite() && v <= 2.0);
            }
        }
    }
}
