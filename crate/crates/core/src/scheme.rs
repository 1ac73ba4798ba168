//! The Euler–Maruyama scheme on a Brownian lattice.
//!
//! `X^n_{(k+1)/n} = X^n_{k/n} + b(X^n_{k/n}) / n + sigma(X^n_{k/n}) ΔW_k`,
//! where `ΔW_k` is the lattice increment over `[k/n, (k+1)/n]` obtained by
//! ascending-order summation of fine increments. Between grid points the
//! continuous-time scheme `X^n_t = X^n_{κ_n(t)} + b(·)(t - κ_n(t)) +
//! sigma(·)(W_t - W_{κ_n(t)})` is evaluated at every fine lattice node
//! ("dense" trajectories).

use serde::{Deserialize, Serialize};

use crate::coefficients::{DiffusionSpec, DriftSpec, NoiseShape};
use crate::error::{invalid, Error, Result};
use crate::paths::{sum_block, BrownianLattice, GridMap};
use crate::rng::SeedLineage;

/// Smallest accepted gap between the finest experiment level and the
/// reference lattice level.
pub const MIN_REFERENCE_GAP: u32 = 4;
pub const DEFAULT_REFERENCE_GAP: u32 = 6;

/// Which convergence theory a spec falls under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionProfile {
    /// Bounded measurable drift, uniformly elliptic `C^2` diffusion.
    Multiplicative,
    /// `sigma = I` and a bounded drift with fractional Sobolev regularity.
    AdditiveSobolev,
    /// Outside both settings; only used against closed-form solutions.
    OracleOnly,
}

/// Closed-form solutions known for some catalogue combinations.
#[derive(Debug, Clone, PartialEq)]
pub enum ExactSolution {
    /// `X_t = x0 + c t + s W_t`
    Affine { drift: Vec<f64>, scale: f64 },
    /// `dX = -rate X dt + s dW`
    OrnsteinUhlenbeck { rate: f64, scale: f64 },
    /// `dX_i = mu X_i dt + X_i dW_i`
    Geometric { mu: f64 },
}

#[derive(Debug, Clone)]
pub struct SdeSpec {
    drift: DriftSpec,
    diffusion: DiffusionSpec,
    x0: Vec<f64>,
    profile: AssumptionProfile,
}

impl SdeSpec {
    /// Builds a spec and infers its assumption profile.
    pub fn new(drift: DriftSpec, diffusion: DiffusionSpec, x0: Vec<f64>) -> Result<Self> {
        let d = x0.len();
        for got in [drift.dim(), diffusion.dim()] {
            if got != d {
                return Err(Error::DimensionMismatch { expected: d, got });
            }
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("initial point must be finite"));
        }
        let profile = infer_profile(&drift, &diffusion);
        Ok(Self { drift, diffusion, x0, profile })
    }

    /// Overrides the inferred profile after checking it is consistent.
    pub fn with_profile(mut self, profile: AssumptionProfile) -> Result<Self> {
        check_profile(&self.drift, &self.diffusion, profile)?;
        self.profile = profile;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn drift(&self) -> &DriftSpec {
        &self.drift
    }

    pub fn diffusion(&self) -> &DiffusionSpec {
        &self.diffusion
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn profile(&self) -> AssumptionProfile {
        self.profile
    }

    pub fn exact_solution(&self) -> Option<ExactSolution> {
        let diffusion = &self.diffusion;
        if let Some(scale) = diffusion.constant_scale() {
            if let Some(drift) = self.drift.constant_value() {
                return Some(ExactSolution::Affine { drift, scale });
            }
            if let Some(rate) = self.drift.linear_rate() {
                return Some(ExactSolution::OrnsteinUhlenbeck { rate, scale });
            }
        }
        if diffusion.is_geometric() {
            if let Some(rate) = self.drift.linear_rate() {
                return Some(ExactSolution::Geometric { mu: -rate });
            }
        }
        None
    }
}

fn infer_profile(drift: &DriftSpec, diffusion: &DiffusionSpec) -> AssumptionProfile {
    [AssumptionProfile::AdditiveSobolev, AssumptionProfile::Multiplicative]
        .into_iter()
        .find(|p| check_profile(drift, diffusion, *p).is_ok())
        .unwrap_or(AssumptionProfile::OracleOnly)
}

fn check_profile(drift: &DriftSpec, diffusion: &DiffusionSpec, profile: AssumptionProfile) -> Result<()> {
    let fail = |why: String| Err(Error::Assumption(why));
    match profile {
        AssumptionProfile::OracleOnly => Ok(()),
        _ if drift.is_oracle_only() || !drift.is_bounded() => {
            fail(format!("drift `{}` is unbounded or oracle-only", drift.name()))
        }
        _ if diffusion.is_oracle_only() => fail(format!("diffusion `{}` is oracle-only", diffusion.name())),
        AssumptionProfile::AdditiveSobolev => {
            if !diffusion.is_additive() {
                return fail(format!("additive profile needs sigma = I, got `{}`", diffusion.name()));
            }
            if !drift.regularity().admits_additive_theory() {
                return fail(format!(
                    "additive profile needs Sobolev/Hoelder/Lipschitz/smooth drift, `{}` is {:?}",
                    drift.name(),
                    drift.regularity()
                ));
            }
            Ok(())
        }
        AssumptionProfile::Multiplicative => {
            if !(diffusion.ellipticity_lambda() > 0.0) {
                return fail(format!("diffusion `{}` is not uniformly elliptic", diffusion.name()));
            }
            Ok(())
        }
    }
}

/// EM states on a uniform grid.
///
/// `resolution` is the number of stored intervals: `n` for a plain
/// trajectory, `2^L` for a dense one (and for reference solutions).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    n: usize,
    dim: usize,
    resolution: usize,
    states: Vec<f64>,
    lineage: SeedLineage,
    exact: bool,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn lineage(&self) -> SeedLineage {
        self.lineage
    }

    /// Closed-form solution rather than a scheme output.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    /// State at node `k`, time `k / resolution`.
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn node_count(&self) -> usize {
        self.resolution + 1
    }
}

#[inline(always)]
fn advance(x: &[f64], b: &[f64], shape: NoiseShape, sigma: &[f64], dt: f64, dw: &[f64], out: &mut [f64]) {
    let d = x.len();
    for i in 0..d {
        let noise = match shape {
            NoiseShape::Identity => dw[i],
            NoiseShape::Diagonal => sigma[i] * dw[i],
            NoiseShape::Full => {
                let row = &sigma[i * d..(i + 1) * d];
                row.iter().zip(dw).fold(0.0, |acc, (s, w)| acc + s * w)
            }
        };
        out[i] = x[i] + b[i] * dt + noise;
    }
}

fn check_inputs(dim: usize, lattice: &BrownianLattice, n: usize) -> Result<GridMap> {
    if lattice.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: lattice.dim() });
    }
    GridMap::new(n, lattice.level())
}

/// Core loop. `drift == None` is the driftless scheme. With `dense` set,
/// `visit` sees every fine node `1..=2^L`; otherwise it sees grid points
/// `1..=n` (indexed in grid units).
fn drive<F>(
    drift: Option<&DriftSpec>,
    diffusion: &DiffusionSpec,
    x0: &[f64],
    lattice: &BrownianLattice,
    grid: GridMap,
    dense: bool,
    mut visit: F,
) where
    F: FnMut(usize, &[f64]),
{
    if x0.len() == 1 {
        drive_scalar(drift, diffusion, x0[0], lattice, grid, dense, |i, y| visit(i, &[y]));
    } else {
        drive_generic(drift, diffusion, x0, lattice, grid, dense, visit);
    }
}

fn drive_generic<F>(
    drift: Option<&DriftSpec>,
    diffusion: &DiffusionSpec,
    x0: &[f64],
    lattice: &BrownianLattice,
    grid: GridMap,
    dense: bool,
    mut visit: F,
) where
    F: FnMut(usize, &[f64]),
{
    let d = x0.len();
    let stride = grid.stride();
    let h = lattice.step_size();
    let dt = 1.0 / grid.n() as f64;
    let inc = lattice.increments();
    let mut x = x0.to_vec();
    let mut y = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut sigma = vec![0.0; d * d];
    let mut acc = vec![0.0; d];
    for k in 0..grid.n() {
        match drift {
            Some(drift) => drift.eval(&x, &mut b),
            None => b.fill(0.0),
        }
        let shape = diffusion.freeze(&x, &mut sigma);
        if dense {
            acc.fill(0.0);
            for j in 1..=stride {
                let row = &inc[(k * stride + j - 1) * d..(k * stride + j) * d];
                for (a, w) in acc.iter_mut().zip(row) {
                    *a += *w;
                }
                advance(&x, &b, shape, &sigma, j as f64 * h, &acc, &mut y);
                visit(k * stride + j, &y);
            }
        } else {
            sum_block(inc, d, k * stride, stride, &mut acc);
            advance(&x, &b, shape, &sigma, dt, &acc, &mut y);
            visit(k + 1, &y);
        }
        std::mem::swap(&mut x, &mut y);
    }
}

/// `drive` specialised to `d = 1`; same arithmetic, no slices in the hot loop.
fn drive_scalar<F>(
    drift: Option<&DriftSpec>,
    diffusion: &DiffusionSpec,
    x0: f64,
    lattice: &BrownianLattice,
    grid: GridMap,
    dense: bool,
    mut visit: F,
) where
    F: FnMut(usize, f64),
{
    let stride = grid.stride();
    let h = lattice.step_size();
    let dt = 1.0 / grid.n() as f64;
    let inc = lattice.increments();
    let mut x = x0;
    let mut sigma = [0.0];
    for k in 0..grid.n() {
        let b = drift.map_or(0.0, |drift| drift.component(&[x], 0));
        let scale = match diffusion.freeze(&[x], &mut sigma) {
            NoiseShape::Identity => None,
            NoiseShape::Diagonal | NoiseShape::Full => Some(sigma[0]),
        };
        let block = &inc[k * stride..(k + 1) * stride];
        if dense {
            let mut acc = 0.0;
            let mut y = x;
            for (j, w) in block.iter().enumerate() {
                acc += *w;
                let t = (j + 1) as f64 * h;
                y = match scale {
                    None => x + b * t + acc,
                    Some(s) => x + b * t + s * acc,
                };
                visit(k * stride + j + 1, y);
            }
            x = y;
        } else {
            let mut acc = 0.0;
            for w in block {
                acc += *w;
            }
            x = match scale {
                None => x + b * dt + acc,
                Some(s) => x + b * dt + s * acc,
            };
            visit(k + 1, x);
        }
    }
}

fn collect(
    drift: Option<&DriftSpec>,
    diffusion: &DiffusionSpec,
    x0: &[f64],
    lattice: &BrownianLattice,
    n: usize,
    dense: bool,
) -> Result<Trajectory> {
    let d = x0.len();
    let grid = check_inputs(d, lattice, n)?;
    let resolution = if dense { lattice.steps() } else { n };
    let mut states = Vec::with_capacity((resolution + 1) * d);
    states.extend_from_slice(x0);
    drive(drift, diffusion, x0, lattice, grid, dense, |_, y| states.extend_from_slice(y));
    Ok(Trajectory { n, dim: d, resolution, states, lineage: lattice.lineage(), exact: false })
}

/// EM with `n` steps driven by `lattice`; `n` must be a power of two no
/// larger than `2^L`.
pub fn em_solve(spec: &SdeSpec, lattice: &BrownianLattice, n: usize) -> Result<Trajectory> {
    collect(Some(&spec.drift), &spec.diffusion, &spec.x0, lattice, n, false)
}

/// EM with `n` steps, evaluated in continuous time at every lattice node.
pub fn em_solve_dense(spec: &SdeSpec, lattice: &BrownianLattice, n: usize) -> Result<Trajectory> {
    collect(Some(&spec.drift), &spec.diffusion, &spec.x0, lattice, n, true)
}

/// The scheme with `b = 0`.
pub fn em_solve_driftless(
    diffusion: &DiffusionSpec,
    x0: &[f64],
    lattice: &BrownianLattice,
    n: usize,
) -> Result<Trajectory> {
    if diffusion.dim() != x0.len() {
        return Err(Error::DimensionMismatch { expected: x0.len(), got: diffusion.dim() });
    }
    collect(None, diffusion, x0, lattice, n, false)
}

pub fn em_solve_driftless_dense(
    diffusion: &DiffusionSpec,
    x0: &[f64],
    lattice: &BrownianLattice,
    n: usize,
) -> Result<Trajectory> {
    if diffusion.dim() != x0.len() {
        return Err(Error::DimensionMismatch { expected: x0.len(), got: diffusion.dim() });
    }
    collect(None, diffusion, x0, lattice, n, true)
}

/// Streams the dense EM trajectory at `n` steps: `visit(node, state)` for
/// nodes `1..=2^L` without storing it.
pub fn visit_dense<F>(spec: &SdeSpec, lattice: &BrownianLattice, n: usize, driftless: bool, visit: F) -> Result<()>
where
    F: FnMut(usize, &[f64]),
{
    let grid = check_inputs(spec.dim(), lattice, n)?;
    let drift = (!driftless).then_some(&spec.drift);
    drive(drift, &spec.diffusion, &spec.x0, lattice, grid, true, visit);
    Ok(())
}

/// Fine-grid stand-in for the exact solution: the closed form when one is
/// known, otherwise EM at `2^L` steps. The lattice level must exceed
/// `max_level` by at least `gap >= MIN_REFERENCE_GAP`.
pub fn reference_solution(spec: &SdeSpec, lattice: &BrownianLattice, max_level: u32, gap: u32) -> Result<Trajectory> {
    if gap < MIN_REFERENCE_GAP {
        return Err(invalid!("reference gap {gap} below minimum {MIN_REFERENCE_GAP}"));
    }
    if lattice.level() < max_level + gap {
        return Err(invalid!("reference lattice level {} below required {} + {}", lattice.level(), max_level, gap));
    }
    match spec.exact_solution() {
        Some(exact) => exact_on_lattice(spec, &exact, lattice),
        None => em_solve_dense(spec, lattice, lattice.steps()),
    }
}

/// Closed-form solution sampled at every lattice node.
pub fn exact_on_lattice(spec: &SdeSpec, exact: &ExactSolution, lattice: &BrownianLattice) -> Result<Trajectory> {
    let d = spec.dim();
    if lattice.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: lattice.dim() });
    }
    let steps = lattice.steps();
    let h = lattice.step_size();
    let inc = lattice.increments();
    let w = lattice.path_values();
    let mut states = vec![0.0; (steps + 1) * d];
    states[..d].copy_from_slice(spec.x0());
    match exact {
        ExactSolution::Affine { drift, scale } => {
            for k in 1..=steps {
                let t = k as f64 * h;
                for i in 0..d {
                    states[k * d + i] = spec.x0()[i] + drift[i] * t + scale * w[k * d + i];
                }
            }
        }
        ExactSolution::OrnsteinUhlenbeck { rate, scale } => {
            // exponential integrator on the lattice, stochastic integral
            // weighted at the cell midpoint
            let decay = (-rate * h).exp();
            let mid = (-0.5 * rate * h).exp();
            for k in 0..steps {
                for i in 0..d {
                    states[(k + 1) * d + i] = decay * states[k * d + i] + scale * mid * inc[k * d + i];
                }
            }
        }
        ExactSolution::Geometric { mu } => {
            for k in 1..=steps {
                let t = k as f64 * h;
                for i in 0..d {
                    states[k * d + i] = spec.x0()[i] * ((mu - 0.5) * t + w[k * d + i]).exp();
                }
            }
        }
    }
    Ok(Trajectory { n: steps, dim: d, resolution: steps, states, lineage: lattice.lineage(), exact: true })
}
