use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coefficients::{builtin_diffusion, builtin_drift, Params, ScalarField};
use crate::error::{Error, Result};
use crate::metrics::{check_levels, DensityBump, QuadratureMode, QuadratureProcess, QuadratureSpec, SamplingPlan};
use crate::paths::{DEFAULT_ENTRY_BUDGET, MAX_LEVEL};
use crate::scheme::{AssumptionProfile, SdeSpec, DEFAULT_REFERENCE_GAP, MIN_REFERENCE_GAP};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    RateSweep,
    QuadratureSweep,
    SobolevEstimate,
    DensityDiagnostic,
    OracleValidation,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::RateSweep => "rate_sweep",
            ExperimentKind::QuadratureSweep => "quadrature_sweep",
            ExperimentKind::SobolevEstimate => "sobolev_estimate",
            ExperimentKind::DensityDiagnostic => "density_diagnostic",
            ExperimentKind::OracleValidation => "oracle_validation",
        }
    }

    pub fn fits_rate(&self) -> bool {
        matches!(self, ExperimentKind::RateSweep | ExperimentKind::QuadratureSweep | ExperimentKind::OracleValidation)
    }
}

/// A catalogue key plus its parameters, e.g.
/// `{ key = "sine_elliptic", c = 0.5 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientConfig {
    pub key: String,
    #[serde(flatten)]
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeConfig {
    pub dim: usize,
    /// Defaults to the origin.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    pub drift: CoefficientConfig,
    pub diffusion: CoefficientConfig,
    /// Overrides the inferred assumption profile.
    #[serde(default)]
    pub profile: Option<AssumptionProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Brownian,
    Em,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Drift catalogue key, or `coordinate` for `f(x) = x_i`.
    pub integrand: CoefficientConfig,
    #[serde(default)]
    pub component: usize,
    #[serde(default)]
    pub weight: Option<CoefficientConfig>,
    pub process: ProcessKind,
    #[serde(default = "default_mode")]
    pub mode: QuadratureMode,
    /// For the Brownian process; the EM process uses the `sde` table.
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SobolevConfig {
    pub integrand: CoefficientConfig,
    #[serde(default)]
    pub component: usize,
    pub alpha: f64,
    pub m: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_mesh")]
    pub mesh: f64,
    /// Interpolation exponents to check.
    #[serde(default)]
    pub thetas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub half_width: f64,
    /// Times `t = 2^-j`.
    #[serde(default = "default_exponents")]
    pub exponents: Vec<u32>,
    /// Integrability exponent of the bump norm.
    #[serde(default = "default_p")]
    pub lp: f64,
    /// The scheme runs with `2^level` steps.
    #[serde(default = "default_density_level")]
    pub level: u32,
}

/// One experiment, read from a TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    #[serde(default)]
    pub name: Option<String>,
    /// Result tag such as `theorem:additive`; checked against the profile.
    #[serde(default)]
    pub theorem: Option<String>,
    /// Statement the experiment checks, quoted for the manifest.
    #[serde(default)]
    pub anchor: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: usize,
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub levels: Vec<usize>,
    #[serde(default = "default_gap")]
    pub reference_gap: u32,
    /// Fine lattice level for quadrature sweeps; defaults to the finest
    /// level plus `reference_gap`.
    #[serde(default)]
    pub lattice_level: Option<u32>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub budget_seconds: Option<f64>,
    #[serde(default)]
    pub sde: Option<SdeConfig>,
    #[serde(default)]
    pub quadrature: Option<QuadratureConfig>,
    #[serde(default)]
    pub sobolev: Option<SobolevConfig>,
    #[serde(default)]
    pub density: Option<DensityConfig>,
}

fn default_batches() -> usize {
    8
}
fn default_p() -> f64 {
    2.0
}
fn default_gap() -> u32 {
    DEFAULT_REFERENCE_GAP
}
fn default_mode() -> QuadratureMode {
    QuadratureMode::Sup
}
fn default_radius() -> f64 {
    10.0
}
fn default_mesh() -> f64 {
    1e-3
}
fn default_exponents() -> Vec<u32> {
    (2..=10).collect()
}
fn default_density_level() -> u32 {
    10
}

/// Known result tags and the profile they require, if any.
const THEOREM_TAGS: &[(&str, Option<AssumptionProfile>)] = &[
    ("theorem:additive", Some(AssumptionProfile::AdditiveSobolev)),
    ("theorem:multiplicative", Some(AssumptionProfile::Multiplicative)),
    ("corollary:multiplicative_quadrature", Some(AssumptionProfile::Multiplicative)),
    ("lemma:additive_quadrature", None),
    ("lemma:density_bound", None),
    ("lemma:interpolation", None),
    ("benchmark:smooth", None),
];

/// Everything an experiment needs, built from a validated config.
#[derive(Debug, Clone)]
pub(crate) enum Prepared {
    Rate { spec: SdeSpec, plan: SamplingPlan, levels: Vec<usize>, p: f64, gap: u32 },
    Quadrature { q: QuadratureSpec, plan: SamplingPlan, levels: Vec<usize>, p: f64 },
    Sobolev { f: ScalarField, cfg: SobolevConfig },
    Density { spec: SdeSpec, bump: DensityBump, exponents: Vec<u32>, lp: f64, plan: SamplingPlan },
}

impl ExperimentConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Name used for output files.
    pub fn stem(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.as_str().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.prepare().map(|_| ())
    }

    fn require<'a, T>(&self, section: &'a Option<T>, name: &str) -> Result<&'a T> {
        section
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{} experiments need a [{name}] table", self.kind.as_str())))
    }

    fn plan(&self, dim: usize, level: u32) -> Result<SamplingPlan> {
        if level > MAX_LEVEL {
            return Err(Error::Config(format!("lattice level {level} exceeds {MAX_LEVEL}")));
        }
        if (dim << level) > DEFAULT_ENTRY_BUDGET {
            return Err(Error::Budget(format!(
                "a level-{level} lattice in d={dim} exceeds the {DEFAULT_ENTRY_BUDGET}-entry budget"
            )));
        }
        let plan = SamplingPlan { experiment_seed: self.seed, paths: self.paths, batches: self.batches, dim, level };
        plan.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(plan)
    }

    fn sweep_levels(&self) -> Result<u32> {
        check_levels(&self.levels).map_err(|e| Error::Config(e.to_string()))?;
        if self.levels.len() < 3 {
            return Err(Error::Config(format!("a rate fit needs at least 3 levels, got {}", self.levels.len())));
        }
        if !(self.p > 0.0) {
            return Err(Error::Config(format!("moment p must be positive, got {}", self.p)));
        }
        Ok(self.levels.last().unwrap().trailing_zeros())
    }

    fn check_theorem(&self, profile: Option<AssumptionProfile>) -> Result<()> {
        let Some(tag) = &self.theorem else { return Ok(()) };
        let Some((_, needed)) = THEOREM_TAGS.iter().find(|(t, _)| t == tag) else {
            return Err(Error::Config(format!("unknown theorem tag `{tag}`")));
        };
        match (needed, profile) {
            (Some(need), Some(have)) if *need != have => {
                Err(Error::Assumption(format!("`{tag}` needs the {need:?} profile, spec is {have:?}")))
            }
            (Some(need), None) => Err(Error::Assumption(format!("`{tag}` needs an SDE with the {need:?} profile"))),
            _ => Ok(()),
        }
    }

    pub(crate) fn prepare(&self) -> Result<Prepared> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if let Some(b) = self.budget_seconds {
            if !(b > 0.0) {
                return Err(Error::Config(format!("budget_seconds must be positive, got {b}")));
            }
        }
        match self.kind {
            ExperimentKind::RateSweep | ExperimentKind::OracleValidation => {
                let spec = build_sde(self.require(&self.sde, "sde")?)?;
                self.check_theorem(Some(spec.profile()))?;
                if self.kind == ExperimentKind::OracleValidation && spec.exact_solution().is_none() {
                    return Err(Error::Config(format!(
                        "oracle_validation needs a closed-form solution; `{}` / `{}` has none",
                        spec.drift().name(),
                        spec.diffusion().name()
                    )));
                }
                if self.reference_gap < MIN_REFERENCE_GAP {
                    return Err(Error::Config(format!(
                        "reference_gap {} below minimum {MIN_REFERENCE_GAP}",
                        self.reference_gap
                    )));
                }
                let max = self.sweep_levels()?;
                let plan = self.plan(spec.dim(), max + self.reference_gap)?;
                Ok(Prepared::Rate { spec, plan, levels: self.levels.clone(), p: self.p, gap: self.reference_gap })
            }
            ExperimentKind::QuadratureSweep => {
                let qc = self.require(&self.quadrature, "quadrature")?;
                let spec = match qc.process {
                    ProcessKind::Em => Some(build_sde(self.require(&self.sde, "sde")?)?),
                    ProcessKind::Brownian => None,
                };
                self.check_theorem(spec.as_ref().map(|s| s.profile()))?;
                let process = match spec {
                    Some(s) => QuadratureProcess::Em(s),
                    None => {
                        let dim = qc.dim.or(qc.x0.as_ref().map(|x| x.len())).unwrap_or(1);
                        let x0 = qc.x0.clone().unwrap_or_else(|| vec![0.0; dim]);
                        if x0.len() != dim {
                            return Err(Error::DimensionMismatch { expected: dim, got: x0.len() });
                        }
                        QuadratureProcess::Brownian { x0 }
                    }
                };
                let dim = process.dim();
                let (f, unbounded_ok) = build_field(&qc.integrand, dim, qc.component)?;
                let mut q =
                    if unbounded_ok { QuadratureSpec::oracle(f, process)? } else { QuadratureSpec::new(f, process)? }
                        .with_mode(qc.mode);
                if let Some(w) = &qc.weight {
                    q = q.with_weight(build_field(w, dim, 0)?.0)?;
                }
                let max = self.sweep_levels()?;
                let level = self.lattice_level.unwrap_or(max + self.reference_gap);
                if level < max {
                    return Err(Error::Config(format!("lattice_level {level} below finest sweep level {max}")));
                }
                let plan = self.plan(dim, level)?;
                Ok(Prepared::Quadrature { q, plan, levels: self.levels.clone(), p: self.p })
            }
            ExperimentKind::SobolevEstimate => {
                self.check_theorem(None)?;
                let cfg = self.require(&self.sobolev, "sobolev")?.clone();
                let (f, _) = build_field(&cfg.integrand, 1, cfg.component)?;
                if !f.is_bounded() {
                    return Err(Error::Assumption(format!("`{}` is unbounded", f.name())));
                }
                if !(cfg.alpha > 0.0 && cfg.alpha < 1.0 && cfg.m >= 1.0) {
                    return Err(Error::Config(format!("need 0 < alpha < 1 <= m, got {}, {}", cfg.alpha, cfg.m)));
                }
                if let Some(t) = cfg.thetas.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
                    return Err(Error::Config(format!("theta {t} outside (0, 1)")));
                }
                Ok(Prepared::Sobolev { f, cfg })
            }
            ExperimentKind::DensityDiagnostic => {
                let spec = build_sde(self.require(&self.sde, "sde")?)?;
                self.check_theorem(Some(spec.profile()))?;
                if spec.profile() == AssumptionProfile::OracleOnly {
                    return Err(Error::Assumption("density diagnostic rejects oracle-only specs".into()));
                }
                let dc = self.require(&self.density, "density")?;
                let bump = DensityBump::new(spec.x0().to_vec(), dc.half_width)?;
                if dc.exponents.is_empty() || dc.exponents.iter().any(|&j| j == 0 || j > dc.level) {
                    return Err(Error::Config(format!(
                        "density exponents must lie in 1..={}, got {:?}",
                        dc.level, dc.exponents
                    )));
                }
                if !(dc.lp > 1.0) {
                    return Err(Error::Config(format!("lp must exceed 1, got {}", dc.lp)));
                }
                let plan = self.plan(spec.dim(), dc.level)?;
                Ok(Prepared::Density { spec, bump, exponents: dc.exponents.clone(), lp: dc.lp, plan })
            }
        }
    }
}

fn build_sde(c: &SdeConfig) -> Result<SdeSpec> {
    let drift = builtin_drift(&c.drift.key, c.dim, &c.drift.params)?;
    let diffusion = builtin_diffusion(&c.diffusion.key, c.dim, &c.diffusion.params)?;
    let x0 = c.x0.clone().unwrap_or_else(|| vec![0.0; c.dim]);
    let spec = SdeSpec::new(drift, diffusion, x0)?;
    match c.profile {
        Some(p) => spec.with_profile(p),
        None => Ok(spec),
    }
}

/// The field and whether it may be unbounded (oracle integrands only).
fn build_field(c: &CoefficientConfig, dim: usize, component: usize) -> Result<(ScalarField, bool)> {
    if c.key == "coordinate" {
        if component >= dim {
            return Err(Error::OutOfRange { index: component, max: dim - 1 });
        }
        return Ok((ScalarField::coordinate(dim, component), true));
    }
    let drift = builtin_drift(&c.key, dim, &c.params)?;
    Ok((ScalarField::from_drift(&drift, component)?, false))
}
