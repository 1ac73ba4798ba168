use serde::Serialize;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

/// Acceptance interval for a record's headline statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CannedExperiment {
    pub name: &'static str,
    pub summary: &'static str,
    /// What the headline statistic is.
    pub statistic: &'static str,
    pub band: Band,
    pub config: ExperimentConfig,
}

const INF: f64 = f64::INFINITY;

/// (name, summary, statistic, band, config)
const CATALOGUE: &[(&str, &str, &str, Band, &str)] = &[
    (
        "ou_oracle",
        "OU process against its exact solution",
        "order",
        Band { lo: 0.85, hi: 1.15 },
        r#"
schema_version = 1
kind = "oracle_validation"
name = "ou_oracle"
theorem = "benchmark:smooth"
anchor = "the rate of convergence is known to be 1"
seed = 20240101
paths = 10000
levels = [16, 32, 64, 128, 256, 512, 1024]
reference_gap = 6
budget_seconds = 120
[sde]
dim = 1
x0 = [1.0]
drift = { key = "linear_ou", rate = 1.0 }
diffusion = { key = "identity" }
"#,
    ),
    (
        "gbm_oracle",
        "geometric Brownian motion against its exact solution",
        "order",
        Band { lo: 0.40, hi: 0.60 },
        r#"
schema_version = 1
kind = "oracle_validation"
name = "gbm_oracle"
theorem = "benchmark:smooth"
anchor = "known to be sharp even in the case of smooth coefficients"
seed = 20240102
paths = 10000
levels = [16, 32, 64, 128, 256, 512, 1024]
reference_gap = 6
budget_seconds = 300
[sde]
dim = 1
x0 = [1.0]
drift = { key = "zero" }
diffusion = { key = "gbm_test" }
"#,
    ),
    (
        "indicator_d1",
        "sign-type indicator drift with additive noise in d = 1",
        "order",
        Band { lo: 0.60, hi: 0.90 },
        r#"
schema_version = 1
kind = "rate_sweep"
name = "indicator_d1"
theorem = "theorem:additive"
anchor = "the L_2-rate 3/4-ε"
seed = 20240103
paths = 100000
levels = [16, 32, 64, 128, 256, 512, 1024]
reference_gap = 6
budget_seconds = 1200
[sde]
dim = 1
drift = { key = "indicator_interval", intervals = [[0.0, 1.0, 1.0], [-1.0, 0.0, -1.0]], alpha = 0.49, m = 2.0 }
diffusion = { key = "identity" }
"#,
    ),
    (
        "indicator_d2",
        "indicator of a disc as drift with additive noise in d = 2",
        "order",
        Band { lo: 0.50, hi: INF },
        r#"
schema_version = 1
kind = "rate_sweep"
name = "indicator_d2"
theorem = "theorem:additive"
anchor = "n^{-(1+α)/2+ε}"
seed = 20240104
paths = 10000
levels = [16, 32, 64, 128, 256, 512]
reference_gap = 6
budget_seconds = 1800
[sde]
dim = 2
drift = { key = "indicator_lipschitz_domain", center = [0.25, 0.0], radius = 0.5, weight = 1.0 }
diffusion = { key = "identity" }
"#,
    ),
    (
        "additive_hoelder",
        "Hoelder cusp drift with additive noise",
        "order",
        Band { lo: 0.60, hi: 1.20 },
        r#"
schema_version = 1
kind = "rate_sweep"
name = "additive_hoelder"
theorem = "theorem:additive"
anchor = "n^{-(1+α)/2+ε}"
seed = 20240105
paths = 10000
levels = [16, 32, 64, 128, 256, 512, 1024]
reference_gap = 6
budget_seconds = 600
[sde]
dim = 1
drift = { key = "hoelder_cusp", exponent = 0.5, height = 1.0 }
diffusion = { key = "identity" }
"#,
    ),
    (
        "multiplicative_measurable",
        "oscillating measurable drift with elliptic multiplicative noise",
        "order",
        Band { lo: 0.40, hi: INF },
        r#"
schema_version = 1
kind = "rate_sweep"
name = "multiplicative_measurable"
theorem = "theorem:multiplicative"
anchor = "≤ N n^{-1/2+ε}"
seed = 20240106
paths = 10000
levels = [16, 32, 64, 128, 256, 512, 1024]
reference_gap = 6
budget_seconds = 900
[sde]
dim = 1
drift = { key = "oscillatory_measurable" }
diffusion = { key = "sine_elliptic", c = 0.5 }
"#,
    ),
    (
        "quadrature_indicator",
        "occupation-time quadrature error of a step function along Brownian paths",
        "order",
        Band { lo: 0.65, hi: 0.85 },
        r#"
schema_version = 1
kind = "quadrature_sweep"
name = "quadrature_indicator"
theorem = "lemma:additive_quadrature"
anchor = "n^{-(1+α)/2+ε}|t−s|^{1/2+ε}S^{−d/(2m)}"
seed = 20240107
paths = 100000
levels = [16, 32, 64, 128, 256, 512, 1024]
lattice_level = 16
budget_seconds = 600
[quadrature]
integrand = { key = "indicator_interval", intervals = [[0.0, inf, 1.0]] }
process = "brownian"
mode = "sup"
x0 = [0.0]
"#,
    ),
    (
        "quadrature_linear",
        "terminal quadrature error of f(x) = x along Brownian paths",
        "order",
        Band { lo: 0.85, hi: 1.15 },
        r#"
schema_version = 1
kind = "quadrature_sweep"
name = "quadrature_linear"
theorem = "lemma:additive_quadrature"
anchor = "n^{-(1+α)/2+ε}"
seed = 20240108
paths = 100000
batches = 50
levels = [16, 32, 64, 128, 256]
lattice_level = 15
budget_seconds = 120
[quadrature]
integrand = { key = "coordinate" }
process = "brownian"
mode = "terminal"
x0 = [0.0]
"#,
    ),
    (
        "sobolev_indicator",
        "fractional Sobolev seminorm of the unit-interval indicator",
        "seminorm",
        Band { lo: 3.92, hi: 4.08 },
        r#"
schema_version = 1
kind = "sobolev_estimate"
name = "sobolev_indicator"
theorem = "lemma:interpolation"
anchor = "≤ 2‖f‖_B^{1−θ}[f]^θ"
budget_seconds = 60
[sobolev]
integrand = { key = "indicator_interval", intervals = [[0.0, 1.0, 1.0]] }
alpha = 0.25
m = 2.0
thetas = [0.25, 0.5, 0.75]
"#,
    ),
    (
        "density_gaussian",
        "density bound ratios for Brownian motion and a small box",
        "max_ratio_step",
        Band { lo: 1.0, hi: 2.0 },
        r#"
schema_version = 1
kind = "density_diagnostic"
name = "density_gaussian"
theorem = "lemma:density_bound"
anchor = "‖G‖_{L_p(R^d)} t^{-d/(2p)}"
seed = 20240109
paths = 100000
budget_seconds = 60
[sde]
dim = 1
drift = { key = "zero" }
diffusion = { key = "identity" }
[density]
half_width = 0.05
exponents = [2, 3, 4, 5, 6, 7, 8, 9, 10]
lp = 2.0
level = 10
"#,
    ),
];

/// Every canned experiment.
pub fn canned() -> Vec<CannedExperiment> {
    CATALOGUE
        .iter()
        .map(|(name, summary, statistic, band, src)| CannedExperiment {
            name,
            summary,
            statistic,
            band: *band,
            config: ExperimentConfig::from_toml(src)
                .unwrap_or_else(|e| panic!("canned config {name} does not parse: {e}")),
        })
        .collect()
}

pub fn find_canned(name: &str) -> Result<CannedExperiment> {
    canned().into_iter().find(|c| c.name == name).ok_or_else(|| Error::UnknownKey(name.to_string()))
}
