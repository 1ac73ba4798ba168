//! Declarative experiments: a TOML config in, a [`ResultRecord`] and CSV
//! files out.
//!
//! Runs use a dedicated rayon pool of the requested size. All Monte Carlo
//! reductions happen in path order after the parallel map, so the emitted
//! numbers are identical for every worker count.

mod canned;
mod config;
mod record;

pub use canned::{canned, find_canned, Band, CannedExperiment};
pub use config::{
    CoefficientConfig, DensityConfig, ExperimentConfig, ExperimentKind, ProcessKind, QuadratureConfig, SdeConfig,
    SobolevConfig, SCHEMA_VERSION,
};
pub use record::{
    emit_csv, fingerprint, fmt_f64, load_records, parse_csv, render_csv, render_plot_csv, version_string,
    write_outputs, CsvTable, OutputFiles, ResultRecord, CSV_FOOTER_HEADER, CSV_HEADER,
};

use std::time::Instant;

use serde_json::json;

use crate::coefficients::{check_interpolation_embedding, estimate_sobolev_seminorm, SeminormOptions};
use crate::error::{Error, Result};
use crate::metrics::{density_bound_diagnostic, fit_rate, quadrature_table, strong_error_table};
use config::Prepared;

/// Runs `config` on `workers` threads. Fails with [`Error::Budget`] when
/// the run takes longer than `budget_seconds`.
pub fn run(config: &ExperimentConfig, workers: usize) -> Result<ResultRecord> {
    if workers == 0 {
        return Err(Error::Config("need at least one worker".into()));
    }
    let prepared = config.prepare()?;
    let fingerprint = fingerprint(config)?;
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| Error::Config(e.to_string()))?;
    let start = Instant::now();
    let outcome = pool.install(|| execute(prepared))?;
    let wall = start.elapsed().as_secs_f64();
    if let Some(budget) = config.budget_seconds {
        if wall > budget {
            return Err(Error::Budget(format!("{} took {wall:.1} s, budget {budget} s", config.stem())));
        }
    }
    Ok(ResultRecord {
        name: config.stem(),
        kind: config.kind,
        theorem: config.theorem.clone(),
        anchor: config.anchor.clone(),
        fingerprint,
        version: version_string(),
        levels: outcome.levels,
        errors: outcome.errors,
        batch_stderr: outcome.batch_stderr,
        fit: outcome.fit,
        headline: outcome.headline,
        details: outcome.details,
        wall_clock_seconds: wall,
        workers,
        config: config.clone(),
    })
}

struct Outcome {
    levels: Vec<usize>,
    errors: Vec<f64>,
    batch_stderr: Vec<f64>,
    fit: Option<crate::metrics::RateFit>,
    headline: f64,
    details: serde_json::Value,
}

fn execute(prepared: Prepared) -> Result<Outcome> {
    match prepared {
        Prepared::Rate { spec, plan, levels, p, gap } => {
            let table = strong_error_table(&spec, &plan, &levels, p, gap)?;
            table_outcome(table, json!({ "profile": spec.profile(), "reference_level": plan.level }))
        }
        Prepared::Quadrature { q, plan, levels, p } => {
            let table = quadrature_table(&q, &plan, &levels, p)?;
            table_outcome(
                table,
                json!({ "lattice_level": plan.level, "mode": q.mode(), "integrand": q.integrand().name() }),
            )
        }
        Prepared::Sobolev { f, cfg } => {
            let opts = SeminormOptions { radius: cfg.radius, mesh: cfg.mesh, ..Default::default() };
            let est = estimate_sobolev_seminorm(&f, cfg.alpha, cfg.m, &opts)?;
            let checks: Vec<serde_json::Value> = cfg
                .thetas
                .iter()
                .map(|&theta| {
                    let holds = check_interpolation_embedding(&f, cfg.alpha, cfg.m, theta, &opts);
                    match holds {
                        Ok(h) => json!({ "theta": theta, "holds": h }),
                        Err(e) => json!({ "theta": theta, "error": e.to_string() }),
                    }
                })
                .collect();
            Ok(Outcome {
                levels: vec![(2.0 * cfg.radius / cfg.mesh).round() as usize],
                errors: vec![est.value],
                batch_stderr: vec![est.quadrature_error_bound],
                fit: None,
                headline: est.value,
                details: json!({ "estimate": est, "interpolation": checks }),
            })
        }
        Prepared::Density { spec, bump, exponents, lp, plan } => {
            let rows = density_bound_diagnostic(&spec, &bump, &exponents, lp, &plan)?;
            let norm = bump.lp_norm(lp);
            let d = spec.dim() as f64;
            let headline =
                rows.windows(2).map(|w| (w[1].ratio / w[0].ratio).max(w[0].ratio / w[1].ratio)).fold(1.0, f64::max);
            Ok(Outcome {
                levels: exponents.iter().map(|&j| 1usize << j).collect(),
                errors: rows.iter().map(|r| r.ratio).collect(),
                batch_stderr: rows.iter().map(|r| r.stderr / (norm * r.t.powf(-d / (2.0 * lp)))).collect(),
                fit: None,
                headline,
                details: json!({ "rows": rows, "bump_norm": norm }),
            })
        }
    }
}

fn table_outcome(table: crate::metrics::ErrorTable, details: serde_json::Value) -> Result<Outcome> {
    let fit = fit_rate(&table, None)?;
    Ok(Outcome {
        batch_stderr: table.batch_stderr(),
        headline: fit.order(),
        levels: table.levels.clone(),
        errors: table.errors.clone(),
        fit: Some(fit),
        details,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
schema_version = 1
kind = "oracle_validation"
name = "small_ou"
seed = 7
paths = 64
batches = 4
levels = [4, 8, 16]
reference_gap = 4
[sde]
dim = 1
x0 = [1.0]
drift = { key = "linear_ou", rate = 1.0 }
diffusion = { key = "identity" }
"#;

    fn small() -> ExperimentConfig {
        ExperimentConfig::from_toml(SMALL).unwrap()
    }

    #[test]
    fn every_canned_config_validates() {
        let all = canned();
        assert!(all.iter().any(|c| c.name == "indicator_d1"));
        for c in &all {
            c.config.validate().unwrap_or_else(|e| panic!("{}: {e}", c.name));
            assert_eq!(c.config.stem(), c.name);
            assert!(c.band.lo <= c.band.hi);
        }
        assert!(find_canned("indicator_d1").is_ok());
        assert!(matches!(find_canned("nope"), Err(Error::UnknownKey(_))));
    }

    #[test]
    fn validation_failures() {
        let cases: &[(&str, &str)] = &[
            ("schema_version = 1", "schema_version = 2"),
            ("levels = [4, 8, 16]", "levels = [4, 8]"),
            ("levels = [4, 8, 16]", "levels = [4, 12, 16]"),
            ("paths = 64", "paths = 63"),
            ("reference_gap = 4", "reference_gap = 1"),
            ("seed = 7", "seed = 7\nbogus = 1"),
            ("identity", "no_such_key"),
            ("kind = \"oracle_validation\"", "kind = \"oracle_validation\"\nbudget_seconds = -1.0"),
        ];
        for (from, to) in cases {
            let src = SMALL.replace(from, to);
            let res = ExperimentConfig::from_toml(&src).and_then(|c| c.validate());
            assert!(res.is_err(), "accepted after `{from}` -> `{to}`");
        }
        // Oracle validation needs a closed form.
        let src = SMALL.replace("linear_ou\", rate = 1.0", "hoelder_cusp\", exponent = 0.5");
        assert!(matches!(ExperimentConfig::from_toml(&src).unwrap().validate(), Err(Error::Config(_))));
        // A huge reference level blows the lattice budget.
        let src = SMALL.replace("levels = [4, 8, 16]", "levels = [4, 8, 16, 8388608]");
        assert!(matches!(ExperimentConfig::from_toml(&src).unwrap().validate(), Err(Error::Budget(_))));
        // The multiplicative tag on an additive spec.
        let src = SMALL
            .replace("kind = \"oracle_validation\"", "kind = \"rate_sweep\"\ntheorem = \"theorem:multiplicative\"");
        assert!(matches!(ExperimentConfig::from_toml(&src).unwrap().validate(), Err(Error::Assumption(_))));
    }

    #[test]
    fn fingerprint_stable_and_sensitive() {
        let a = small();
        let f = fingerprint(&a).unwrap();
        assert_eq!(f.len(), 64);
        assert_eq!(f, fingerprint(&a.clone()).unwrap());
        // Round trip through TOML and location-only changes keep it.
        let back = ExperimentConfig::from_toml(&a.to_toml().unwrap()).unwrap();
        assert_eq!(f, fingerprint(&back).unwrap());
        let mut moved = a.clone();
        moved.output = Some("elsewhere".into());
        moved.budget_seconds = Some(5.0);
        assert_eq!(f, fingerprint(&moved).unwrap());
        let mut b = a.clone();
        b.seed = 8;
        assert_ne!(f, fingerprint(&b).unwrap());
        let mut c = a.clone();
        c.p = 2.5;
        assert_ne!(f, fingerprint(&c).unwrap());
    }

    #[test]
    fn run_is_worker_independent_and_csv_round_trips() {
        let cfg = small();
        let one = run(&cfg, 1).unwrap();
        let three = run(&cfg, 3).unwrap();
        let csv = render_csv(&one).unwrap();
        assert_eq!(csv, render_csv(&three).unwrap());
        assert_eq!(one.fingerprint, three.fingerprint);

        let table = parse_csv(&csv).unwrap();
        assert_eq!(table.rows.len(), 3);
        for ((level, n, e, s), i) in table.rows.iter().zip(0..) {
            assert_eq!(*n, one.levels[i]);
            assert_eq!(*level, n.trailing_zeros() as i64);
            assert_eq!(e.to_bits(), one.errors[i].to_bits());
            assert_eq!(s.to_bits(), one.batch_stderr[i].to_bits());
        }
        let fit = one.fit.as_ref().unwrap();
        assert_eq!(table.order.to_bits(), fit.order().to_bits());
        assert_eq!(format!("{:.16e}", table.ci_halfwidth), format!("{:.16e}", fit.ci_halfwidth));

        let dir = tempfile::tempdir().unwrap();
        let files = write_outputs(&one, dir.path()).unwrap();
        assert!(files.plot.exists());
        let loaded = load_records(dir.path()).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(render_csv(&loaded[0]).unwrap(), csv);
    }

    #[test]
    fn empty_levels_rejected_by_csv() {
        let mut rec = run(&small(), 1).unwrap();
        rec.levels.clear();
        rec.errors.clear();
        rec.batch_stderr.clear();
        assert!(render_csv(&rec).is_err());
        assert!(render_plot_csv(&rec).is_err());
    }

    #[test]
    fn zero_workers_rejected() {
        assert!(matches!(run(&small(), 0), Err(Error::Config(_))));
    }
}
