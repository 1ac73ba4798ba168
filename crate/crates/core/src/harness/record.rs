use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::error::{invalid, Error, Result};
use crate::metrics::RateFit;

pub const CSV_HEADER: &str = "level,n,error,batch_stderr";
pub const CSV_FOOTER_HEADER: &str = "order,ci_halfwidth";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub name: String,
    pub kind: ExperimentKind,
    pub theorem: Option<String>,
    pub anchor: Option<String>,
    pub fingerprint: String,
    pub version: String,
    pub levels: Vec<usize>,
    /// Per-level values: strong errors, quadrature norms, density ratios
    /// or the seminorm estimate, depending on `kind`.
    #[serde(deserialize_with = "crate::nan_serde::vec")]
    pub errors: Vec<f64>,
    #[serde(deserialize_with = "crate::nan_serde::vec")]
    pub batch_stderr: Vec<f64>,
    pub fit: Option<RateFit>,
    /// The statistic compared against a canned acceptance band.
    #[serde(deserialize_with = "crate::nan_serde::f64")]
    pub headline: f64,
    pub details: serde_json::Value,
    pub wall_clock_seconds: f64,
    pub workers: usize,
    pub config: ExperimentConfig,
}

pub fn version_string() -> String {
    match option_env!("IRREGEM_GIT_DESCRIBE") {
        Some(v) => v.to_string(),
        None => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

/// SHA-256 of the canonical form of `config`: sorted keys, every number
/// written as the shortest round-trip `f64`, output location and budget
/// left out.
pub fn fingerprint(config: &ExperimentConfig) -> Result<String> {
    let mut c = config.clone();
    c.output = None;
    c.budget_seconds = None;
    let value = serde_json::to_value(&c).map_err(|e| Error::Config(e.to_string()))?;
    let mut canon = String::new();
    canonical(&value, &mut canon);
    Ok(hex::encode(Sha256::digest(canon.as_bytes())))
}

fn canonical(v: &serde_json::Value, out: &mut String) {
    use serde_json::Value;
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            let _ = write!(out, "{}", fmt_f64(x));
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).unwrap_or_default()),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).unwrap_or_default());
                out.push(':');
                canonical(&map[*k], out);
            }
            out.push('}');
        }
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// `level,n,error,batch_stderr` rows, then the `order,ci_halfwidth` footer.
pub fn render_csv(record: &ResultRecord) -> Result<String> {
    if record.levels.is_empty() {
        return Err(invalid!("record has no levels"));
    }
    if record.errors.len() != record.levels.len() || record.batch_stderr.len() != record.levels.len() {
        return Err(Error::DimensionMismatch { expected: record.levels.len(), got: record.errors.len() });
    }
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for ((n, e), s) in record.levels.iter().zip(&record.errors).zip(&record.batch_stderr) {
        let level = if n.is_power_of_two() { n.trailing_zeros() as i64 } else { -1 };
        let _ = writeln!(out, "{level},{n},{},{}", fmt_f64(*e), fmt_f64(*s));
    }
    out.push_str(CSV_FOOTER_HEADER);
    out.push('\n');
    let (order, ci) = record.fit.as_ref().map_or((f64::NAN, f64::NAN), |f| (f.order(), f.ci_halfwidth));
    let _ = writeln!(out, "{},{}", fmt_f64(order), fmt_f64(ci));
    Ok(out)
}

/// Companion table with `log2` columns for plotting.
pub fn render_plot_csv(record: &ResultRecord) -> Result<String> {
    if record.levels.is_empty() {
        return Err(invalid!("record has no levels"));
    }
    let mut out = String::from("log2_n,log2_error,log2_error_lo,log2_error_hi\n");
    for ((n, e), s) in record.levels.iter().zip(&record.errors).zip(&record.batch_stderr) {
        let lo = (e - 2.0 * s).max(f64::MIN_POSITIVE);
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64((*n as f64).log2()),
            fmt_f64(e.log2()),
            fmt_f64(lo.log2()),
            fmt_f64((e + 2.0 * s).log2())
        );
    }
    Ok(out)
}

/// Parsed form of an emitted CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub rows: Vec<(i64, usize, f64, f64)>,
    pub order: f64,
    pub ci_halfwidth: f64,
}

pub fn parse_csv(src: &str) -> Result<CsvTable> {
    let bad = |what: &str| Error::Config(format!("malformed results CSV: {what}"));
    let mut lines = src.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(bad("missing header"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad(s));
    let mut rows = Vec::new();
    loop {
        let line = lines.next().ok_or_else(|| bad("missing footer"))?;
        if line == CSV_FOOTER_HEADER {
            break;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(bad(line));
        }
        rows.push((
            cols[0].parse().map_err(|_| bad(cols[0]))?,
            cols[1].parse().map_err(|_| bad(cols[1]))?,
            num(cols[2])?,
            num(cols[3])?,
        ));
    }
    let footer = lines.next().ok_or_else(|| bad("missing footer values"))?;
    let cols: Vec<&str> = footer.split(',').collect();
    if cols.len() != 2 {
        return Err(bad(footer));
    }
    Ok(CsvTable { rows, order: num(cols[0])?, ci_halfwidth: num(cols[1])? })
}

pub fn emit_csv(record: &ResultRecord, path: &Path) -> Result<()> {
    std::fs::write(path, render_csv(record)?)?;
    Ok(())
}

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFiles {
    pub csv: PathBuf,
    pub plot: PathBuf,
    pub manifest: PathBuf,
}

/// Writes `<stem>.csv`, `<stem>_plot.csv` and `<stem>.json` into `dir`.
pub fn write_outputs(record: &ResultRecord, dir: &Path) -> Result<OutputFiles> {
    std::fs::create_dir_all(dir)?;
    let stem = &record.name;
    let files = OutputFiles {
        csv: dir.join(format!("{stem}.csv")),
        plot: dir.join(format!("{stem}_plot.csv")),
        manifest: dir.join(format!("{stem}.json")),
    };
    emit_csv(record, &files.csv)?;
    std::fs::write(&files.plot, render_plot_csv(record)?)?;
    let json = serde_json::to_string_pretty(record).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(&files.manifest, json + "\n")?;
    Ok(files)
}

/// Loads every `*.json` manifest in `dir`, sorted by file name.
pub fn load_records(dir: &Path) -> Result<Vec<ResultRecord>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let src = std::fs::read_to_string(p)?;
            serde_json::from_str(&src).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        })
        .collect()
}
