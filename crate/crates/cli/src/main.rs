use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use irregem::harness::{self, find_canned, load_records, write_outputs, ExperimentConfig, ResultRecord};
use irregem::Error;

#[derive(Parser)]
#[command(name = "irregem", version, about = "Strong-rate experiments for Euler-Maruyama with irregular drift")]
struct Cli {
    /// Worker threads for the Monte Carlo loop.
    #[arg(long, global = true, default_value_t = default_workers())]
    workers: usize,
    /// Overrides the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: the config's `output`, else `results`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML file.
    Run { config: PathBuf },
    /// Run a named built-in experiment.
    Canned {
        name: String,
        /// Exit with status 4 if the headline statistic misses its band.
        #[arg(long)]
        assert: bool,
    },
    /// List the built-in experiments.
    List,
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Summarize the manifests in a results directory.
    Report { dir: PathBuf },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_BAND: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Budget(_)) => EXIT_BUDGET,
        Some(
            Error::Config(_)
            | Error::UnknownKey(_)
            | Error::Assumption(_)
            | Error::InvalidArgument(_)
            | Error::DimensionMismatch { .. }
            | Error::OutOfRange { .. }
            | Error::NotNested { .. },
        ) => EXIT_VALIDATION,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(config)?;
            execute(cli, cfg)?;
            Ok(0)
        }
        Command::Canned { name, assert } => {
            let canned = find_canned(name)?;
            let record = execute(cli, canned.config.clone())?;
            let hit = canned.band.contains(record.headline);
            println!(
                "{} {} = {} (band [{}, {}]): {}",
                canned.name,
                canned.statistic,
                record.headline,
                canned.band.lo,
                canned.band.hi,
                if hit { "inside" } else { "outside" }
            );
            Ok(if *assert && !hit { EXIT_BAND } else { 0 })
        }
        Command::List => {
            for c in harness::canned() {
                println!(
                    "{:<28} {:<18} {:<38} {}",
                    c.name,
                    c.config.kind.as_str(),
                    c.config.theorem.as_deref().unwrap_or("-"),
                    c.summary
                );
            }
            Ok(0)
        }
        Command::Validate { config } => {
            let cfg = load(config)?;
            cfg.validate()?;
            println!("{}: ok ({})", config.display(), harness::fingerprint(&cfg)?);
            Ok(0)
        }
        Command::Report { dir } => {
            let records = load_records(dir).with_context(|| format!("reading {}", dir.display()))?;
            report(&records);
            Ok(0)
        }
    }
}

fn load(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let cfg = ExperimentConfig::from_file(path)?;
    Ok(cfg)
}

fn execute(cli: &Cli, mut cfg: ExperimentConfig) -> anyhow::Result<ResultRecord> {
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let dir = cli.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("results"));
    let record = harness::run(&cfg, cli.workers)?;
    let files = write_outputs(&record, &dir)?;
    eprintln!(
        "{}: {:.1} s on {} worker(s), wrote {}",
        record.name,
        record.wall_clock_seconds,
        record.workers,
        files.csv.display()
    );
    Ok(record)
}

fn report(records: &[ResultRecord]) {
    println!(
        "{:<28} {:<18} {:>12} {:>10} {:>9} {:>9}  fingerprint",
        "name", "kind", "headline", "ci", "seconds", "workers"
    );
    for r in records {
        let ci = r.fit.as_ref().map_or(f64::NAN, |f| f.ci_halfwidth);
        println!(
            "{:<28} {:<18} {:>12.6} {:>10.4} {:>9.1} {:>9}  {}",
            r.name,
            r.kind.as_str(),
            r.headline,
            ci,
            r.wall_clock_seconds,
            r.workers,
            &r.fingerprint[..12.min(r.fingerprint.len())]
        );
    }
}
