use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use orbitherm::cache::cache_root;
use orbitherm::config::parse_config;
use orbitherm::experiments::{run_driver, RunContext};
use orbitherm::report::{emit, DriverReport, EXIT_ERROR};
use orbitherm::{Error, Result};

#[derive(Parser)]
#[command(name = "orbitherm", version, about = "Thermodynamic and ergodic-optimization experiments on Schottky surfaces")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir` from the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Table cache directory; overrides ORBITHERM_CACHE.
    #[arg(long, global = true, value_name = "DIR")]
    cache: Option<PathBuf>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Ping-pong and randomized geometry checks.
    Check,
    /// Critical exponents of nested subgroup families.
    Exponents,
    /// Pressure, its derivative and the thermodynamic identities.
    PressureCurve,
    /// Zero-temperature concentration on a bump target.
    ZeroTemp,
    /// Inverse temperatures reaching prescribed entropies.
    Intermediate,
    /// Mass split between an orbit and its flip.
    Nonergodic,
    /// Alternating ground-state schedule.
    Divergence,
    /// Escape of mass and the tilt curve.
    NoMaximizer,
    /// Convergence of test averages to an orbit measure.
    Density,
}

impl Command {
    fn driver(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Exponents => "exponents",
            Command::PressureCurve => "pressure_curve",
            Command::ZeroTemp => "zero_temp",
            Command::Intermediate => "intermediate",
            Command::Nonergodic => "nonergodic",
            Command::Divergence => "divergence",
            Command::NoMaximizer => "no_maximizer",
            Command::Density => "density",
        }
    }
}

fn print_report(report: &DriverReport) {
    for v in &report.verdicts {
        println!("{} {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    for n in &report.notes {
        println!("note: {n}");
    }
}

fn run(cli: &Cli) -> Result<i32> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    }
    let path = cli.config.as_deref().ok_or_else(|| Error::InvalidInput("--config PATH is required".into()))?;
    let bytes = std::fs::read(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    let config = parse_config(&bytes)?;
    let out = cli
        .out
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let svg = config.output.svg;
    let root = cache_root(cli.cache.as_deref());
    let ctx = RunContext::new(config, Some(&root))?;
    log::info!("config hash {}", ctx.hash);
    let report = run_driver(&ctx, cli.command.driver())?;
    print_report(&report);
    for p in emit(&report, &ctx.hash, Path::new(&out), svg)? {
        log::info!("wrote {}", p.display());
    }
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .parse_default_env()
        .init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
