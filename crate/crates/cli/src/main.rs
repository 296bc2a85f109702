//! `qcrystal`: command-line driver for the quantum anharmonic crystal
//! simulator.

mod commands;
mod config;
mod output;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, Outcome};
use config::{apply_overrides, from_document, parse_document, RunConfig};
use output::{Meta, Outputs, VERSION};

/// Environment variable that overrides the configured output directory.
const OUT_ENV: &str = "QCRYSTAL_OUT";

#[derive(Parser, Debug)]
#[command(name = "qcrystal", version, about = "Path-integral Monte Carlo for quantum anharmonic crystals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory; takes precedence over QCRYSTAL_OUT and [output] dir.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// `key=value` or `section.key=value` overrides applied after the file.
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact single-site thermal averages and the imaginary-time correlation.
    Oracle(Common),
    /// Run the lattice Monte Carlo, writing the measurement log and checkpoint.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Continue from checkpoint.bin in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop once every chain has completed this many sweeps.
        #[arg(long)]
        until: Option<u64>,
    },
    /// Observables and certificates of a completed (or resumed) run.
    Report(Common),
    /// Field sweeps and transition detection.
    Scan(Common),
    /// Path-regularity checks on the free and single-site measures.
    Grr(Common),
    /// Infrared bound at every nonzero momentum.
    CheckInfrared(Common),
    /// Lattice Green integral W_d.
    GreenIntegral(Common),
    /// Closed-form checks of the whole pipeline.
    Selftest,
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let text = match &common.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    let usage = |e: config::ConfigErrors| CliError::Usage(format!("invalid configuration:\n{e}"));
    let mut doc = parse_document(&text).map_err(usage)?;
    apply_overrides(&mut doc, &common.overrides).map_err(usage)?;
    from_document(&doc).map_err(usage)
}

fn outputs(name: &str, common: &Common, cfg: &RunConfig) -> Result<Outputs, CliError> {
    let dir = common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| cfg.output.dir.clone());
    let meta = Meta {
        version: VERSION,
        command: name.to_string(),
        config_sha256: cfg.hash(),
        seed: cfg.mc.seed,
    };
    Ok(Outputs::new(dir, meta)?)
}

fn dispatch(command: Command) -> Result<Outcome, CliError> {
    match command {
        Command::Oracle(c) => {
            let cfg = load(&c)?;
            commands::oracle(&cfg, &outputs("oracle", &c, &cfg)?)
        }
        Command::Sample { common, resume, until } => {
            let cfg = load(&common)?;
            commands::sample(&cfg, &outputs("sample", &common, &cfg)?, resume, until)
        }
        Command::Report(c) => {
            let cfg = load(&c)?;
            commands::report(&cfg, &outputs("report", &c, &cfg)?)
        }
        Command::Scan(c) => {
            let cfg = load(&c)?;
            commands::scan(&cfg, &outputs("scan", &c, &cfg)?)
        }
        Command::Grr(c) => {
            let cfg = load(&c)?;
            commands::grr(&cfg, &outputs("grr", &c, &cfg)?)
        }
        Command::CheckInfrared(c) => {
            let cfg = load(&c)?;
            commands::check_infrared(&cfg, &outputs("check-infrared", &c, &cfg)?)
        }
        Command::GreenIntegral(c) => commands::green_integral(&load(&c)?),
        Command::Selftest => commands::selftest(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
