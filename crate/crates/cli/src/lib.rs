//! Command-line front end: `solve`, `sweep`, `fiber-scan`, `audit`, `verify`
//! and `crosscheck`, configured by JSON and flags.

// `!(x > y)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use choquard_core::{Error, Result};
use serde_json::Value;

use crate::config::{parse_override, RunConfig, DEFAULT_OUTPUT_DIR, OUTPUT_DIR_ENV, SCHEMA_HELP};
use crate::output::{error_document, exit_code, OutputDir, ERROR_FILE};

#[derive(Debug, Parser)]
#[command(
    name = "choquard",
    version,
    about = "Normalized ground states of the Choquard equation",
    after_help = SCHEMA_HELP
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the ground state at one mass
    #[command(after_help = SCHEMA_HELP)]
    Solve(Common),
    /// Compute the energy curve over a list of masses
    #[command(after_help = SCHEMA_HELP)]
    Sweep(Common),
    /// Tabulate energy and Pohozaev functional along a dilation fiber
    #[command(after_help = SCHEMA_HELP)]
    FiberScan(Common),
    /// Check the structural hypotheses on the nonlinearity
    #[command(after_help = SCHEMA_HELP)]
    Audit(Common),
    /// Recompute every diagnostic of a saved result
    #[command(after_help = SCHEMA_HELP)]
    Verify(Common),
    /// Compare the radial Riesz potential with a Cartesian FFT convolution
    #[command(after_help = SCHEMA_HELP)]
    Crosscheck(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Sweep(_) => "sweep",
            Command::FiberScan(_) => "fiber-scan",
            Command::Audit(_) => "audit",
            Command::Verify(_) => "verify",
            Command::Crosscheck(_) => "crosscheck",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Solve(c)
            | Command::Sweep(c)
            | Command::FiberScan(c)
            | Command::Audit(c)
            | Command::Verify(c)
            | Command::Crosscheck(c) => c,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON configuration file
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. --set numerics.nodes=1024
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Shorthand for problem.mass
    #[arg(long)]
    pub mass: Option<f64>,
    /// Shorthand for problem.masses (comma separated)
    #[arg(long, value_delimiter = ',')]
    pub masses: Option<Vec<f64>>,
    /// Shorthand for numerics.nodes
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Shorthand for numerics.radius
    #[arg(long)]
    pub radius: Option<f64>,
    /// Shorthand for output.directory
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Shorthand for input.result
    #[arg(long)]
    pub result: Option<PathBuf>,
    /// Shorthand for numerics.force=true
    #[arg(long)]
    pub force: bool,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, Value)>> {
        let mut out = self.set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>>>()?;
        let path = |p: &PathBuf| Value::String(p.to_string_lossy().into_owned());
        if let Some(m) = self.mass {
            out.push(("problem.mass".into(), m.into()));
        }
        if let Some(ms) = &self.masses {
            out.push(("problem.masses".into(), ms.clone().into()));
        }
        if let Some(n) = self.nodes {
            out.push(("numerics.nodes".into(), n.into()));
        }
        if let Some(r) = self.radius {
            out.push(("numerics.radius".into(), r.into()));
        }
        if let Some(o) = &self.out {
            out.push(("output.directory".into(), path(o)));
        }
        if let Some(r) = &self.result {
            out.push(("input.result".into(), path(r)));
        }
        if self.force {
            out.push(("numerics.force".into(), true.into()));
        }
        Ok(out)
    }
}

fn fallback_dir(flag: Option<&PathBuf>) -> PathBuf {
    flag.cloned()
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

/// Output directory: flag or config, then the environment, then the default.
pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    fallback_dir(cfg.output.directory.as_ref())
}

fn report_failure(err: &Error, command: &str, dir: PathBuf) -> i32 {
    eprintln!("error [{}]: {err}", err.kind());
    let out = OutputDir::new(dir);
    if let Err(e) = out.write_json(ERROR_FILE, &error_document(err, command)) {
        eprintln!("error [{}]: could not write {}: {e}", e.kind(), out.file(ERROR_FILE).display());
    }
    exit_code(err)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => {
                    let err = Error::Config(e.kind().to_string());
                    report_failure(&err, "cli", fallback_dir(None))
                }
            };
        }
    };
    let name = cli.command.name();
    let common = cli.command.common();
    let cfg = match common.overrides().and_then(|o| RunConfig::load(common.config.as_deref(), &o)) {
        Ok(cfg) => cfg,
        Err(e) => return report_failure(&e, name, fallback_dir(common.out.as_ref())),
    };
    let out = OutputDir::new(output_dir(&cfg));
    match commands::dispatch(&cli.command, &cfg, &out) {
        Ok(()) => 0,
        Err(e) => report_failure(&e, name, out.path().to_path_buf()),
    }
}
