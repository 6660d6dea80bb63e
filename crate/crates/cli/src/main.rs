//! `stswe`: run the space-time shallow water benchmarks and studies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{parse_mesh, resolve, Case, Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Solver(#[from] stswe_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "stswe",
    version,
    about = "Space-time minimum-residual solver for the 1-D shallow water equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Polynomial degree of the elevation and velocity spaces.
    #[arg(long, global = true)]
    p: Option<usize>,

    /// Uniform (converge) or adaptive refinement steps.
    #[arg(long, global = true)]
    refinements: Option<usize>,

    /// Dörfler marking fraction in (0, 1].
    #[arg(long, global = true)]
    theta: Option<f64>,

    /// Number of equal time slices.
    #[arg(long, global = true)]
    slices: Option<usize>,

    /// Structured initial mesh, e.g. 25x400.
    #[arg(long, global = true, value_parser = parse_mesh, value_name = "NXxNT")]
    mesh: Option<(usize, usize)>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Use the full-resolution reference mesh.
    #[arg(long, global = true, conflicts_with = "mesh")]
    paper_mesh: bool,

    /// TOML run configuration; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Uniform refinement study of the manufactured solution with fitted rates.
    Converge,
    /// Adaptive refinement of the convective manufactured problem.
    Adapt,
    /// Lake at rest over a bump.
    Lake,
    /// Tidal forcing of a closed channel over seven days.
    Tidal,
    /// Dam break in a frictional channel.
    Dambreak,
    /// Full space-time solve against sequential time slices.
    SlicesCompare,
}

impl Command {
    fn case(self) -> Case {
        match self {
            Command::Converge => Case::Converge,
            Command::Adapt => Case::Adapt,
            Command::Lake => Case::Lake,
            Command::Tidal => Case::Tidal,
            Command::Dambreak => Case::Dambreak,
            Command::SlicesCompare => Case::SlicesCompare,
        }
    }
}

fn execute(cli: Cli) -> Result<String, CliError> {
    let file = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        p: cli.p,
        refinements: cli.refinements,
        theta: cli.theta,
        slices: cli.slices,
        mesh: cli.mesh,
        out: cli.out,
        paper_mesh: cli.paper_mesh,
    };
    let resolved = resolve(cli.command.case(), &file, &overrides)?;
    let started = Instant::now();
    let summary = run::run(&resolved)?;
    Ok(format!(
        "{summary} [{:.1} s, output in {}]",
        started.elapsed().as_secs_f64(),
        resolved.out.display()
    ))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("stswe: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
