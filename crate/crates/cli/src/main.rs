use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use duffing_cli::config::ExperimentKind;
use duffing_cli::error::CliError;
use duffing_cli::manifest::RunManifest;
use duffing_cli::{plots, runner, OUTPUT_ROOT_ENV};
use duffing_core::checks::{self, Mode, CRITERIA};

#[derive(Parser)]
#[command(name = "duffing", version, about = "Run Duffing-oscillator experiments from TOML configs")]
struct Cli {
    /// Root for relative output directories (default: current directory,
    /// or the DUFFING_OUTPUT_ROOT environment variable).
    #[arg(long, global = true)]
    output_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in the config.
    Run { config: PathBuf },
    /// Smoothing error versus width for one coefficient.
    SmoothCheck { config: PathBuf },
    /// Minimal period by three routes.
    Period { config: PathBuf },
    /// Iterated averaging with its transform log.
    NormalForm { config: PathBuf },
    /// Twist-form fit of the time-one map.
    Twist { config: PathBuf },
    /// Sup-norm survey over a grid of initial conditions.
    Boundedness { config: PathBuf },
    /// Confinement and rotation numbers at several energy levels.
    LevelScan { config: PathBuf },
    /// Run the acceptance criteria.
    Verify {
        /// Reduced workloads, same bounds.
        #[arg(long)]
        quick: bool,
        /// Only these criterion ids.
        #[arg(long)]
        only: Vec<u8>,
    },
    /// Write plot-ready CSV (and SVG) files from a run manifest.
    EmitPlots {
        manifest: PathBuf,
        #[arg(long)]
        svg: bool,
    },
}

fn run_experiment(config: PathBuf, kind: Option<ExperimentKind>, root: Option<PathBuf>) -> Result<(), CliError> {
    let m = runner::run_file(&config, root.as_deref(), kind)?;
    for f in &m.files {
        println!("wrote {} ({} rows)", m.output_dir.join(&f.path).display(), f.rows);
    }
    for a in &m.assertions {
        println!("{} {}: {:e} (bound {:e})", if a.pass { "PASS" } else { "FAIL" }, a.name, a.value, a.bound);
    }
    println!("manifest {}", m.output_dir.join("manifest.json").display());
    if let Some(f) = m.failures.first() {
        return Err(CliError::Runtime(f.clone()));
    }
    summarize(&m)
}

fn summarize(m: &RunManifest) -> Result<(), CliError> {
    let failed: Vec<&str> = m.assertions.iter().filter(|a| !a.pass).map(|a| a.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(failed.join(", ")))
    }
}

fn verify(quick: bool, only: Vec<u8>) -> Result<(), CliError> {
    let mode = if quick { Mode::Quick } else { Mode::Full };
    let ids: Vec<u8> = if only.is_empty() { (1..=CRITERIA).collect() } else { only };
    let mut failed = Vec::new();
    for id in ids {
        let r = checks::run(id, mode);
        println!("{r}");
        let _ = std::io::stdout().flush();
        if !r.pass {
            failed.push(id.to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(format!("criteria {}", failed.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let root = cli.output_root.or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from));
    let result = match cli.command {
        Command::Run { config } => run_experiment(config, None, root),
        Command::SmoothCheck { config } => run_experiment(config, Some(ExperimentKind::SmoothCheck), root),
        Command::Period { config } => run_experiment(config, Some(ExperimentKind::Period), root),
        Command::NormalForm { config } => run_experiment(config, Some(ExperimentKind::NormalForm), root),
        Command::Twist { config } => run_experiment(config, Some(ExperimentKind::Twist), root),
        Command::Boundedness { config } => run_experiment(config, Some(ExperimentKind::Boundedness), root),
        Command::LevelScan { config } => run_experiment(config, Some(ExperimentKind::LevelScan), root),
        Command::Verify { quick, only } => verify(quick, only),
        Command::EmitPlots { manifest, svg } => plots::emit_from_manifest(&manifest, svg).map(|files| {
            for f in files {
                println!("wrote {}", f.display());
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
