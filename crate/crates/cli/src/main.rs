//! Configuration-driven runner for the tomographic-indicator experiments:
//! model time series, shot-sampled circuit runs, standalone indicator
//! evaluation from tomogram files, and QASM subset tooling.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration or input error,
//! 3 numerical invariant violation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{
    parse_pairing, resolve_circuit_run, resolve_model_run, CircuitRunOverrides, FileConfig,
    ModelRunOverrides,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("numerical invariant violation: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

// Core errors surfacing mid-run are numerical-invariant failures; config
// validation happens before any computation starts.
impl From<teisim::models::ModelError> for CliError {
    fn from(e: teisim::models::ModelError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<teisim::hilbert::HilbertError> for CliError {
    fn from(e: teisim::hilbert::HilbertError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<teisim::indicators::IndicatorError> for CliError {
    fn from(e: teisim::indicators::IndicatorError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<teisim::tomography::TomographyError> for CliError {
    fn from(e: teisim::tomography::TomographyError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<teisim::circuit::CircuitError> for CliError {
    fn from(e: teisim::circuit::CircuitError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "teisim",
    about = "Tomographic entanglement indicators for hybrid cavity-QED models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a model and write the indicator time series as CSV.
    ModelRun(ModelRunArgs),
    /// Sample (or exactly evaluate) a preparation circuit's tomograms.
    CircuitRun(CircuitRunArgs),
    /// Compute indicators from tomogram JSON files alone.
    Indicators(IndicatorsArgs),
    /// OpenQASM subset tooling.
    #[command(subcommand)]
    Qasm(QasmCommand),
}

#[derive(Args)]
struct ModelRunArgs {
    /// TOML config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model: djc or dtc.
    #[arg(long)]
    model: Option<String>,
    /// Initial state (djc: psi0|phi0; dtc: psi0_psi0|phi0_phi0|psi0_phi0).
    #[arg(long)]
    initial: Option<String>,
    /// Detuning (omega - omega0) in units of g.
    #[arg(long)]
    delta: Option<f64>,
    /// Fock truncation per field (defaults to the exact excitation bound).
    #[arg(long)]
    n_max: Option<usize>,
    /// Number of time steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Time step in units of pi/g.
    #[arg(long = "step-size")]
    step_size: Option<f64>,
    /// Start time in units of pi/g.
    #[arg(long = "t-start")]
    t_start: Option<f64>,
    /// Number of quadrature phases per mode.
    #[arg(long = "theta-count")]
    theta_count: Option<usize>,
    /// Number of quadrature grid points.
    #[arg(long = "x-points")]
    x_points: Option<usize>,
    /// Quadrature grid half-extent.
    #[arg(long = "x-max")]
    x_max: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated step indices at which to dump tomogram JSON files.
    #[arg(long = "dump-tomograms", value_delimiter = ',')]
    dump_tomograms: Option<Vec<usize>>,
}

#[derive(Args)]
struct CircuitRunArgs {
    /// TOML config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Circuit: bell, dtc-prep or djc-equiv.
    #[arg(long)]
    circuit: Option<String>,
    /// Exchange angle for djc-equiv (defaults to pi).
    #[arg(long)]
    theta: Option<f64>,
    /// Shots per setting; 0 evaluates exact statevector probabilities.
    #[arg(long)]
    shots: Option<u64>,
    /// Base PRNG seed; execution e uses seed + e.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of repeated executions (seeds).
    #[arg(long)]
    executions: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the per-setting measurement circuits as QASM files.
    #[arg(long = "emit-qasm")]
    emit_qasm: bool,
}

#[derive(Args)]
struct IndicatorsArgs {
    /// TOML config file (mode `indicators_from_file`); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Tomogram JSON file(s) conforming to the tomogram schema.
    #[arg(long = "tomogram")]
    tomograms: Vec<PathBuf>,
    /// Qubit pairing, e.g. `0,1|2,3`.
    #[arg(long)]
    pairing: Option<String>,
    /// Output JSON file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum QasmCommand {
    /// Parse a file and print a summary.
    Parse { file: PathBuf },
    /// Parse a file and re-emit it canonically.
    Emit {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that a file belongs to the supported subset.
    Validate { file: PathBuf },
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::ModelRun(args) => {
            let file = FileConfig::load(args.config.as_ref())?;
            // `mode` doubles as the model selector in config files, but it
            // must always belong to this subcommand.
            if let Some(mode) = &file.mode {
                if mode != "model_djc" && mode != "model_dtc" {
                    return Err(CliError::Config(format!(
                        "config field `mode`: `{mode}` is not a model-run mode"
                    )));
                }
            }
            let cfg = resolve_model_run(
                &file,
                ModelRunOverrides {
                    model: args.model,
                    initial: args.initial,
                    delta: args.delta,
                    n_max: args.n_max,
                    steps: args.steps,
                    step_size: args.step_size,
                    t_start: args.t_start,
                    theta_count: args.theta_count,
                    x_points: args.x_points,
                    x_max: args.x_max,
                    out: args.out,
                    dump_tomograms: args.dump_tomograms,
                },
            )?;
            commands::run_model_experiment(&cfg)
        }
        Command::CircuitRun(args) => {
            let file = FileConfig::load(args.config.as_ref())?;
            file.check_mode("circuit")?;
            let cfg = resolve_circuit_run(
                &file,
                CircuitRunOverrides {
                    circuit: args.circuit,
                    theta: args.theta,
                    shots: args.shots,
                    seed: args.seed,
                    executions: args.executions,
                    out: args.out,
                    emit_qasm: args.emit_qasm,
                },
            )?;
            commands::run_circuit_experiment(&cfg)
        }
        Command::Indicators(args) => {
            let file = FileConfig::load(args.config.as_ref())?;
            file.check_mode("indicators_from_file")?;
            let tomograms = if args.tomograms.is_empty() {
                file.tomogram_files.clone().unwrap_or_default()
            } else {
                args.tomograms
            };
            if tomograms.is_empty() {
                return Err(CliError::Config(
                    "field `tomogram_files`: no tomogram files given (set --tomogram)".into(),
                ));
            }
            let pairing = args
                .pairing
                .or_else(|| file.pairing.clone())
                .ok_or_else(|| {
                    CliError::Config("field `pairing`: missing (set --pairing)".into())
                })?;
            let (block_a, block_b) = parse_pairing(&pairing)?;
            commands::compute_indicators(&tomograms, &block_a, &block_b, args.out.as_ref())
        }
        Command::Qasm(cmd) => match cmd {
            QasmCommand::Parse { file } => commands::qasm_parse(&file),
            QasmCommand::Emit { file, out } => commands::qasm_emit(&file, out.as_ref()),
            QasmCommand::Validate { file } => commands::qasm_validate(&file),
        },
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
