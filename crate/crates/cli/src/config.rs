//! Experiment configuration: a single TOML file plus command-line overrides.
//!
//! Resolution order is defaults, then the config file, then flags. Every
//! validation failure names the offending field and exits with code 2.

use std::path::PathBuf;

use serde::Deserialize;

use teisim::indicators::TimeGrid;
use teisim::models::{AtomBlock, InitialStateSpec};
use teisim::tomography::QuadratureGrid;

use crate::CliError;

/// Raw config-file contents; every field optional.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mode: Option<String>,
    pub initial: Option<String>,
    pub delta: Option<f64>,
    pub n_max: Option<usize>,
    pub seed: Option<u64>,
    pub shots: Option<u64>,
    pub executions: Option<usize>,
    pub circuit: Option<String>,
    pub theta: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub time: Option<TimeSection>,
    pub grid: Option<GridSection>,
    pub dump_tomogram_steps: Option<Vec<usize>>,
    pub tomogram_files: Option<Vec<PathBuf>>,
    pub pairing: Option<String>,
    pub emit_qasm: Option<bool>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    /// Start time in units of pi/g.
    pub t_start: Option<f64>,
    /// Step in units of pi/g.
    pub t_step: Option<f64>,
    pub n_steps: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub x_max: Option<f64>,
    pub n_points: Option<usize>,
    pub theta_count: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&PathBuf>) -> Result<Self, CliError> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Config(format!("config: cannot read {}: {e}", p.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("config: {e}")))
            }
        }
    }

    pub fn check_mode(&self, expected: &str) -> Result<(), CliError> {
        if let Some(mode) = &self.mode {
            if mode != expected {
                return Err(CliError::Config(format!(
                    "config field `mode`: `{mode}` does not match the `{expected}` subcommand"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Djc,
    Dtc,
}

impl ModelKind {
    pub fn parse(name: &str) -> Result<Self, CliError> {
        match name {
            "djc" | "model_djc" => Ok(ModelKind::Djc),
            "dtc" | "model_dtc" => Ok(ModelKind::Dtc),
            other => Err(CliError::Config(format!(
                "field `model`: unknown model `{other}` (expected `djc` or `dtc`)"
            ))),
        }
    }
}

pub fn parse_initial(kind: ModelKind, name: &str) -> Result<InitialStateSpec, CliError> {
    let bad = || {
        CliError::Config(format!(
            "field `initial`: `{name}` is not valid for this model (djc: psi0|phi0; \
             dtc: psi0_psi0|phi0_phi0|psi0_phi0|phi0_psi0)"
        ))
    };
    match kind {
        ModelKind::Djc => {
            let block = AtomBlock::parse(name).map_err(|_| bad())?;
            Ok(InitialStateSpec::djc(block))
        }
        ModelKind::Dtc => {
            let (first, second) = name.split_once('_').ok_or_else(bad)?;
            let b1 = AtomBlock::parse(first).map_err(|_| bad())?;
            let b2 = AtomBlock::parse(second).map_err(|_| bad())?;
            Ok(InitialStateSpec::dtc(b1, b2))
        }
    }
}

/// Fully resolved model-run settings.
#[derive(Debug, Clone)]
pub struct ModelRunConfig {
    pub model: ModelKind,
    pub initial: InitialStateSpec,
    pub initial_name: String,
    pub delta: f64,
    pub n_max: usize,
    pub time: TimeGrid,
    pub grid: QuadratureGrid,
    pub out_dir: PathBuf,
    pub dump_steps: Vec<usize>,
}

pub struct ModelRunOverrides {
    pub model: Option<String>,
    pub initial: Option<String>,
    pub delta: Option<f64>,
    pub n_max: Option<usize>,
    pub steps: Option<usize>,
    pub step_size: Option<f64>,
    pub t_start: Option<f64>,
    pub theta_count: Option<usize>,
    pub x_points: Option<usize>,
    pub x_max: Option<f64>,
    pub out: Option<PathBuf>,
    pub dump_tomograms: Option<Vec<usize>>,
}

pub fn resolve_model_run(
    file: &FileConfig,
    ov: ModelRunOverrides,
) -> Result<ModelRunConfig, CliError> {
    let model_name = ov
        .model
        .or_else(|| file.mode.clone())
        .ok_or_else(|| CliError::Config("field `model`: missing (set --model or config `mode`)".into()))?;
    let model = ModelKind::parse(&model_name)?;

    let initial_name = ov
        .initial
        .or_else(|| file.initial.clone())
        .unwrap_or_else(|| match model {
            ModelKind::Djc => "psi0".to_string(),
            ModelKind::Dtc => "psi0_psi0".to_string(),
        });
    let initial = parse_initial(model, &initial_name)?;

    let delta = ov.delta.or(file.delta).unwrap_or(0.0);
    if !delta.is_finite() {
        return Err(CliError::Config("field `delta`: must be finite".into()));
    }
    let default_n_max = initial.atom_blocks.len();
    let n_max = ov.n_max.or(file.n_max).unwrap_or(default_n_max);
    if n_max < default_n_max {
        return Err(CliError::Config(format!(
            "field `n_max`: {n_max} cannot hold the initial excitations (needs >= {default_n_max})"
        )));
    }

    let tsec = file.time.clone().unwrap_or_default();
    let t_start = ov.t_start.or(tsec.t_start).unwrap_or(0.0);
    let t_step = ov.step_size.or(tsec.t_step).unwrap_or(0.02);
    let n_steps = ov.steps.or(tsec.n_steps).unwrap_or(300);
    if n_steps < 1 {
        return Err(CliError::Config("field `time.n_steps`: must be >= 1".into()));
    }
    if !(t_step.is_finite() && t_step > 0.0) {
        return Err(CliError::Config("field `time.t_step`: must be positive".into()));
    }
    let time = TimeGrid {
        gt_start: t_start * std::f64::consts::PI,
        gt_step: t_step * std::f64::consts::PI,
        n_steps,
    };

    let gsec = file.grid.clone().unwrap_or_default();
    let x_max = ov.x_max.or(gsec.x_max).unwrap_or(8.0);
    let n_points = ov.x_points.or(gsec.n_points).unwrap_or(321);
    let theta_count = ov.theta_count.or(gsec.theta_count).unwrap_or(16);
    let grid = QuadratureGrid::new(x_max, n_points, theta_count)
        .map_err(|e| CliError::Config(format!("field `grid`: {e}")))?;

    let out_dir = ov
        .out
        .or_else(|| file.out_dir.clone())
        .ok_or_else(|| CliError::Config("field `out_dir`: missing (set --out)".into()))?;
    let mut dump_steps =
        ov.dump_tomograms.or_else(|| file.dump_tomogram_steps.clone()).unwrap_or_default();
    dump_steps.sort_unstable();
    dump_steps.dedup();
    if let Some(&bad) = dump_steps.iter().find(|&&s| s >= n_steps) {
        return Err(CliError::Config(format!(
            "field `dump_tomogram_steps`: step {bad} out of range (n_steps = {n_steps})"
        )));
    }

    Ok(ModelRunConfig {
        model,
        initial,
        initial_name,
        delta,
        n_max,
        time,
        grid,
        out_dir,
        dump_steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CircuitKind {
    Bell,
    DtcPrep,
    DjcEquiv,
}

impl CircuitKind {
    pub fn parse(name: &str) -> Result<Self, CliError> {
        match name {
            "bell" => Ok(CircuitKind::Bell),
            "dtc-prep" | "dtc_prep" => Ok(CircuitKind::DtcPrep),
            "djc-equiv" | "djc_equiv" => Ok(CircuitKind::DjcEquiv),
            other => Err(CliError::Config(format!(
                "field `circuit`: unknown circuit `{other}` (expected bell, dtc-prep or djc-equiv)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CircuitKind::Bell => "bell",
            CircuitKind::DtcPrep => "dtc_prep",
            CircuitKind::DjcEquiv => "djc_equiv",
        }
    }
}

/// Fully resolved circuit-run settings.
#[derive(Debug, Clone)]
pub struct CircuitRunConfig {
    pub circuit: CircuitKind,
    pub theta: f64,
    pub shots: u64,
    pub seed: u64,
    pub executions: usize,
    pub out_dir: PathBuf,
    pub emit_qasm: bool,
}

pub struct CircuitRunOverrides {
    pub circuit: Option<String>,
    pub theta: Option<f64>,
    pub shots: Option<u64>,
    pub seed: Option<u64>,
    pub executions: Option<usize>,
    pub out: Option<PathBuf>,
    pub emit_qasm: bool,
}

pub fn resolve_circuit_run(
    file: &FileConfig,
    ov: CircuitRunOverrides,
) -> Result<CircuitRunConfig, CliError> {
    let circuit_name = ov
        .circuit
        .or_else(|| file.circuit.clone())
        .ok_or_else(|| CliError::Config("field `circuit`: missing (set --circuit)".into()))?;
    let circuit = CircuitKind::parse(&circuit_name)?;
    let theta = ov.theta.or(file.theta).unwrap_or(std::f64::consts::PI);
    if circuit == CircuitKind::DjcEquiv && !(0.0..=std::f64::consts::PI).contains(&theta) {
        return Err(CliError::Config(format!(
            "field `theta`: {theta} outside [0, pi]"
        )));
    }
    let shots = ov.shots.or(file.shots).unwrap_or(teisim::circuit::DEFAULT_SHOTS);
    let seed = ov.seed.or(file.seed).unwrap_or(1);
    let executions = ov.executions.or(file.executions).unwrap_or(6);
    if shots > 0 && executions < 1 {
        return Err(CliError::Config("field `executions`: must be >= 1".into()));
    }
    let out_dir = ov
        .out
        .or_else(|| file.out_dir.clone())
        .ok_or_else(|| CliError::Config("field `out_dir`: missing (set --out)".into()))?;
    let emit_qasm = ov.emit_qasm || file.emit_qasm.unwrap_or(false);
    Ok(CircuitRunConfig { circuit, theta, shots, seed, executions, out_dir, emit_qasm })
}

/// Parse a pairing spec like `0,1|2,3` into two index blocks.
pub fn parse_pairing(spec: &str) -> Result<(Vec<usize>, Vec<usize>), CliError> {
    let bad = |msg: &str| CliError::Config(format!("field `pairing`: {msg} (example: `0,1|2,3`)"));
    let (a, b) = spec.split_once('|').ok_or_else(|| bad("missing `|` separator"))?;
    let parse_block = |s: &str| -> Result<Vec<usize>, CliError> {
        s.split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| bad("blocks must be qubit indices")))
            .collect()
    };
    let block_a = parse_block(a)?;
    let block_b = parse_block(b)?;
    if block_a.is_empty() || block_b.is_empty() {
        return Err(bad("blocks must be non-empty"));
    }
    for q in &block_a {
        if block_b.contains(q) {
            return Err(bad("blocks overlap"));
        }
    }
    Ok((block_a, block_b))
}
