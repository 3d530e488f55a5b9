//! Implementations of the four subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use teisim::circuit::{
    axis_settings, build_bell_prep, build_djc_equiv, build_dtc_prep, exact_spin_tomogram,
    sample_suite, tomogram_from_counts, tomography_suite, Circuit,
};
use teisim::format_sig17;
use teisim::hilbert::{reduced_density, Propagator};
use teisim::indicators::{
    indicator_time_series, mis_from_spin_tomogram, xi_tei, xi_tei_prime, Bipartition,
    IndicatorRow,
};
use teisim::models::{
    build_hdjc_interaction, build_hdtc_interaction, initial_state, ModelParams,
};
use teisim::tomography::{optical_tomogram, spin_tomogram_xyz, Axis, TomogramFile};

use crate::config::{CircuitKind, CircuitRunConfig, ModelKind, ModelRunConfig};
use crate::CliError;

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

/// CSV column order of the model-run output.
const CSV_HEADER: &str =
    "gt,xi_tei_field,xi_tei_prime_field,xi_qmi_field,xi_tei_atom,xi_tei_prime_atom,xi_qmi_atom";

fn csv_from_rows(rows: &[IndicatorRow]) -> Result<String, CliError> {
    let mut out = String::with_capacity(rows.len() * 160);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let fields = &row.samples[0];
        let atoms = &row.samples[1];
        let values = [
            row.gt,
            fields.xi_tei,
            fields.xi_tei_prime,
            fields.xi_qmi,
            atoms.xi_tei,
            atoms.xi_tei_prime,
            atoms.xi_qmi,
        ];
        for v in values {
            if !v.is_finite() {
                return Err(CliError::Numerical(format!(
                    "non-finite indicator value at gt = {}",
                    row.gt
                )));
            }
        }
        let mut first = true;
        for v in values {
            if !first {
                out.push(',');
            }
            out.push_str(&format_sig17(v));
            first = false;
        }
        out.push('\n');
    }
    Ok(out)
}

/// Run a model experiment: indicator time series to CSV, plus optional
/// tomogram dumps at selected steps.
pub fn run_model_experiment(cfg: &ModelRunConfig) -> Result<(), CliError> {
    let params = ModelParams::with_delta(cfg.delta, cfg.n_max);
    let (h, atom_partition) = match cfg.model {
        ModelKind::Djc => (
            build_hdjc_interaction(&params)?,
            Bipartition::new(&["C"], &["D"]),
        ),
        ModelKind::Dtc => (
            build_hdtc_interaction(&params)?,
            Bipartition::new(&["C1", "C2"], &["D1", "D2"]),
        ),
    };
    let psi0 = initial_state(&cfg.initial, h.layout())?;
    let partitions = [Bipartition::new(&["A"], &["B"]), atom_partition];
    let rows = indicator_time_series(&h, &psi0, &cfg.time, &partitions, &cfg.grid)?;
    let csv = csv_from_rows(&rows)?;
    write_file(&cfg.out_dir.join("indicators.csv"), &csv)?;

    if !cfg.dump_steps.is_empty() {
        let propagator = Propagator::new(&h)?;
        let atom_labels: Vec<&str> = match cfg.model {
            ModelKind::Djc => vec!["C", "D"],
            ModelKind::Dtc => vec!["C1", "C2", "D1", "D2"],
        };
        for &step in &cfg.dump_steps {
            let gt = cfg.time.gt_start + step as f64 * cfg.time.gt_step;
            let psi = propagator.evolve(&psi0, gt)?;
            let rho_atoms = reduced_density(&psi, &atom_labels)?;
            let spin = spin_tomogram_xyz(&rho_atoms)?;
            write_file(
                &cfg.out_dir.join(format!("step{step:04}_atoms_spin.json")),
                &TomogramFile::from_spin(&spin).to_json(),
            )?;
            for field in ["A", "B"] {
                let rho_f = reduced_density(&psi, &[field])?;
                let optical = optical_tomogram(&rho_f, &cfg.grid)?;
                write_file(
                    &cfg.out_dir.join(format!(
                        "step{step:04}_field_{}_optical.json",
                        field.to_lowercase()
                    )),
                    &TomogramFile::from_optical(&optical).to_json(),
                )?;
            }
        }
    }
    println!(
        "model run complete ({} / {}): {} rows -> {}",
        match cfg.model {
            ModelKind::Djc => "djc",
            ModelKind::Dtc => "dtc",
        },
        cfg.initial_name,
        rows.len(),
        cfg.out_dir.join("indicators.csv").display()
    );
    Ok(())
}

struct CircuitSetup {
    prefix: Circuit,
    measured: Vec<usize>,
    /// Indicator blocks as positions within the measured tuple.
    block_a: Vec<usize>,
    block_b: Vec<usize>,
}

fn build_circuit(cfg: &CircuitRunConfig) -> Result<CircuitSetup, CliError> {
    let (prefix, measured, block_a, block_b) = match cfg.circuit {
        CircuitKind::Bell => (build_bell_prep(), vec![0, 1], vec![0], vec![1]),
        CircuitKind::DtcPrep => (build_dtc_prep(), vec![0, 1, 2, 3], vec![0, 1], vec![2, 3]),
        CircuitKind::DjcEquiv => (build_djc_equiv(cfg.theta)?, vec![0, 3], vec![0], vec![1]),
    };
    Ok(CircuitSetup { prefix, measured, block_a, block_b })
}

fn setting_string(setting: &[Axis]) -> String {
    setting.iter().map(|a| a.name()).collect()
}

#[derive(Serialize)]
struct ExecutionSummary {
    seed: u64,
    xi_tei: f64,
    xi_tei_prime: f64,
}

#[derive(Serialize)]
struct CircuitSummary {
    circuit: String,
    theta: f64,
    shots: u64,
    base_seed: u64,
    settings: usize,
    executions: Vec<ExecutionSummary>,
    xi_tei_mean: f64,
    /// Population standard deviation across executions.
    xi_tei_std: f64,
    xi_tei_prime_mean: f64,
    exact_xi_tei: f64,
    exact_xi_tei_prime: f64,
}

fn indicator_from_tomogram(
    tomogram: &teisim::tomography::SpinTomogram,
    block_a: &[usize],
    block_b: &[usize],
) -> Result<(f64, f64), CliError> {
    let values = mis_from_spin_tomogram(tomogram, block_a.to_vec(), block_b.to_vec())?;
    Ok((xi_tei(&values)?, xi_tei_prime(&values)?))
}

/// Run a circuit experiment: per-setting counts files per execution, an
/// optional QASM dump of the measurement suite, and a summary with the
/// indicator estimate across seeds.
pub fn run_circuit_experiment(cfg: &CircuitRunConfig) -> Result<(), CliError> {
    let CircuitSetup { prefix, measured, block_a, block_b } = build_circuit(cfg)?;

    let exact = exact_spin_tomogram(&prefix, &measured)?;
    let (exact_xi, exact_prime) = indicator_from_tomogram(&exact, &block_a, &block_b)?;

    if cfg.emit_qasm {
        for (setting, circuit) in tomography_suite(&prefix, &measured)? {
            let name = format!("setting_{}.qasm", setting_string(&setting));
            write_file(
                &cfg.out_dir.join("qasm").join(name),
                &teisim::circuit::qasm::emit_qasm(&circuit),
            )?;
        }
    }

    let mut executions = Vec::new();
    if cfg.shots == 0 {
        write_file(
            &cfg.out_dir.join("tomogram_exact.json"),
            &TomogramFile::from_spin(&exact).to_json(),
        )?;
    } else {
        for e in 0..cfg.executions {
            let seed = cfg.seed.wrapping_add(e as u64);
            let tables = sample_suite(&prefix, &measured, cfg.shots, seed)?;
            for table in &tables {
                let name = format!("counts_{}.json", setting_string(&table.setting));
                write_file(&cfg.out_dir.join(format!("exec{e}")).join(name), &table.to_json())?;
            }
            let tomogram = tomogram_from_counts(&tables)?;
            let (xi, prime) = indicator_from_tomogram(&tomogram, &block_a, &block_b)?;
            executions.push(ExecutionSummary { seed, xi_tei: xi, xi_tei_prime: prime });
        }
    }

    let (mean, std, prime_mean) = if executions.is_empty() {
        (exact_xi, 0.0, exact_prime)
    } else {
        let n = executions.len() as f64;
        let mean = executions.iter().map(|e| e.xi_tei).sum::<f64>() / n;
        let var = executions.iter().map(|e| (e.xi_tei - mean).powi(2)).sum::<f64>() / n;
        let prime_mean = executions.iter().map(|e| e.xi_tei_prime).sum::<f64>() / n;
        (mean, var.sqrt(), prime_mean)
    };

    let summary = CircuitSummary {
        circuit: cfg.circuit.name().to_string(),
        theta: cfg.theta,
        shots: cfg.shots,
        base_seed: cfg.seed,
        settings: axis_settings(measured.len()).len(),
        executions,
        xi_tei_mean: mean,
        xi_tei_std: std,
        xi_tei_prime_mean: prime_mean,
        exact_xi_tei: exact_xi,
        exact_xi_tei_prime: exact_prime,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&cfg.out_dir.join("summary.json"), &json)?;
    println!(
        "circuit run complete: xi_tei = {} (std {}) -> {}",
        summary.xi_tei_mean,
        summary.xi_tei_std,
        cfg.out_dir.join("summary.json").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct FileIndicators {
    file: String,
    shots: Option<u64>,
    xi_tei: f64,
    xi_tei_prime: f64,
}

/// Compute indicators from tomogram JSON files alone (no state information).
pub fn compute_indicators(
    files: &[PathBuf],
    block_a: &[usize],
    block_b: &[usize],
    out: Option<&PathBuf>,
) -> Result<(), CliError> {
    let mut results = Vec::new();
    for path in files {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("tomogram file {}: {e}", path.display()))
        })?;
        let file = TomogramFile::from_json(&text)
            .map_err(|e| CliError::Config(format!("tomogram file {}: {e}", path.display())))?;
        let spin = file
            .as_spin()
            .map_err(|e| CliError::Config(format!("tomogram file {}: {e}", path.display())))?;
        let (xi, prime) = indicator_from_tomogram(&spin, block_a, block_b)?;
        results.push(FileIndicators {
            file: path.display().to_string(),
            shots: spin.shots,
            xi_tei: xi,
            xi_tei_prime: prime,
        });
    }
    let json = serde_json::to_string_pretty(&results).expect("results serialize");
    match out {
        Some(path) => write_file(path, &json)?,
        None => println!("{json}"),
    }
    Ok(())
}

/// Parse and summarize a QASM file.
pub fn qasm_parse(path: &PathBuf) -> Result<(), CliError> {
    let circuit = load_qasm(path)?;
    println!(
        "{}: {} qubit(s), {} classical bit(s), {} instruction(s)",
        path.display(),
        circuit.num_qubits(),
        circuit.num_clbits(),
        circuit.gates().len()
    );
    Ok(())
}

/// Reformat a QASM file canonically, to stdout or a file.
pub fn qasm_emit(path: &PathBuf, out: Option<&PathBuf>) -> Result<(), CliError> {
    let circuit = load_qasm(path)?;
    let text = teisim::circuit::qasm::emit_qasm(&circuit);
    match out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Validate a QASM file; exit status carries the verdict.
pub fn qasm_validate(path: &PathBuf) -> Result<(), CliError> {
    load_qasm(path)?;
    println!("{}: ok", path.display());
    Ok(())
}

fn load_qasm(path: &PathBuf) -> Result<Circuit, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    teisim::circuit::qasm::parse_qasm(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

