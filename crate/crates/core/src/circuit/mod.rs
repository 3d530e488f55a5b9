//! Gate-level statevector simulator with shot sampling, x/y/z tomographic
//! measurement post-processing, builders for the equivalent circuits, and an
//! OpenQASM 2.0 subset parser/emitter (see [`qasm`]).
//!
//! Conventions: qubit 0 is the most significant bit of the statevector index
//! (matching the layout convention in [`crate::hilbert`]); counts bitstrings
//! put classical bit 0 first, and measurement suites enumerate per-qubit axes
//! in lexicographic (x, y, z) order.

pub mod qasm;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{Factor, HilbertError, PureState, SubsystemLayout};
use crate::tomography::{Axis, SpinTomogram, TomographyError};

/// Default shot count, mirroring the platform cap of 8192 runs.
pub const DEFAULT_SHOTS: u64 = 8192;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("gate `{kind:?}` expects {expected} parameter(s), got {got}")]
    BadParamCount { kind: GateKind, expected: usize, got: usize },
    #[error("gate `{kind:?}` expects {expected} target(s), got {got}")]
    BadTargetCount { kind: GateKind, expected: usize, got: usize },
    #[error("gate targets must be distinct and in range (qubit {0} of {1})")]
    BadTarget(usize, usize),
    #[error("classical bit {0} out of range ({1} declared)")]
    BadClassicalTarget(usize, usize),
    #[error("measure gate requires a classical target")]
    MissingClassicalTarget,
    #[error("classical bit {0} is already written by another measure")]
    ClassicalTargetReused(usize),
    #[error("qubit {0} already measured; no further gates allowed on it")]
    GateAfterMeasure(usize),
    #[error("gate `{0:?}` has no unitary matrix")]
    NonUnitaryGate(GateKind),
    #[error("circuit contains measurements; strip them before statevector simulation")]
    UnexpectedMeasure,
    #[error("circuit has no measurements to sample")]
    NothingMeasured,
    #[error("shot count must be positive")]
    NoShots,
    #[error("exchange angle {0} outside [0, pi]")]
    BadExchangeAngle(f64),
    #[error("tomography suite needs all {expected} settings with equal shots, got {got}")]
    IncompleteSuite { expected: usize, got: usize },
    #[error("counts table is inconsistent: {0}")]
    BadCounts(String),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Tomography(#[from] TomographyError),
}

type Result<T> = std::result::Result<T, CircuitError>;

/// Gate vocabulary of the simulator and the QASM subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    H,
    X,
    Cnot,
    Swap,
    U3,
    S,
    Sdg,
    Measure,
    Barrier,
}

impl GateKind {
    fn param_count(self) -> usize {
        match self {
            GateKind::U3 => 3,
            _ => 0,
        }
    }

    fn target_count(self) -> Option<usize> {
        match self {
            GateKind::H | GateKind::X | GateKind::U3 | GateKind::S | GateKind::Sdg => Some(1),
            GateKind::Cnot | GateKind::Swap => Some(2),
            GateKind::Measure => Some(1),
            GateKind::Barrier => None,
        }
    }
}

/// One circuit instruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub params: Vec<f64>,
    pub targets: Vec<usize>,
    pub classical_target: Option<usize>,
}

impl Gate {
    fn plain(kind: GateKind, targets: Vec<usize>) -> Self {
        Gate { kind, params: vec![], targets, classical_target: None }
    }

    pub fn h(q: usize) -> Self {
        Gate::plain(GateKind::H, vec![q])
    }

    pub fn x(q: usize) -> Self {
        Gate::plain(GateKind::X, vec![q])
    }

    pub fn s(q: usize) -> Self {
        Gate::plain(GateKind::S, vec![q])
    }

    pub fn sdg(q: usize) -> Self {
        Gate::plain(GateKind::Sdg, vec![q])
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Gate::plain(GateKind::Cnot, vec![control, target])
    }

    pub fn swap(a: usize, b: usize) -> Self {
        Gate::plain(GateKind::Swap, vec![a, b])
    }

    pub fn u3(theta: f64, phi: f64, chi: f64, q: usize) -> Self {
        Gate { kind: GateKind::U3, params: vec![theta, phi, chi], targets: vec![q], classical_target: None }
    }

    pub fn measure(q: usize, c: usize) -> Self {
        Gate { kind: GateKind::Measure, params: vec![], targets: vec![q], classical_target: Some(c) }
    }

    pub fn barrier(qs: Vec<usize>) -> Self {
        Gate::plain(GateKind::Barrier, qs)
    }
}

/// Ordered gate list over a fixed register of qubits and classical bits.
///
/// Subset restriction: once a qubit is measured, no further gate may touch
/// it (barriers excepted), and each classical bit is written at most once.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    num_qubits: usize,
    num_clbits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(num_qubits: usize, num_clbits: usize) -> Self {
        Circuit { num_qubits, num_clbits, gates: vec![] }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn num_clbits(&self) -> usize {
        self.num_clbits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        if gate.params.len() != gate.kind.param_count() {
            return Err(CircuitError::BadParamCount {
                kind: gate.kind,
                expected: gate.kind.param_count(),
                got: gate.params.len(),
            });
        }
        if let Some(expected) = gate.kind.target_count() {
            if gate.targets.len() != expected {
                return Err(CircuitError::BadTargetCount {
                    kind: gate.kind,
                    expected,
                    got: gate.targets.len(),
                });
            }
        }
        for (i, &q) in gate.targets.iter().enumerate() {
            if q >= self.num_qubits || gate.targets[..i].contains(&q) {
                return Err(CircuitError::BadTarget(q, self.num_qubits));
            }
        }
        match gate.kind {
            GateKind::Measure => {
                let c = gate.classical_target.ok_or(CircuitError::MissingClassicalTarget)?;
                if c >= self.num_clbits {
                    return Err(CircuitError::BadClassicalTarget(c, self.num_clbits));
                }
                if self.measured_clbits().contains(&c) {
                    return Err(CircuitError::ClassicalTargetReused(c));
                }
            }
            _ => {
                if gate.classical_target.is_some() {
                    return Err(CircuitError::MissingClassicalTarget);
                }
            }
        }
        if gate.kind != GateKind::Barrier {
            let measured = self.measured_qubits();
            for &q in &gate.targets {
                if measured.contains(&q) {
                    return Err(CircuitError::GateAfterMeasure(q));
                }
            }
        }
        self.gates.push(gate);
        Ok(())
    }

    /// Qubit -> classical bit mapping of the measure gates, in gate order.
    pub fn measurements(&self) -> Vec<(usize, usize)> {
        self.gates
            .iter()
            .filter(|g| g.kind == GateKind::Measure)
            .map(|g| (g.targets[0], g.classical_target.expect("validated")))
            .collect()
    }

    fn measured_qubits(&self) -> Vec<usize> {
        self.measurements().iter().map(|&(q, _)| q).collect()
    }

    fn measured_clbits(&self) -> Vec<usize> {
        self.measurements().iter().map(|&(_, c)| c).collect()
    }

    /// Copy of the circuit with every measure gate removed.
    pub fn strip_measurements(&self) -> Circuit {
        Circuit {
            num_qubits: self.num_qubits,
            num_clbits: self.num_clbits,
            gates: self
                .gates
                .iter()
                .filter(|g| g.kind != GateKind::Measure)
                .cloned()
                .collect(),
        }
    }
}

/// Exact unitary matrix of a gate. Measure and barrier have none.
pub fn gate_matrix(g: &Gate) -> Result<DMatrix<C64>> {
    let c = |re: f64, im: f64| C64::new(re, im);
    match g.kind {
        GateKind::H => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            Ok(DMatrix::from_row_slice(2, 2, &[c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)]))
        }
        GateKind::X => {
            Ok(DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]))
        }
        GateKind::S => {
            Ok(DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)]))
        }
        GateKind::Sdg => {
            Ok(DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -1.0)]))
        }
        GateKind::U3 => {
            let (theta, phi, chi) = (g.params[0], g.params[1], g.params[2]);
            let (ct, st) = ((theta / 2.0).cos(), (theta / 2.0).sin());
            Ok(DMatrix::from_row_slice(2, 2, &[
                c(ct, 0.0),
                -C64::from_polar(st, chi),
                C64::from_polar(st, phi),
                C64::from_polar(ct, chi + phi),
            ]))
        }
        GateKind::Cnot => {
            // Control is the first target; basis order (control, target) MSB-first.
            let mut m = DMatrix::zeros(4, 4);
            m[(0, 0)] = c(1.0, 0.0);
            m[(1, 1)] = c(1.0, 0.0);
            m[(2, 3)] = c(1.0, 0.0);
            m[(3, 2)] = c(1.0, 0.0);
            Ok(m)
        }
        GateKind::Swap => {
            let mut m = DMatrix::zeros(4, 4);
            m[(0, 0)] = c(1.0, 0.0);
            m[(1, 2)] = c(1.0, 0.0);
            m[(2, 1)] = c(1.0, 0.0);
            m[(3, 3)] = c(1.0, 0.0);
            Ok(m)
        }
        GateKind::Measure | GateKind::Barrier => Err(CircuitError::NonUnitaryGate(g.kind)),
    }
}

fn apply_single(amplitudes: &mut DVector<C64>, u: &DMatrix<C64>, qubit: usize, n: usize) {
    let mask = 1usize << (n - 1 - qubit);
    for i in 0..amplitudes.len() {
        if i & mask == 0 {
            let j = i | mask;
            let a0 = amplitudes[i];
            let a1 = amplitudes[j];
            amplitudes[i] = u[(0, 0)] * a0 + u[(0, 1)] * a1;
            amplitudes[j] = u[(1, 0)] * a0 + u[(1, 1)] * a1;
        }
    }
}

fn apply_cnot(amplitudes: &mut DVector<C64>, control: usize, target: usize, n: usize) {
    let cmask = 1usize << (n - 1 - control);
    let tmask = 1usize << (n - 1 - target);
    for i in 0..amplitudes.len() {
        if i & cmask != 0 && i & tmask == 0 {
            amplitudes.swap_rows(i, i | tmask);
        }
    }
}

fn apply_swap(amplitudes: &mut DVector<C64>, a: usize, b: usize, n: usize) {
    let amask = 1usize << (n - 1 - a);
    let bmask = 1usize << (n - 1 - b);
    for i in 0..amplitudes.len() {
        if i & amask != 0 && i & bmask == 0 {
            amplitudes.swap_rows(i, (i & !amask) | bmask);
        }
    }
}

fn qubit_layout(n: usize) -> SubsystemLayout {
    SubsystemLayout::new((0..n).map(|q| Factor::qubit(format!("q{q}"))).collect())
        .expect("qubit registers are valid layouts")
}

/// Apply the unitary prefix of a circuit to `|0...0>`. Errors if any measure
/// gate is present (strip them first); barriers are no-ops.
pub fn run_statevector(c: &Circuit) -> Result<PureState> {
    let n = c.num_qubits;
    let mut amplitudes = DVector::zeros(1usize << n);
    amplitudes[0] = C64::new(1.0, 0.0);
    for gate in &c.gates {
        match gate.kind {
            GateKind::Measure => return Err(CircuitError::UnexpectedMeasure),
            GateKind::Barrier => {}
            GateKind::Cnot => apply_cnot(&mut amplitudes, gate.targets[0], gate.targets[1], n),
            GateKind::Swap => apply_swap(&mut amplitudes, gate.targets[0], gate.targets[1], n),
            _ => {
                let u = gate_matrix(gate)?;
                apply_single(&mut amplitudes, &u, gate.targets[0], n);
            }
        }
    }
    Ok(PureState::new(amplitudes, qubit_layout(n))?)
}

/// Outcome histogram of one measured circuit execution batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsTable {
    /// Per-measured-qubit axis labels of the setting this table belongs to.
    pub setting: Vec<Axis>,
    pub shots: u64,
    /// Outcome bitstring -> occurrences; bit 0 (first character) is
    /// classical bit 0.
    pub counts: BTreeMap<String, u64>,
}

impl CountsTable {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("counts tables serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: CountsTable =
            serde_json::from_str(text).map_err(|e| CircuitError::BadCounts(e.to_string()))?;
        if table.total() != table.shots {
            return Err(CircuitError::BadCounts(format!(
                "counts sum to {}, shots field says {}",
                table.total(),
                table.shots
            )));
        }
        Ok(table)
    }
}

fn render_bits(register: usize, width: usize) -> String {
    (0..width).map(|j| if register >> j & 1 == 1 { '1' } else { '0' }).collect()
}

/// Exact outcome distribution of the measured qubits: classical-register
/// value (bit j = clbit j) -> probability.
fn outcome_distribution(c: &Circuit) -> Result<Vec<(usize, f64)>> {
    let measurements = c.measurements();
    if measurements.is_empty() {
        return Err(CircuitError::NothingMeasured);
    }
    let psi = run_statevector(&c.strip_measurements())?;
    let n = c.num_qubits;
    let mut probs: BTreeMap<usize, f64> = BTreeMap::new();
    for (i, amp) in psi.amplitudes().iter().enumerate() {
        let p = amp.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let mut register = 0usize;
        for &(q, cl) in &measurements {
            if i >> (n - 1 - q) & 1 == 1 {
                register |= 1 << cl;
            }
        }
        *probs.entry(register).or_insert(0.0) += p;
    }
    Ok(probs.into_iter().collect())
}

/// Multinomial shot sampling of a measured circuit with a seeded,
/// counter-based PRNG; identical (seed, circuit, shots) triples give
/// identical tables.
pub fn sample_counts(c: &Circuit, shots: u64, seed: u64) -> Result<CountsTable> {
    sample_counts_with_setting(c, shots, seed, None)
}

fn sample_counts_with_setting(
    c: &Circuit,
    shots: u64,
    seed: u64,
    setting: Option<Vec<Axis>>,
) -> Result<CountsTable> {
    if shots == 0 {
        return Err(CircuitError::NoShots);
    }
    let dist = outcome_distribution(c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let width = c.num_clbits;
    for _ in 0..shots {
        let mut u: f64 = rng.gen();
        let mut drawn = dist[dist.len() - 1].0;
        for &(register, p) in &dist {
            if u < p {
                drawn = register;
                break;
            }
            u -= p;
        }
        *counts.entry(render_bits(drawn, width)).or_insert(0) += 1;
    }
    let setting =
        setting.unwrap_or_else(|| vec![Axis::Z; c.measurements().len()]);
    Ok(CountsTable { setting, shots, counts })
}

/// Gates that rotate an axis eigenbasis into the computational basis before
/// a z measurement: x -> [H], y -> [SDG, H], z -> [].
pub fn basis_change(axis: Axis, qubit: usize) -> Vec<Gate> {
    match axis {
        Axis::X => vec![Gate::h(qubit)],
        Axis::Y => vec![Gate::sdg(qubit), Gate::h(qubit)],
        Axis::Z => vec![],
    }
}

/// All 3^k axis settings over the measured qubits, lexicographic in
/// (x, y, z) per qubit.
pub fn axis_settings(k: usize) -> Vec<Vec<Axis>> {
    let mut settings = vec![vec![]];
    for _ in 0..k {
        let mut next = Vec::with_capacity(settings.len() * 3);
        for s in &settings {
            for axis in Axis::XYZ {
                let mut t = s.clone();
                t.push(axis);
                next.push(t);
            }
        }
        settings = next;
    }
    settings
}

/// Tomographic measurement suite: for every axis setting, the prefix circuit
/// extended with basis-change gates and measurements of `measured[i]` into
/// classical bit `i`.
pub fn tomography_suite(prefix: &Circuit, measured: &[usize]) -> Result<Vec<(Vec<Axis>, Circuit)>> {
    let mut out = Vec::new();
    for setting in axis_settings(measured.len()) {
        let mut c = Circuit::new(prefix.num_qubits, measured.len());
        for g in &prefix.gates {
            c.push(g.clone())?;
        }
        for (slot, (&q, &axis)) in measured.iter().zip(&setting).enumerate() {
            for g in basis_change(axis, q) {
                c.push(g)?;
            }
            c.push(Gate::measure(q, slot))?;
        }
        out.push((setting, c));
    }
    Ok(out)
}

/// Run the whole tomography suite with shot sampling. Each setting uses an
/// independent, deterministic PRNG stream of the base seed, so settings can
/// be reordered or parallelized without changing the result.
pub fn sample_suite(
    prefix: &Circuit,
    measured: &[usize],
    shots: u64,
    seed: u64,
) -> Result<Vec<CountsTable>> {
    let suite = tomography_suite(prefix, measured)?;
    let mut out = Vec::with_capacity(suite.len());
    for (index, (setting, circuit)) in suite.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        // Re-seed the per-setting sampler from the stream for determinism.
        let setting_seed = rng.gen::<u64>();
        out.push(sample_counts_with_setting(&circuit, shots, setting_seed, Some(setting))?);
    }
    Ok(out)
}

/// Empirical spin tomogram from a complete suite of counts tables (all 3^k
/// settings, equal shots). The result carries the shot count as metadata.
pub fn tomogram_from_counts(tables: &[CountsTable]) -> Result<SpinTomogram> {
    if tables.is_empty() {
        return Err(CircuitError::IncompleteSuite { expected: 1, got: 0 });
    }
    let k = tables[0].setting.len();
    let expected = 3usize.pow(k as u32);
    if tables.len() != expected {
        return Err(CircuitError::IncompleteSuite { expected, got: tables.len() });
    }
    let shots = tables[0].shots;
    let mut values = vec![vec![0.0f64; 1 << k]; expected];
    let mut seen = vec![false; expected];
    for table in tables {
        if table.setting.len() != k {
            return Err(CircuitError::BadCounts("mixed setting widths".into()));
        }
        if table.shots != shots {
            return Err(CircuitError::BadCounts("unequal shots across settings".into()));
        }
        if table.total() != table.shots {
            return Err(CircuitError::BadCounts(format!(
                "counts sum to {}, shots field says {}",
                table.total(),
                table.shots
            )));
        }
        let mut index = 0usize;
        for axis in &table.setting {
            index = index * 3
                + match axis {
                    Axis::X => 0,
                    Axis::Y => 1,
                    Axis::Z => 2,
                };
        }
        if seen[index] {
            return Err(CircuitError::BadCounts("duplicate setting".into()));
        }
        seen[index] = true;
        for (bits, &n) in &table.counts {
            if bits.len() != k || bits.chars().any(|ch| ch != '0' && ch != '1') {
                return Err(CircuitError::BadCounts(format!("bad outcome key `{bits}`")));
            }
            // Bitstring char j is clbit j = measured qubit j; the tomogram
            // packs outcome bits most-significant-first.
            let mut outcome = 0usize;
            for ch in bits.chars() {
                outcome = (outcome << 1) | (ch == '1') as usize;
            }
            values[index][outcome] += n as f64 / shots as f64;
        }
    }
    if seen.iter().any(|&s| !s) {
        return Err(CircuitError::IncompleteSuite { expected, got: tables.len() });
    }
    Ok(SpinTomogram { axes: vec![Axis::XYZ.to_vec(); k], values, shots: Some(shots) })
}

/// Exact spin tomogram of the measured qubits of a circuit (shot-free
/// reference for the sampled pipeline).
pub fn exact_spin_tomogram(prefix: &Circuit, measured: &[usize]) -> Result<SpinTomogram> {
    let psi = run_statevector(&prefix.strip_measurements())?;
    let labels: Vec<String> = measured.iter().map(|q| format!("q{q}")).collect();
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let rho = crate::hilbert::reduced_density(&psi, &refs)?;
    Ok(crate::tomography::spin_tomogram_xyz(&rho)?)
}

/// Two-qubit Bell preparation: H on qubit 0, CNOT 0 -> 1, giving
/// `(|00> + |11>)/sqrt(2)`.
pub fn build_bell_prep() -> Circuit {
    let mut c = Circuit::new(2, 0);
    c.push(Gate::h(0)).expect("static circuit");
    c.push(Gate::cnot(0, 1)).expect("static circuit");
    c
}

/// Four-qubit pairwise-entangled preparation, the state-preparation analogue
/// of the double TC initial state `psi0; psi0`.
///
/// Device-label mapping (topology is irrelevant off-hardware): our qubits
/// (0, 1, 2, 3) are the device's (q[2], q[3], q[0], q[4]); the device pairs
/// q[2]<->q[0] and q[3]<->q[4] become 0<->2 and 1<->3. Blocks for the
/// indicator are C = (0, 1) and D = (2, 3).
pub fn build_dtc_prep() -> Circuit {
    let mut c = Circuit::new(4, 0);
    c.push(Gate::h(0)).expect("static circuit");
    c.push(Gate::cnot(0, 2)).expect("static circuit");
    c.push(Gate::h(1)).expect("static circuit");
    c.push(Gate::cnot(1, 3)).expect("static circuit");
    c
}

/// Excitation-exchange block on (system, auxiliary): a two-qubit unitary
/// whose action on the one-excitation subspace equals the resonant JC
/// rotation at gt = theta, up to local phases:
/// `|1,0> -> cos(theta)|1,0> - i sin(theta)|0,1>` and symmetrically, with
/// `|0,0>` fixed.
///
/// Built from CNOT, U3(theta, 0, pi/2) and its conjugate transpose
/// U3(theta, pi/2, pi) (which at theta = pi coincides with the fixed gate
/// U3(pi, pi/2, pi) used alongside it).
fn push_exchange_block(c: &mut Circuit, system: usize, aux: usize, theta: f64) -> Result<()> {
    const FRAC_PI_2: f64 = std::f64::consts::FRAC_PI_2;
    const PI: f64 = std::f64::consts::PI;
    c.push(Gate::cnot(system, aux))?;
    c.push(Gate::cnot(aux, system))?;
    c.push(Gate::u3(theta, FRAC_PI_2, PI, system))?; // U3(theta,0,pi/2)^dagger
    c.push(Gate::u3(PI, FRAC_PI_2, PI, system))?;
    c.push(Gate::cnot(aux, system))?;
    c.push(Gate::u3(PI, FRAC_PI_2, PI, system))?;
    c.push(Gate::u3(theta, 0.0, FRAC_PI_2, system))?;
    c.push(Gate::cnot(system, aux))?;
    Ok(())
}

/// Equivalent circuit of the double JC model at scaled time gt = theta.
///
/// Device-label mapping: our qubits (0, 1, 2, 3) are the device's
/// (q[0], q[2], q[3], q[4]). Qubits 0 and 3 follow the atoms; 1 and 2 are
/// the single-photon auxiliaries. The initial entangled pair is prepared via
/// H on 3, CNOT 3 -> 1 and SWAP 1 -> 0; then one exchange block acts on each
/// (system, auxiliary) pair (0, 1) and (3, 2).
pub fn build_djc_equiv(theta: f64) -> Result<Circuit> {
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return Err(CircuitError::BadExchangeAngle(theta));
    }
    let mut c = Circuit::new(4, 0);
    c.push(Gate::h(3))?;
    c.push(Gate::cnot(3, 1))?;
    c.push(Gate::swap(1, 0))?;
    push_exchange_block(&mut c, 0, 1, theta)?;
    push_exchange_block(&mut c, 3, 2, theta)?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indicators::{mis_from_spin_tomogram, xi_tei, xi_tei_spins};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, LN_2, PI};

    fn c64(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn u3_matches_reference_values() {
        // U3(pi, 0, pi/2) = [[0, -i], [1, 0]].
        let m = gate_matrix(&Gate::u3(PI, 0.0, FRAC_PI_2, 0)).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[
            c64(0.0, 0.0),
            c64(0.0, -1.0),
            c64(1.0, 0.0),
            c64(0.0, 0.0),
        ]);
        assert!((m.clone() - expected).norm() < 1e-15);
        // U3(pi, pi/2, pi) is its conjugate transpose.
        let dagger = gate_matrix(&Gate::u3(PI, FRAC_PI_2, PI, 0)).unwrap();
        assert!((dagger - m.adjoint()).norm() < 1e-15);
    }

    #[test]
    fn u3_dagger_identity_holds_for_general_theta() {
        for theta in [0.0, 0.3, FRAC_PI_2, 2.0, PI] {
            let v = gate_matrix(&Gate::u3(theta, 0.0, FRAC_PI_2, 0)).unwrap();
            let vd = gate_matrix(&Gate::u3(theta, FRAC_PI_2, PI, 0)).unwrap();
            assert!((vd - v.adjoint()).norm() < 1e-14, "theta = {theta}");
        }
    }

    #[test]
    fn sdg_action_on_one() {
        let m = gate_matrix(&Gate::sdg(0)).unwrap();
        let one = DVector::from_vec(vec![c64(0.0, 0.0), c64(1.0, 0.0)]);
        let out = m * one;
        assert!((out[1] - c64(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn all_gate_matrices_are_unitary() {
        let gates = vec![
            Gate::h(0),
            Gate::x(0),
            Gate::s(0),
            Gate::sdg(0),
            Gate::u3(0.7, 1.1, 2.3, 0),
            Gate::cnot(0, 1),
            Gate::swap(0, 1),
        ];
        for g in gates {
            let m = gate_matrix(&g).unwrap();
            let d = m.nrows();
            let res = (m.adjoint() * &m - DMatrix::identity(d, d)).norm();
            assert!(res < 1e-12, "{:?}: residual {res}", g.kind);
        }
        assert!(matches!(
            gate_matrix(&Gate::measure(0, 0)),
            Err(CircuitError::NonUnitaryGate(GateKind::Measure))
        ));
    }

    #[test]
    fn empty_circuit_gives_all_zero_state() {
        let psi = run_statevector(&Circuit::new(3, 0)).unwrap();
        assert!((psi.amplitudes()[0] - c64(1.0, 0.0)).norm() < 1e-15);
        assert!((psi.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bell_prep_statevector() {
        let psi = run_statevector(&build_bell_prep()).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((psi.amplitudes()[0] - c64(s, 0.0)).norm() < 1e-12);
        assert!((psi.amplitudes()[3] - c64(s, 0.0)).norm() < 1e-12);
        assert!(psi.amplitudes()[1].norm() < 1e-12);
        assert!(psi.amplitudes()[2].norm() < 1e-12);
    }

    #[test]
    fn dtc_prep_matches_tensor_assembly() {
        let psi = run_statevector(&build_dtc_prep()).unwrap();
        // Bell(0,2) (x) Bell(1,3): amplitude 1/2 on indices with bit0 == bit2
        // and bit1 == bit3.
        for i in 0..16 {
            let b = |q: usize| (i >> (3 - q)) & 1;
            let expected = if b(0) == b(2) && b(1) == b(3) { 0.25f64.sqrt() } else { 0.0 };
            assert!(
                (psi.amplitudes()[i] - c64(expected, 0.0)).norm() < 1e-12,
                "index {i}"
            );
        }
    }

    #[test]
    fn statevector_norm_is_preserved() {
        let mut c = Circuit::new(3, 0);
        c.push(Gate::h(0)).unwrap();
        c.push(Gate::u3(1.1, 0.3, 2.2, 1)).unwrap();
        c.push(Gate::cnot(0, 2)).unwrap();
        c.push(Gate::swap(1, 2)).unwrap();
        c.push(Gate::x(0)).unwrap();
        c.push(Gate::s(2)).unwrap();
        let psi = run_statevector(&c).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn circuit_invariants_are_enforced() {
        let mut c = Circuit::new(2, 1);
        assert!(matches!(
            c.push(Gate::cnot(0, 0)),
            Err(CircuitError::BadTarget(0, 2))
        ));
        assert!(matches!(
            c.push(Gate::h(5)),
            Err(CircuitError::BadTarget(5, 2))
        ));
        c.push(Gate::h(0)).unwrap();
        c.push(Gate::measure(0, 0)).unwrap();
        assert!(matches!(
            c.push(Gate::h(0)),
            Err(CircuitError::GateAfterMeasure(0))
        ));
        assert!(matches!(
            c.push(Gate::measure(1, 0)),
            Err(CircuitError::ClassicalTargetReused(0))
        ));
        c.push(Gate::barrier(vec![0, 1])).unwrap();
    }

    #[test]
    fn measured_bell_counts() {
        let prefix = build_bell_prep();
        let mut c = Circuit::new(2, 2);
        for g in prefix.gates() {
            c.push(g.clone()).unwrap();
        }
        c.push(Gate::measure(0, 0)).unwrap();
        c.push(Gate::measure(1, 1)).unwrap();

        let table = sample_counts(&c, 8192, 42).unwrap();
        assert_eq!(table.total(), 8192);
        let f00 = *table.counts.get("00").unwrap_or(&0) as f64 / 8192.0;
        let f11 = *table.counts.get("11").unwrap_or(&0) as f64 / 8192.0;
        assert!((f00 - 0.5).abs() < 0.02);
        assert!((f11 - 0.5).abs() < 0.02);
        assert_eq!(table.counts.get("01"), None);
        assert_eq!(table.counts.get("10"), None);

        let again = sample_counts(&c, 8192, 42).unwrap();
        assert_eq!(table, again);
        let other = sample_counts(&c, 8192, 43).unwrap();
        assert_ne!(table, other);

        let single = sample_counts(&c, 1, 7).unwrap();
        assert_eq!(single.total(), 1);
        assert_eq!(single.counts.len(), 1);

        assert!(matches!(sample_counts(&c, 0, 1), Err(CircuitError::NoShots)));
    }

    #[test]
    fn basis_change_gate_lists() {
        assert!(basis_change(Axis::Z, 0).is_empty());
        assert_eq!(basis_change(Axis::X, 0), vec![Gate::h(0)]);
        assert_eq!(basis_change(Axis::Y, 0), vec![Gate::sdg(0), Gate::h(0)]);

        // |+> then x-basis measurement: outcome 0 with probability 1.
        let mut c = Circuit::new(1, 1);
        c.push(Gate::h(0)).unwrap();
        for g in basis_change(Axis::X, 0) {
            c.push(g).unwrap();
        }
        c.push(Gate::measure(0, 0)).unwrap();
        let t = sample_counts(&c, 64, 5).unwrap();
        assert_eq!(t.counts.get("0"), Some(&64));

        // (|0> + i|1>)/sqrt(2) then y-basis measurement: outcome 0 surely.
        let mut c = Circuit::new(1, 1);
        c.push(Gate::h(0)).unwrap();
        c.push(Gate::s(0)).unwrap();
        for g in basis_change(Axis::Y, 0) {
            c.push(g).unwrap();
        }
        c.push(Gate::measure(0, 0)).unwrap();
        let t = sample_counts(&c, 64, 5).unwrap();
        assert_eq!(t.counts.get("0"), Some(&64));
    }

    #[test]
    fn sampled_tomogram_estimates_bell_indicator() {
        let prefix = build_bell_prep();
        let tables = sample_suite(&prefix, &[0, 1], 8192, 11).unwrap();
        assert_eq!(tables.len(), 9);
        let tomogram = tomogram_from_counts(&tables).unwrap();
        assert_eq!(tomogram.shots, Some(8192));
        let values = mis_from_spin_tomogram(&tomogram, vec![0], vec![1]).unwrap();
        let estimate = xi_tei(&values).unwrap();
        assert!((estimate - LN_2 / 3.0).abs() < 0.005, "estimate {estimate}");
    }

    #[test]
    fn deterministic_circuit_gives_exact_counts_table() {
        let mut c = Circuit::new(2, 2);
        c.push(Gate::x(0)).unwrap();
        c.push(Gate::measure(0, 0)).unwrap();
        c.push(Gate::measure(1, 1)).unwrap();
        let t = sample_counts(&c, 512, 3).unwrap();
        assert_eq!(t.counts.len(), 1);
        assert_eq!(t.counts.get("10"), Some(&512));
    }

    #[test]
    fn suite_probabilities_sum_to_one_and_match_exact() {
        let prefix = build_bell_prep();
        let tables = sample_suite(&prefix, &[0, 1], 4096, 9).unwrap();
        let sampled = tomogram_from_counts(&tables).unwrap();
        for row in &sampled.values {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let exact = exact_spin_tomogram(&prefix, &[0, 1]).unwrap();
        for (srow, erow) in sampled.values.iter().zip(&exact.values) {
            for (s, e) in srow.iter().zip(erow) {
                assert!((s - e).abs() < 0.05);
            }
        }
    }

    #[test]
    fn incomplete_suites_are_rejected() {
        let prefix = build_bell_prep();
        let mut tables = sample_suite(&prefix, &[0, 1], 128, 1).unwrap();
        tables.pop();
        assert!(matches!(
            tomogram_from_counts(&tables),
            Err(CircuitError::IncompleteSuite { expected: 9, got: 8 })
        ));
    }

    #[test]
    fn bell_prep_exact_indicator() {
        let psi = run_statevector(&build_bell_prep()).unwrap();
        let rho = crate::hilbert::reduced_density(&psi, &["q0", "q1"]).unwrap();
        let xi = xi_tei_spins(&rho, &["q0"], &["q1"]).unwrap();
        assert!((xi - LN_2 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn dtc_prep_exact_indicator() {
        let psi = run_statevector(&build_dtc_prep()).unwrap();
        let rho =
            crate::hilbert::reduced_density(&psi, &["q0", "q1", "q2", "q3"]).unwrap();
        let xi = xi_tei_spins(&rho, &["q0", "q1"], &["q2", "q3"]).unwrap();
        assert!((xi - 2.0 * LN_2 / 3.0).abs() < 1e-10);
        assert!((xi - 0.4621).abs() < 1e-3);
    }

    #[test]
    fn djc_equiv_at_zero_and_pi_restores_bell_indicator() {
        for theta in [0.0, PI] {
            let circuit = build_djc_equiv(theta).unwrap();
            let psi = run_statevector(&circuit).unwrap();
            let rho = crate::hilbert::reduced_density(&psi, &["q0", "q3"]).unwrap();
            let xi = xi_tei_spins(&rho, &["q0"], &["q3"]).unwrap();
            assert!((xi - LN_2 / 3.0).abs() < 1e-6, "theta = {theta}: {xi}");
        }
    }

    #[test]
    fn sampling_converges_in_total_variation() {
        // TV distance between empirical frequencies and the exact outcome
        // distribution stays below 5/sqrt(shots) for shot counts 2^10..2^13.
        let mut prefix = Circuit::new(2, 0);
        prefix.push(Gate::h(0)).unwrap();
        prefix.push(Gate::u3(1.1, 0.4, 2.0, 1)).unwrap();
        prefix.push(Gate::cnot(0, 1)).unwrap();
        let mut c = Circuit::new(2, 2);
        for g in prefix.gates() {
            c.push(g.clone()).unwrap();
        }
        c.push(Gate::measure(0, 0)).unwrap();
        c.push(Gate::measure(1, 1)).unwrap();

        let psi = run_statevector(&prefix).unwrap();
        let exact: Vec<f64> = psi.amplitudes().iter().map(|a| a.norm_sqr()).collect();
        for (k, &shots) in [1024u64, 2048, 4096, 8192].iter().enumerate() {
            let table = sample_counts(&c, shots, 1000 + k as u64).unwrap();
            let mut tv = 0.0;
            for (idx, &p) in exact.iter().enumerate() {
                // Amplitude index bit order equals the bitstring order here
                // (qubit i measured into clbit i).
                let key: String =
                    (0..2).map(|q| if idx >> (1 - q) & 1 == 1 { '1' } else { '0' }).collect();
                let f = *table.counts.get(&key).unwrap_or(&0) as f64 / shots as f64;
                tv += 0.5 * (f - p).abs();
            }
            let bound = 5.0 / (shots as f64).sqrt();
            assert!(tv <= bound, "shots {shots}: tv {tv} > bound {bound}");
        }
    }

    #[test]
    fn djc_equiv_at_pi_sampled_estimate() {
        let circuit = build_djc_equiv(PI).unwrap();
        let tables = sample_suite(&circuit, &[0, 3], 8192, 21).unwrap();
        assert_eq!(tables.len(), 9);
        let tomogram = tomogram_from_counts(&tables).unwrap();
        let values = mis_from_spin_tomogram(&tomogram, vec![0], vec![1]).unwrap();
        let estimate = xi_tei(&values).unwrap();
        assert!((estimate - 0.2310).abs() < 0.005, "estimate {estimate}");
    }

    #[test]
    fn djc_equiv_rejects_out_of_range_angle() {
        assert!(matches!(
            build_djc_equiv(-0.1),
            Err(CircuitError::BadExchangeAngle(_))
        ));
        assert!(matches!(
            build_djc_equiv(3.5),
            Err(CircuitError::BadExchangeAngle(_))
        ));
    }

    /// 4x4 unitary of the exchange block alone.
    fn exchange_block_unitary(theta: f64) -> DMatrix<C64> {
        let mut c = Circuit::new(2, 0);
        push_exchange_block(&mut c, 0, 1, theta).unwrap();
        let mut u = DMatrix::identity(4, 4);
        for col in 0..4 {
            let mut amp = DVector::zeros(4);
            amp[col] = c64(1.0, 0.0);
            for gate in c.gates() {
                match gate.kind {
                    GateKind::Cnot => apply_cnot(&mut amp, gate.targets[0], gate.targets[1], 2),
                    GateKind::Swap => apply_swap(&mut amp, gate.targets[0], gate.targets[1], 2),
                    GateKind::Barrier => {}
                    _ => {
                        let m = gate_matrix(gate).unwrap();
                        apply_single(&mut amp, &m, gate.targets[0], 2);
                    }
                }
            }
            u.set_column(col, &amp);
        }
        u
    }

    /// Local-phase-gauge comparison of two unitaries restricted to the
    /// subspace spanned by the given basis indices: all moduli must match,
    /// and where a 2x2 block has four nonzero entries, the gauge-invariant
    /// cross-ratio phase must match too.
    fn phase_gauge_equal(
        a: &DMatrix<C64>,
        b: &DMatrix<C64>,
        basis: &[usize],
        tol: f64,
    ) -> bool {
        for &i in basis {
            for &j in basis {
                if (a[(i, j)].norm() - b[(i, j)].norm()).abs() > tol {
                    return false;
                }
            }
        }
        // Cross-ratio over the one-excitation 2x2 block (last two indices).
        let (p, q) = (basis[1], basis[2]);
        let all_nonzero = [a[(p, p)], a[(p, q)], a[(q, p)], a[(q, q)]]
            .iter()
            .all(|z| z.norm() > tol);
        if all_nonzero {
            let ra = a[(p, p)] * a[(q, q)] / (a[(p, q)] * a[(q, p)]);
            let rb = b[(p, p)] * b[(q, q)] / (b[(p, q)] * b[(q, p)]);
            if (ra - rb).norm() > 1e-7 {
                return false;
            }
        }
        true
    }

    #[test]
    fn exchange_block_matches_jc_rotation_up_to_local_phases() {
        // Indices in (system, aux) order: |00> = 0, |01> = 1, |10> = 2.
        let basis = [0usize, 2, 1];
        for theta in [0.0, FRAC_PI_4, FRAC_PI_2, 1.3, PI] {
            let u = exchange_block_unitary(theta);
            // Target JC rotation: |10> -> cos|10> - i sin|01>, |00> fixed.
            let mut target = DMatrix::identity(4, 4);
            target[(2, 2)] = c64(theta.cos(), 0.0);
            target[(1, 2)] = c64(0.0, -theta.sin());
            target[(2, 1)] = c64(0.0, -theta.sin());
            target[(1, 1)] = c64(theta.cos(), 0.0);
            assert!(
                phase_gauge_equal(&u, &target, &basis, 1e-9),
                "theta = {theta}\nu = {u}"
            );
            // No leakage between the zero- and one-excitation sectors.
            assert!(u[(1, 0)].norm() < 1e-12);
            assert!(u[(2, 0)].norm() < 1e-12);
            assert!(u[(0, 1)].norm() < 1e-12);
            assert!(u[(0, 2)].norm() < 1e-12);
        }
    }
}
