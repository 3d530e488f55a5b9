//! Builders for the double Jaynes-Cummings and double Tavis-Cummings
//! Hamiltonians, their initial states, and conserved-quantity operators.
//!
//! Units: the coupling strength `g` fixes the unit system (g = 1 by default)
//! and times are quoted as the dimensionless `gt`. Only the detuning
//! `delta = omega - omega0` matters for the entanglement dynamics, so the
//! default evolution frame is the interaction frame,
//! `H_int = -delta * sum_k sigma_kz + (couplings)`, with the free field part
//! removed. Lab-frame builders are provided as well; the two frames differ by
//! factor-local unitaries, so every mutual-information quantity agrees
//! between them at equal times (tested). Spin-tomogram axes are interpreted
//! in the interaction frame.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::hilbert::{
    self, embed_matrix, Factor, HermitianOperator, HilbertError, PureState, SubsystemLayout,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("coupling strength g must be positive, got {0}")]
    NonPositiveCoupling(f64),
    #[error("Fock truncation n_max = {n_max} is too small; this model/state needs at least {required}")]
    TruncationTooSmall { n_max: usize, required: usize },
    #[error("unknown atom block name `{0}` (expected `psi0` or `phi0`)")]
    UnknownBlock(String),
    #[error("initial-state spec does not fit the layout: {0}")]
    SpecShape(String),
    #[error("qubit `{0}` is not coupled to the given field group")]
    UngroupedQubit(String),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

type Result<T> = std::result::Result<T, ModelError>;

/// Physical parameters in units of the coupling strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Field frequency (units of g).
    pub omega: f64,
    /// Atomic transition frequency (units of g).
    pub omega0: f64,
    /// Coupling strength; 1 fixes the unit system.
    pub g: f64,
    /// Fock truncation per field mode (photon numbers 0..=n_max).
    pub n_max: usize,
}

impl ModelParams {
    pub fn new(omega: f64, omega0: f64, g: f64, n_max: usize) -> Result<Self> {
        if g <= 0.0 {
            return Err(ModelError::NonPositiveCoupling(g));
        }
        Ok(ModelParams { omega, omega0, g, n_max })
    }

    /// Parameters specified by detuning alone, as in the source experiments.
    /// The individual frequencies are irrelevant in the interaction frame;
    /// for lab-frame builds the convention omega0 = 1, omega = 1 + delta is
    /// used.
    pub fn with_delta(delta: f64, n_max: usize) -> Self {
        ModelParams { omega: 1.0 + delta, omega0: 1.0, g: 1.0, n_max }
    }

    /// Detuning `omega - omega0`; exact by construction.
    pub fn delta(&self) -> f64 {
        self.omega - self.omega0
    }
}

/// Layout of the double JC model: fields A, B and qubits C, D.
pub fn djc_layout(n_max: usize) -> SubsystemLayout {
    SubsystemLayout::new(vec![
        Factor::field("A", n_max + 1),
        Factor::field("B", n_max + 1),
        Factor::qubit("C"),
        Factor::qubit("D"),
    ])
    .expect("static layout")
}

/// Layout of the double TC model: fields A, B and qubits C1, C2, D1, D2.
pub fn dtc_layout(n_max: usize) -> SubsystemLayout {
    SubsystemLayout::new(vec![
        Factor::field("A", n_max + 1),
        Factor::field("B", n_max + 1),
        Factor::qubit("C1"),
        Factor::qubit("C2"),
        Factor::qubit("D1"),
        Factor::qubit("D2"),
    ])
    .expect("static layout")
}

fn coupling_term(
    layout: &SubsystemLayout,
    field: &str,
    qubit: &str,
    g: f64,
) -> Result<DMatrix<C64>> {
    let fp = layout.position(field)?;
    let qp = layout.position(qubit)?;
    let dim = layout.factors()[fp].dim();
    let a = hilbert::ops::annihilation(dim);
    let term = embed_matrix(&a.adjoint(), fp, layout) * embed_matrix(&hilbert::ops::sigma_minus(), qp, layout)
        + embed_matrix(&a, fp, layout) * embed_matrix(&hilbert::ops::sigma_plus(), qp, layout);
    Ok(term * C64::new(g, 0.0))
}

/// Model wiring: which qubits couple to which field.
fn djc_pairs() -> [(&'static str, Vec<&'static str>); 2] {
    [("A", vec!["C"]), ("B", vec!["D"])]
}

fn dtc_pairs() -> [(&'static str, Vec<&'static str>); 2] {
    [("A", vec!["C1", "C2"]), ("B", vec!["D1", "D2"])]
}

fn build_hamiltonian(
    params: &ModelParams,
    layout: &SubsystemLayout,
    pairs: &[(&str, Vec<&str>)],
    interaction_frame: bool,
) -> Result<HermitianOperator> {
    if params.g <= 0.0 {
        return Err(ModelError::NonPositiveCoupling(params.g));
    }
    let d = layout.total_dim();
    let mut h = DMatrix::<C64>::zeros(d, d);
    for (field, qubits) in pairs {
        let fp = layout.position(field)?;
        let dim = layout.factors()[fp].dim();
        if !interaction_frame {
            h += embed_matrix(&hilbert::ops::number(dim), fp, layout) * C64::new(params.omega, 0.0);
        }
        for qubit in qubits {
            let qp = layout.position(qubit)?;
            let sz = embed_matrix(&hilbert::ops::sigma_z(), qp, layout);
            if interaction_frame {
                h += sz * C64::new(-params.delta(), 0.0);
            } else {
                h += sz * C64::new(params.omega0, 0.0);
            }
            h += coupling_term(layout, field, qubit, params.g)?;
        }
    }
    Ok(HermitianOperator::new(h, layout.clone())?)
}

/// Lab-frame double JC Hamiltonian
/// `sum_j omega a_j^dag a_j + (1/2) sum_k omega0 sigma_kz(full) + couplings`
/// on the layout `[A, B, C, D]`.
pub fn build_hdjc(params: &ModelParams) -> Result<HermitianOperator> {
    if params.n_max < 1 {
        return Err(ModelError::TruncationTooSmall { n_max: params.n_max, required: 1 });
    }
    build_hamiltonian(params, &djc_layout(params.n_max), &djc_pairs(), false)
}

/// Interaction-frame double JC Hamiltonian
/// `-delta sum_k sigma_kz + couplings`.
pub fn build_hdjc_interaction(params: &ModelParams) -> Result<HermitianOperator> {
    if params.n_max < 1 {
        return Err(ModelError::TruncationTooSmall { n_max: params.n_max, required: 1 });
    }
    build_hamiltonian(params, &djc_layout(params.n_max), &djc_pairs(), true)
}

/// Lab-frame double TC Hamiltonian on the layout `[A, B, C1, C2, D1, D2]`.
pub fn build_hdtc(params: &ModelParams) -> Result<HermitianOperator> {
    if params.n_max < 1 {
        return Err(ModelError::TruncationTooSmall { n_max: params.n_max, required: 1 });
    }
    build_hamiltonian(params, &dtc_layout(params.n_max), &dtc_pairs(), false)
}

/// Interaction-frame double TC Hamiltonian.
pub fn build_hdtc_interaction(params: &ModelParams) -> Result<HermitianOperator> {
    if params.n_max < 1 {
        return Err(ModelError::TruncationTooSmall { n_max: params.n_max, required: 1 });
    }
    build_hamiltonian(params, &dtc_layout(params.n_max), &dtc_pairs(), true)
}

/// Single JC pair `[field, qubit]` in the chosen frame; used as the
/// factorization oracle for the double JC model and by the equivalent-circuit
/// checks.
pub fn build_jc_pair_interaction(
    params: &ModelParams,
    field: &str,
    qubit: &str,
) -> Result<HermitianOperator> {
    if params.n_max < 1 {
        return Err(ModelError::TruncationTooSmall { n_max: params.n_max, required: 1 });
    }
    let layout = SubsystemLayout::new(vec![
        Factor::field(field, params.n_max + 1),
        Factor::qubit(qubit),
    ])?;
    build_hamiltonian(params, &layout, &[(field, vec![qubit])], true)
}

/// The two initially entangled atom-pair states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomBlock {
    /// `(|g g> + |e e>)/sqrt(2)`
    Psi0,
    /// `(|g e> + |e g>)/sqrt(2)`
    Phi0,
}

impl AtomBlock {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "psi0" => Ok(AtomBlock::Psi0),
            "phi0" => Ok(AtomBlock::Phi0),
            other => Err(ModelError::UnknownBlock(other.to_string())),
        }
    }

    /// Branches as (first-atom occupation, second-atom occupation, amplitude),
    /// with occupation 0 = e, 1 = g.
    fn branches(self) -> [(usize, usize, f64); 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            AtomBlock::Psi0 => [(1, 1, s), (0, 0, s)],
            AtomBlock::Phi0 => [(1, 0, s), (0, 1, s)],
        }
    }
}

/// Initial-state specification: per-field Fock labels plus one atom block for
/// the double JC model (pair (C, D)) or an ordered pair of blocks for the
/// double TC model (pairings (C1, D1) and (C2, D2)).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitialStateSpec {
    pub field_occupations: Vec<usize>,
    pub atom_blocks: Vec<AtomBlock>,
}

impl InitialStateSpec {
    pub fn djc(block: AtomBlock) -> Self {
        InitialStateSpec { field_occupations: vec![0, 0], atom_blocks: vec![block] }
    }

    pub fn dtc(block1: AtomBlock, block2: AtomBlock) -> Self {
        InitialStateSpec { field_occupations: vec![0, 0], atom_blocks: vec![block1, block2] }
    }
}

/// Atom-pair wiring per block for a layout: (first atom, second atom).
fn block_pairs(layout: &SubsystemLayout) -> Result<Vec<(&'static str, &'static str)>> {
    let labels: Vec<&str> = layout.factors().iter().map(|f| f.label()).collect();
    if labels == ["A", "B", "C", "D"] {
        Ok(vec![("C", "D")])
    } else if labels == ["A", "B", "C1", "C2", "D1", "D2"] {
        Ok(vec![("C1", "D1"), ("C2", "D2")])
    } else {
        Err(ModelError::SpecShape(format!("unrecognized model layout {labels:?}")))
    }
}

/// Build the full-system initial state, e.g. `|0;0;psi0>`.
///
/// Validates that the Fock truncation can hold every excitation the dynamics
/// can push into a cavity (each atom pair can deposit one photon per side),
/// which keeps the truncation exact.
pub fn initial_state(spec: &InitialStateSpec, layout: &SubsystemLayout) -> Result<PureState> {
    let pairs = block_pairs(layout)?;
    if spec.atom_blocks.len() != pairs.len() {
        return Err(ModelError::SpecShape(format!(
            "layout expects {} atom block(s), spec has {}",
            pairs.len(),
            spec.atom_blocks.len()
        )));
    }
    let n_fields = layout
        .factors()
        .iter()
        .filter(|f| f.kind() == hilbert::FactorKind::Field)
        .count();
    if spec.field_occupations.len() != n_fields {
        return Err(ModelError::SpecShape(format!(
            "layout has {} field(s), spec has {} occupation(s)",
            n_fields,
            spec.field_occupations.len()
        )));
    }
    // Excitation capacity: per cavity, initial photons plus one per coupled
    // excitable atom must fit below the truncation.
    for (f_idx, field_label) in ["A", "B"].iter().enumerate() {
        let dim = layout.factor(field_label)?.dim();
        let required = spec.field_occupations[f_idx] + pairs.len();
        if dim < required + 1 {
            return Err(ModelError::TruncationTooSmall { n_max: dim - 1, required });
        }
    }

    let mut amplitudes = DVector::<C64>::zeros(layout.total_dim());
    let field_positions = [layout.position("A")?, layout.position("B")?];
    // Expand the product of block superpositions into basis kets.
    let n_blocks = spec.atom_blocks.len();
    let mut choice = vec![0usize; n_blocks];
    loop {
        let mut occ = vec![0usize; layout.len()];
        occ[field_positions[0]] = spec.field_occupations[0];
        occ[field_positions[1]] = spec.field_occupations[1];
        let mut amp = 1.0;
        for (b, (&c, block)) in choice.iter().zip(&spec.atom_blocks).enumerate() {
            let (first, second, a) = block.branches()[c];
            let (c_label, d_label) = pairs[b];
            occ[layout.position(c_label)?] = first;
            occ[layout.position(d_label)?] = second;
            amp *= a;
        }
        amplitudes[layout.basis_index(&occ)?] += C64::new(amp, 0.0);
        let mut k = 0;
        loop {
            if k == n_blocks {
                return Ok(PureState::new(amplitudes, layout.clone())?);
            }
            choice[k] += 1;
            if choice[k] < 2 {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

/// Excitation-number operator `a^dag a + sum_k sigma_kz` of a field and its
/// coupled qubits (constant offsets dropped). Commutes with both model
/// Hamiltonians when the wiring matches.
pub fn excitation_operator(
    layout: &SubsystemLayout,
    field: &str,
    qubits: &[&str],
) -> Result<HermitianOperator> {
    let known_pairs: Vec<(&str, Vec<&str>)> = if layout.len() == 4 {
        djc_pairs().to_vec()
    } else {
        dtc_pairs().to_vec()
    };
    let expected = known_pairs
        .iter()
        .find(|(f, _)| *f == field)
        .ok_or_else(|| HilbertError::UnknownLabel(field.to_string()))?;
    for q in qubits {
        if !expected.1.contains(q) {
            return Err(ModelError::UngroupedQubit(q.to_string()));
        }
    }
    let fp = layout.position(field)?;
    let dim = layout.factors()[fp].dim();
    let mut n = embed_matrix(&hilbert::ops::number(dim), fp, layout);
    for q in qubits {
        n += embed_matrix(&hilbert::ops::sigma_z(), layout.position(q)?, layout);
    }
    Ok(HermitianOperator::new(n, layout.clone())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{
        evolve, expectation, partial_trace, reduced_density, svne, LogBase, Propagator,
    };
    use std::f64::consts::PI;

    fn commutator_norm(a: &HermitianOperator, b: &HermitianOperator) -> f64 {
        (a.matrix() * b.matrix() - b.matrix() * a.matrix()).norm()
    }

    #[test]
    fn hdjc_single_interaction_matrix_element() {
        // <0,0,e,g| H |1,0,g,g> = g
        let params = ModelParams::with_delta(0.0, 1);
        let h = build_hdjc(&params).unwrap();
        let layout = h.layout().clone();
        let row = layout.basis_index(&[0, 0, 0, 1]).unwrap();
        let col = layout.basis_index(&[1, 0, 1, 1]).unwrap();
        assert!((h.matrix()[(row, col)] - C64::new(params.g, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn hdjc_ground_diagonal_is_minus_omega0() {
        // <0,0,g,g| H |0,0,g,g> = -omega0 (two ground atoms at -omega0/2 each).
        let params = ModelParams::new(1.3, 0.9, 1.0, 1).unwrap();
        let h = build_hdjc(&params).unwrap();
        let idx = h.layout().basis_index(&[0, 0, 1, 1]).unwrap();
        assert!((h.matrix()[(idx, idx)] - C64::new(-params.omega0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn hdjc_conserves_pair_excitation() {
        let params = ModelParams::with_delta(0.7, 3);
        let h = build_hdjc(&params).unwrap();
        let n_pair = excitation_operator(h.layout(), "A", &["C"]).unwrap();
        assert!(commutator_norm(&h, &n_pair) < 1e-12);
        let h_int = build_hdjc_interaction(&params).unwrap();
        assert!(commutator_norm(&h_int, &n_pair) < 1e-12);
    }

    #[test]
    fn hdjc_rejects_zero_truncation() {
        let params = ModelParams { omega: 1.0, omega0: 1.0, g: 1.0, n_max: 0 };
        assert!(matches!(
            build_hdjc(&params),
            Err(ModelError::TruncationTooSmall { .. })
        ));
    }

    #[test]
    fn hdtc_single_interaction_matrix_element() {
        // <0,0,e,g,g,g| H |1,0,g,g,g,g> = g
        let params = ModelParams::with_delta(0.0, 2);
        let h = build_hdtc(&params).unwrap();
        let layout = h.layout().clone();
        let row = layout.basis_index(&[0, 0, 0, 1, 1, 1]).unwrap();
        let col = layout.basis_index(&[1, 0, 1, 1, 1, 1]).unwrap();
        assert!((h.matrix()[(row, col)] - C64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn hdtc_is_hermitian_and_conserves_cavity_excitation() {
        let params = ModelParams::with_delta(1.0, 2);
        let h = build_hdtc(&params).unwrap();
        let residual = (h.matrix() - h.matrix().adjoint()).norm();
        assert!(residual < 1e-12);
        let n_a = excitation_operator(h.layout(), "A", &["C1", "C2"]).unwrap();
        assert!(commutator_norm(&h, &n_a) < 1e-12);
    }

    #[test]
    fn initial_state_psi0_amplitude_and_norm() {
        let layout = djc_layout(1);
        let psi = initial_state(&InitialStateSpec::djc(AtomBlock::Psi0), &layout).unwrap();
        let idx_gg = layout.basis_index(&[0, 0, 1, 1]).unwrap();
        let idx_ee = layout.basis_index(&[0, 0, 0, 0]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((psi.amplitudes()[idx_gg] - C64::new(s, 0.0)).norm() < 1e-15);
        assert!((psi.amplitudes()[idx_ee] - C64::new(s, 0.0)).norm() < 1e-15);
        assert!((psi.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn initial_state_qmi_of_atom_pair_is_two_bits() {
        let layout = djc_layout(1);
        let psi = initial_state(&InitialStateSpec::djc(AtomBlock::Psi0), &layout).unwrap();
        let rho_cd = reduced_density(&psi, &["C", "D"]).unwrap();
        let sc = svne(&partial_trace(&rho_cd, &["C"]).unwrap(), LogBase::Two).unwrap();
        let sd = svne(&partial_trace(&rho_cd, &["D"]).unwrap(), LogBase::Two).unwrap();
        let scd = svne(&rho_cd, LogBase::Two).unwrap();
        assert!((sc + sd - scd - 2.0).abs() < 1e-9);
    }

    #[test]
    fn initial_state_rejects_small_truncation_for_dtc() {
        let layout = dtc_layout(1);
        let err = initial_state(
            &InitialStateSpec::dtc(AtomBlock::Psi0, AtomBlock::Phi0),
            &layout,
        );
        assert!(matches!(err, Err(ModelError::TruncationTooSmall { required: 2, .. })));
    }

    #[test]
    fn unknown_block_name_is_rejected() {
        assert!(matches!(AtomBlock::parse("chi0"), Err(ModelError::UnknownBlock(_))));
        assert_eq!(AtomBlock::parse("psi0").unwrap(), AtomBlock::Psi0);
    }

    #[test]
    fn excitation_expectations() {
        let layout = djc_layout(1);
        let psi0 = initial_state(&InitialStateSpec::djc(AtomBlock::Psi0), &layout).unwrap();
        let n_ac = excitation_operator(&layout, "A", &["C"]).unwrap();
        // <sigma_Cz> = 0 for psi0, zero photons.
        assert!(expectation(&n_ac, &psi0).unwrap().abs() < 1e-12);
        let one_photon = PureState::basis(layout.clone(), &[1, 0, 1, 1]).unwrap();
        assert!((expectation(&n_ac, &one_photon).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn excitation_rejects_ungrouped_qubit() {
        let layout = djc_layout(1);
        assert!(matches!(
            excitation_operator(&layout, "A", &["D"]),
            Err(ModelError::UngroupedQubit(_))
        ));
    }

    #[test]
    fn excitation_conserved_along_trajectory() {
        let params = ModelParams::with_delta(1.0, 1);
        let h = build_hdjc_interaction(&params).unwrap();
        let psi0 = initial_state(&InitialStateSpec::djc(AtomBlock::Phi0), h.layout()).unwrap();
        let n_ac = excitation_operator(h.layout(), "A", &["C"]).unwrap();
        let reference = expectation(&n_ac, &psi0).unwrap();
        let prop = Propagator::new(&h).unwrap();
        for k in 0..30 {
            let t = k as f64 * 0.2 * PI;
            let psi_t = prop.evolve(&psi0, t).unwrap();
            assert!((expectation(&n_ac, &psi_t).unwrap() - reference).abs() < 1e-10);
            assert!((psi_t.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn djc_factorizes_into_independent_jc_pairs() {
        // Evolving |0;0;psi0> under H_DJC equals assembling two independent
        // JC-pair evolutions applied to the correlated initial amplitudes.
        let params = ModelParams::with_delta(0.0, 1);
        let h = build_hdjc_interaction(&params).unwrap();
        let layout = h.layout().clone();
        let psi0 = initial_state(&InitialStateSpec::djc(AtomBlock::Psi0), &layout).unwrap();
        let prop = Propagator::new(&h).unwrap();

        let h_ac = build_jc_pair_interaction(&params, "A", "C").unwrap();
        let h_bd = build_jc_pair_interaction(&params, "B", "D").unwrap();
        let pair_layout_ac = h_ac.layout().clone();
        let pair_layout_bd = h_bd.layout().clone();

        for k in [0usize, 7, 60, 151, 299] {
            let t = k as f64 * 0.02 * PI;
            let full = prop.evolve(&psi0, t).unwrap();

            // (|0 g>_AC (x) |0 g>_BD + |0 e>_AC (x) |0 e>_BD)/sqrt(2), each
            // pair evolved independently.
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let mut assembled = DVector::<C64>::zeros(layout.total_dim());
            for (atom_occ, weight) in [(1usize, s), (0usize, s)] {
                let ac0 = PureState::basis(pair_layout_ac.clone(), &[0, atom_occ]).unwrap();
                let bd0 = PureState::basis(pair_layout_bd.clone(), &[0, atom_occ]).unwrap();
                let ac_t = evolve(&h_ac, &ac0, t).unwrap();
                let bd_t = evolve(&h_bd, &bd0, t).unwrap();
                let joint = hilbert::kron_vectors(&[ac_t.amplitudes(), bd_t.amplitudes()]);
                // Joint order is [A, C, B, D]; remap into [A, B, C, D].
                let joint_layout = SubsystemLayout::new(vec![
                    Factor::field("A", 2),
                    Factor::qubit("C"),
                    Factor::field("B", 2),
                    Factor::qubit("D"),
                ])
                .unwrap();
                for idx in 0..joint.len() {
                    let occ = joint_layout.split_index(idx);
                    let target = layout.basis_index(&[occ[0], occ[2], occ[1], occ[3]]).unwrap();
                    assembled[target] += joint[idx] * C64::new(weight, 0.0);
                }
            }
            let assembled = PureState::new(assembled, layout.clone()).unwrap();
            assert!(full.fidelity(&assembled).unwrap() >= 1.0 - 1e-10);
        }
    }

    #[test]
    fn lab_and_interaction_frames_agree_on_qmi() {
        let params = ModelParams::new(5.0, 4.0, 1.0, 1).unwrap();
        let h_lab = build_hdjc(&params).unwrap();
        let h_int = build_hdjc_interaction(&params).unwrap();
        let psi0 = initial_state(&InitialStateSpec::djc(AtomBlock::Psi0), h_lab.layout()).unwrap();
        let qmi = |psi: &PureState, a: &[&str], b: &[&str]| {
            let all: Vec<&str> = a.iter().chain(b.iter()).copied().collect();
            let rho_ab = reduced_density(psi, &all).unwrap();
            let sa = svne(&reduced_density(psi, a).unwrap(), LogBase::Two).unwrap();
            let sb = svne(&reduced_density(psi, b).unwrap(), LogBase::Two).unwrap();
            sa + sb - svne(&rho_ab, LogBase::Two).unwrap()
        };
        for t in [0.4, 1.9, PI] {
            let lab = evolve(&h_lab, &psi0, t).unwrap();
            let int = evolve(&h_int, &psi0, t).unwrap();
            for (a, b) in [
                (vec!["C"], vec!["D"]),
                (vec!["A"], vec!["B"]),
                (vec!["A", "C"], vec!["B", "D"]),
            ] {
                let q_lab = qmi(&lab, &a, &b);
                let q_int = qmi(&int, &a, &b);
                assert!(
                    (q_lab - q_int).abs() < 1e-9,
                    "partition {a:?}|{b:?} at t={t}: {q_lab} vs {q_int}"
                );
            }
        }
    }

    #[test]
    fn exact_truncation_preserves_norm_over_full_grid() {
        let params = ModelParams::with_delta(0.0, 2);
        let h = build_hdtc_interaction(&params).unwrap();
        let psi0 = initial_state(
            &InitialStateSpec::dtc(AtomBlock::Psi0, AtomBlock::Psi0),
            h.layout(),
        )
        .unwrap();
        let prop = Propagator::new(&h).unwrap();
        let mut worst = 0.0f64;
        for k in 0..300 {
            let t = k as f64 * 0.02 * PI;
            let psi_t = prop.evolve(&psi0, t).unwrap();
            worst = worst.max((psi_t.norm() - 1.0).abs());
        }
        assert!(worst <= 1e-10, "worst norm drift {worst}");
    }

    #[test]
    fn params_require_positive_coupling() {
        assert!(matches!(
            ModelParams::new(1.0, 1.0, 0.0, 1),
            Err(ModelError::NonPositiveCoupling(_))
        ));
        assert!(ModelParams::new(1.5, 0.5, 2.0, 1).is_ok());
        assert_eq!(ModelParams::with_delta(1.0, 1).delta(), 1.0);
    }

    #[test]
    fn model_hamiltonians_have_accurate_eigensystems() {
        use crate::hilbert::EigenSystem;
        let p1 = ModelParams::with_delta(0.0, 1);
        let p2 = ModelParams::with_delta(1.0, 2);
        for h in [
            build_hdjc(&p1).unwrap(),
            build_hdjc_interaction(&p1).unwrap(),
            build_hdtc(&p2).unwrap(),
            build_hdtc_interaction(&p2).unwrap(),
        ] {
            // The constructor itself enforces the 1e-9 relative Frobenius
            // reconstruction bound.
            EigenSystem::of(&h).unwrap();
        }
    }

    #[test]
    fn raising_truncation_keeps_tail_mass_negligible() {
        // n_max above the excitation bound: the extra Fock layers stay empty.
        let params = ModelParams::with_delta(0.0, 3);
        let h = build_hdjc_interaction(&params).unwrap();
        let layout = h.layout().clone();
        let psi0 = initial_state(&InitialStateSpec::djc(AtomBlock::Psi0), &layout).unwrap();
        let prop = Propagator::new(&h).unwrap();
        let psi_t = prop.evolve(&psi0, 1.3).unwrap();
        let mut tail = 0.0;
        for idx in 0..layout.total_dim() {
            let occ = layout.split_index(idx);
            if occ[0] > 1 || occ[1] > 1 {
                tail += psi_t.amplitudes()[idx].norm_sqr();
            }
        }
        assert!(tail < 1e-12);
    }
}
