//! Tomographic entanglement indicators for hybrid cavity-QED models.
//!
//! The crate simulates the double Jaynes-Cummings and double Tavis-Cummings
//! models, computes optical and spin tomograms of the evolved states, and
//! evaluates entanglement indicators directly from those tomograms (the
//! tomographic indicator and its dominant-setting variant) alongside the
//! quantum mutual information used as the reference measure. A gate-level
//! statevector simulator with shot sampling and an OpenQASM 2.0 subset
//! parser/emitter replay the equivalent-circuit experiments.
//!
//! Module map:
//!
//! * [`hilbert`] - tensor-product linear algebra: layouts, states, density
//!   operators, partial traces, entropies, unitary evolution.
//! * [`models`] - double JC / double TC Hamiltonians, initial states and
//!   conserved-quantity operators.
//! * [`tomography`] - optical, spin and joint tomograms plus their JSON
//!   schema.
//! * [`indicators`] - tomographic entropies, mutual information, the
//!   entanglement indicators and indicator time series.
//! * [`circuit`] - gates, statevector simulation, shot sampling, the
//!   equivalent-circuit builders and the QASM subset parser/emitter.

pub mod circuit;
pub mod hilbert;
pub mod indicators;
pub mod models;
pub mod tomography;

/// Format a float with 17 significant digits, enough to round-trip `f64`
/// bit-exactly through text.
pub fn format_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod format_tests {
    use super::format_sig17;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.0, std::f64::consts::PI, 0.02, 1.0 / 3.0, 6.02e23, -1.7e-9] {
            let s = format_sig17(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }
}
