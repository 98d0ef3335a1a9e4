//! Numerical core for simulating a trapped-ion extended quantum Rabi model.
//!
//! The Hamiltonian is
//!
//! ```text
//! H_s = (ω_σ/2) σ_z + ω_a a†a + λ (cos θ σ_z − sin θ σ_x)(a + a†)
//! ```
//!
//! acting on a qubit ⊗ truncated Fock space. The crate provides
//!
//! - [`fock`]: the composite space, ladder/Pauli/parity/displacement operators,
//!   partial traces;
//! - [`model`]: Hamiltonian construction, exact ground states, dressed resonances;
//! - [`dynamics`]: Lindblad and Schrödinger time evolution;
//! - [`observables`]: entropy, fidelity, characteristic function, Wigner
//!   reconstruction, blue-sideband phonon-distribution fitting;
//! - [`pulse`]: compilation of target model parameters into laser tone tables;
//! - [`protocols`]: spectrum scans, adiabatic preparation, shot-noise ensembles
//!   and the rotating-wave cross-check.
//!
//! The crate is `no_std` (it needs `alloc`). Frequencies are angular (rad/s)
//! and times are in seconds throughout.
//!
//! Basis layout: the qubit index is slow and the Fock index fast, with `|e⟩`
//! before `|g⟩`, so `|n, s⟩` lives at flat index `s · N_c + n` where `s = 0`
//! for `e` and `s = 1` for `g`.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dynamics;
mod error;
pub mod fock;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod protocols;
pub mod pulse;

pub use error::{Error, Result};
pub use linalg::C64;

/// Non-fatal diagnostics produced by numerical routines.
///
/// The core has no logger; callers decide whether to surface these.
#[derive(Clone, Debug, PartialEq)]
pub enum Warning {
    /// `‖D D† − I‖_F` exceeded tolerance for a displacement.
    DisplacementNotUnitary { beta: C64, defect: f64 },
    /// A displaced vacuum leaks population into the last kept Fock level.
    TruncationLeakage { beta: C64, edge_population: f64 },
    /// A probability vector had negative entries beyond round-off and was clipped.
    ClippedDistribution { min_value: f64 },
}
