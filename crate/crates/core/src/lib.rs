//! Constrained unitary motion on the quantum state space.
//!
//! Pure states of a non-degenerate `n`-level system are written in canonical
//! action-angle coordinates `x = (q₁…q_{n−1}, p₁…p_{n−1})`, where `p_i` is the
//! occupation of the `i`-th energy eigenstate and `q_i` its phase relative to
//! the last one. In these coordinates the Schrödinger flow is the linear
//! Hamiltonian flow of `H = E_n + Σ ω_i p_i` under the canonical symplectic
//! matrix.
//!
//! [`dirac`] confines that flow to the zero set of an even number of
//! constraint functions by replacing the symplectic matrix with the
//! Dirac-modified structure `Ω̃ = Ω + Λ`. [`models`] ships the two- and
//! three-spin product-space constraints and the two-spin disentanglement
//! quadric; [`integrator`] time-steps the reduced field with drift monitoring
//! and optional Newton projection; [`bloch`] maps two-spin states onto a pair
//! of Bloch spheres and samples the spherical vector fields.

pub mod bloch;
pub mod dirac;
pub mod error;
pub mod integrator;
pub mod io;
pub mod models;
pub mod phase_space;
pub mod verify;

pub use error::{Error, Result};
pub use phase_space::{EnergySpectrum, HilbertVector, PhasePoint};
