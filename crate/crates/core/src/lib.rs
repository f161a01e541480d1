//! Simulation of Rydberg blockade and antiblockade multi-qubit gates
//! (Toffoli in linear and planar layouts, C³NOT) on neutral atoms.
//!
//! The crate assembles composite-system Hamiltonians from pulse schedules,
//! integrates unitary and Lindblad dynamics, and evaluates blocking and
//! transfer probabilities and average gate fidelities.

pub mod dynamics;
pub mod fidelity;
pub mod hamiltonian;
pub mod hilbert;
pub mod linalg;
pub mod params;
pub mod pulses;
pub mod scenario;

pub use num_complex::Complex64;
