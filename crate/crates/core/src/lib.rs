//! Effective Hamiltonians of periodically driven quantum systems.
//!
//! The driven problem `H(t) = H(t + T)` is mapped to a time-independent
//! operator on the extended space (system ⊗ Fourier harmonics). A unitary
//! flow `dK/dl = [η, K]` removes the harmonic-coupling blocks, and the
//! effective Hamiltonian is read off the decoupled operator. Closed-form
//! high-frequency expansions for the shaken Bose-Hubbard chain and an exact
//! one-period propagator serve as independent references.

pub mod bessel;
pub mod effective;
pub mod expansion;
pub mod floquet;
pub mod flow;
pub mod fock;
pub mod linalg;
pub mod matrix_io;
pub mod oracle;
pub mod scenarios;

pub use effective::{EffectiveHamiltonian, Method};
pub use fock::{Boundary, FockBasis, LatticeOperatorSet};
pub use linalg::CMatrix;
