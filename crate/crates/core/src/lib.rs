//! Quantum-circuit MERA toolkit for the critical transverse-field Ising chain.

pub mod analysis;
pub mod circuits;
pub mod compiler;
pub mod dense;
mod error;
pub mod mera;
pub mod mitigation;
pub mod mps;
pub mod optimizer;
pub mod oracle;
pub mod pauli;
pub mod simulator;
pub mod tensors;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
