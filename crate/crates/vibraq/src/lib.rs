//! Desk-scale simulator and verification harness for estimating vibrational
//! entropy from second derivatives of eigenstate energies.
//!
//! The crate pairs a quantum pipeline — LCU block encodings, a polynomial
//! pseudo-inverse, the Hadamard test, and walk-operator amplitude
//! estimation — with an exact dense oracle, a thermochemistry layer, and a
//! query-cost calculator, so every quantum-side quantity can be checked
//! against an independent classical computation at small qubit counts.

pub mod block_encoding;
pub mod error;
pub mod estimation;
pub mod operators;
pub mod oracle;
pub mod simulator;

pub use error::{Error, Result};
