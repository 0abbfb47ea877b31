//! Crate-wide error type.

use thiserror::Error;

/// Errors shared by the operator algebra, simulator, encodings and the
/// estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A dense realization or circuit would exceed the configured qubit cap.
    #[error("qubit count {qubits} exceeds cap {cap}")]
    CapExceeded { qubits: usize, cap: usize },

    /// Operands act on incompatible qubit counts or dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The reference level is degenerate within tolerance.
    #[error("degenerate reference level: gap {gap:.3e} below tolerance {tol:.3e}")]
    DegenerateLevel { gap: f64, tol: f64 },

    /// A mode has a non-positive spring constant (imaginary frequency).
    #[error("unstable mode `{name}`: spring constant {k:.6e} <= 0")]
    UnstableMode { name: String, k: f64 },

    /// A nonzero eigenvalue of the scaled shifted Hamiltonian lies outside
    /// the declared condition-number window.
    #[error(
        "spectrum violation: scaled eigenvalue {value:.6e} outside (1/kappa, 1] for kappa = {kappa}"
    )]
    SpectrumViolation { value: f64, kappa: f64 },

    /// The perturbation couples degenerate levels of the unperturbed
    /// Hamiltonian.
    #[error("perturbation couples degenerate levels (|<j|V|k>| = {magnitude:.3e} at gap {gap:.3e})")]
    PerturbationInvalid { magnitude: f64, gap: f64 },

    /// A precision argument is outside its admissible range.
    #[error("invalid precision: {0}")]
    InvalidPrecision(String),

    /// Prior expectation bounds are inconsistent with the subnormalization.
    #[error("invalid prior bounds: {0}")]
    InvalidBounds(String),

    /// A documented formula precondition does not hold.
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    /// A job file failed schema or semantic validation.
    #[error("invalid job: {0}")]
    InvalidJob(String),

    /// A Pauli-word string could not be parsed.
    #[error("bad pauli word `{0}`: expected optional sign then letters from {{I,X,Y,Z}}")]
    PauliParse(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
