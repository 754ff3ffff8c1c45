//! Crate-wide error type.
//!
//! Every fallible operation in this crate returns [`Error`]. Parse errors carry
//! source positions, evaluation errors say what went wrong numerically, and the
//! solver/verifier layers add their own structured variants on top.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The tokenizer or parser hit something unexpected.
    #[error("syntax error at {line}:{col}: found {found}, expected {}", expected.join(", "))]
    Syntax {
        line: usize,
        col: usize,
        /// What the parser would have accepted at this point.
        expected: Vec<String>,
        /// A short rendering of what it saw instead.
        found: String,
    },

    /// An identifier that is not a state (x1..x9), control (a1..a9), constant
    /// (pi, e) or known function name.
    #[error("unknown identifier `{name}` at {line}:{col}")]
    UnknownIdentifier {
        name: String,
        line: usize,
        col: usize,
    },

    /// Numeric evaluation failed (division by zero, domain error, NaN, or a
    /// derivative that does not exist at the evaluation point).
    #[error("evaluation error: {0}")]
    Eval(String),

    /// A derivative was requested that the expression language cannot express
    /// (variable base together with a variable exponent).
    #[error("unsupported derivative: {0}")]
    UnsupportedDerivative(String),

    /// A problem definition failed validation.
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    /// An operation that requires a point on the interface got one that is not.
    #[error("point is not on the interface (psi = {psi:e})")]
    NotOnInterface { psi: f64 },

    /// The interface gradient vanished where a normal direction was needed.
    #[error("degenerate interface normal at the query point (|grad psi| = {norm:e})")]
    DegenerateNormal { norm: f64 },

    /// Newton projection onto the interface did not converge.
    #[error("projection onto the interface failed after {iterations} iterations (|psi| = {psi:e})")]
    ProjectionFailed { iterations: usize, psi: f64 },

    /// An interface Hamiltonian was requested with a costate that has a
    /// non-negligible normal component.
    #[error("costate is not tangent to the interface (normal component {normal:e})")]
    NonTangentCostate { normal: f64 },

    /// A structure word violated one of the word invariants.
    #[error("invalid structure word `{word}`: {reason}")]
    InvalidWord { word: String, reason: String },

    /// State blow-up during integration.
    #[error("state blow-up during integration (|Y| = {norm:e})")]
    BlowUp { norm: f64 },

    /// The trajectory meets the interface tangentially at a junction, so the
    /// costate jump is not determined by the transversal-crossing formulas.
    #[error("tangential crossing at junction {junction}: |<grad psi, f>|/|grad psi| = {value:e}")]
    TangentialCrossing { junction: usize, value: f64 },

    /// Every enumerated structure came back infeasible.
    #[error("all {count} enumerated structures are infeasible")]
    AllStructuresInfeasible { count: usize },

    /// The grid solver hit its sweep cap before the fixed point settled.
    #[error("grid solver did not converge within {sweeps} sweeps (last sup change {change:e})")]
    NonConvergence { sweeps: usize, change: f64 },
}

impl Error {
    /// Shorthand for an evaluation error.
    pub fn eval(msg: impl Into<String>) -> Self {
        Error::Eval(msg.into())
    }

    /// Shorthand for a problem-validation error.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidProblem(msg.into())
    }
}
