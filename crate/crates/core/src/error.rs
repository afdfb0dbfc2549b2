//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by model validation and the numerical operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix row {row} sums to {sum} (expected 1 within {tol})")]
    RowSum { row: usize, sum: f64, tol: f64 },

    #[error("negative entry {value} at row {row}, column {col}")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("matrix is not square: {rows} rows, row {row} has {cols} columns")]
    NotSquare { rows: usize, row: usize, cols: usize },

    #[error("symbol map length {phi_len} does not match state count {states}")]
    DimensionMismatch { phi_len: usize, states: usize },

    #[error("symbol {symbol} out of range (alphabet size {alphabet})")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },

    #[error("symbol {symbol} is not attained by any state")]
    UnusedSymbol { symbol: usize },

    #[error("belief state entry {value} at index {index} is negative")]
    NegativeBelief { index: usize, value: f64 },

    #[error("belief state sums to {sum} (expected 1 within {tol})")]
    BeliefSum { sum: f64, tol: f64 },

    #[error("transition matrix is not irreducible (positive-entry graph is not strongly connected)")]
    NotIrreducible,

    #[error("no unique stationary distribution (multiple recurrent classes)")]
    NoUniqueStationary,

    #[error("belief update undefined: symbol {symbol} has probability 0 at this belief")]
    ZeroProbabilitySymbol { symbol: usize },

    #[error("jet orders differ: {left} vs {right}")]
    MixedOrder { left: usize, right: usize },

    #[error("jet division by zero constant term")]
    DivisionByZeroConstantTerm,

    #[error("jet log of nonpositive constant term {value}")]
    NonpositiveConstantTerm { value: f64 },

    #[error("probability with zero constant term but nonzero derivative tail (not differentiable here)")]
    ZeroProbabilityNonzeroTail,

    #[error("enumeration of {requested} terms exceeds the guard of {limit}")]
    EnumerationTooLarge { requested: u64, limit: u64 },

    #[error("model is not a Black Hole at the expansion point: {reason}")]
    NotABlackHole { reason: String },

    #[error("parameters violate the standard regime: {reason}")]
    RegimeViolation { reason: String },

    #[error("configuration is not in the non-overlapping case: f1(p0) = {f1_p0} >= f0(p1) = {f0_p1}")]
    NotNonOverlapping { f1_p0: f64, f0_p1: f64 },

    #[error("quadrature grid too coarse: a panel strictly contains {count} deleted intervals of level < {max_level}")]
    QuadratureTooCoarse { count: usize, max_level: usize },

    #[error("transition matrix is not rank one: |det| = {det}")]
    NotRankOne { det: f64 },

    #[error("argument {value} outside domain {domain}")]
    DomainError { value: f64, domain: &'static str },

    #[error("integer overflow guard: n = {n} exceeds {limit}")]
    Overflow { n: u64, limit: u64 },

    #[error("invalid curve: {reason}")]
    InvalidCurve { reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
