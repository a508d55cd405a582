use thiserror::Error;

/// Errors raised by the cohort-explanation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite importance value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("tag value {value} at row {row}, column {col} is not 0 or 1")]
    NonBinary { row: usize, col: usize, value: u8 },

    #[error("empty matrix: {0}")]
    Empty(&'static str),

    #[error("duplicate name `{0}`")]
    DuplicateName(String),

    #[error("assignment is empty")]
    EmptyAssignment,

    #[error("cohort {0} has no members")]
    EmptyCohort(usize),

    #[error("assignment is not canonical: label {label} first appears before label {previous}")]
    NotCanonical { label: usize, previous: usize },

    #[error("invalid number of cohorts k={k} for n={n} samples")]
    InfeasibleK { k: usize, n: usize },

    #[error("k={k} exceeds the smallest training fold ({fold_size} samples)")]
    KTooLarge { k: usize, fold_size: usize },

    #[error("missing or non-finite value in column `{column}` at row {row}")]
    MissingValue { column: String, row: usize },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{column}` is {actual} but rule `{rule}` needs {expected}")]
    KindMismatch {
        column: String,
        rule: &'static str,
        expected: &'static str,
        actual: &'static str,
    },

    #[error("column `{0}` has too little spread to form quantile bins")]
    DegenerateBins(String),

    #[error("tag dictionary mismatch: {0}")]
    DictionaryMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("time limit reached before any feasible partition was found")]
    Timeout,
}

pub type Result<T> = std::result::Result<T, Error>;
