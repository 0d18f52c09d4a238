use thiserror::Error;

/// Errors produced by ingestion, learners and metrics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{count} row(s) contain missing values (first at line {first_line})")]
    MissingValues { count: usize, first_line: usize },

    #[error("duplicate feature name `{0}`")]
    DuplicateFeature(String),

    #[error("duplicate sample id `{0}`")]
    DuplicateSample(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("degenerate split: {kept} of {total} samples retained")]
    DegenerateSplit { kept: usize, total: usize },

    #[error("feature universes differ ({left} vs {right} features)")]
    UniverseMismatch { left: usize, right: usize },

    #[error("sample ids of the two artifacts do not match")]
    SampleIdMismatch,

    #[error("graph has {components} connected components{hint}")]
    DisconnectedGraph { components: usize, hint: &'static str },

    #[error("coordinate descent did not converge after {sweeps} sweeps (duality gap {gap:.3e})")]
    NonConvergence { sweeps: usize, gap: f64 },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
