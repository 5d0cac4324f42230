use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("invalid arc: {0}")]
    InvalidArc(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("not a probability measure (total mass {0})")]
    NotProbability(f64),

    #[error("measure is not uniformized")]
    NotUniformized,

    #[error("invalid open set: {0}")]
    InvalidOpenSet(String),

    #[error("point {0} is not on the tree")]
    OffTree(String),

    #[error("crush site {0} is not a pending atom")]
    NotPendingAtom(String),

    #[error("crushed mass {crushed} exceeds site mass {site}")]
    CrushTooLarge { crushed: f64, site: f64 },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("too few atoms: need at least {need}, have {have}")]
    TooFewAtoms { need: usize, have: usize },

    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),

    #[error("label {0} is not in the hierarchy")]
    MissingLabel(i64),

    #[error("measure has density but no discretization grid was given")]
    NeedsGrid,

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
