use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid {field}: {msg}")]
    Invalid { field: String, msg: String },

    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("battery power {power} W exceeds the validity bound U_oc^2/(4R) = {bound} W")]
    PowerBound { power: f64, bound: f64 },

    #[error("rank-deficient sample set ({rank} independent columns out of {columns})")]
    RankDeficient { rank: usize, columns: usize },

    #[error("fit quality below ceiling: rms relative error {rms:.4} exceeds {ceiling:.4}")]
    FitQuality { rms: f64, ceiling: f64 },

    #[error("interval index {index} out of range for a grid of {len} intervals")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("infeasible instance: {0}")]
    Infeasible(String),

    #[error("solution vector does not match the program layout: {0}")]
    LayoutMismatch(String),

    #[error("speed collapse in interval {interval}: simulated speed fell to zero")]
    SpeedCollapse { interval: usize },

    #[error("schema mismatch in {context}: {msg}")]
    Schema { context: String, msg: String },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
