//! Error type shared by every stage of the pipeline.

use std::path::PathBuf;

use thiserror::Error;

use crate::quality::TuneStep;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed audio container: {0}")]
    Format(String),

    #[error("unsupported audio encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty frequency band: bins {lo}..={hi}")]
    Band { lo: usize, hi: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("requested {requested} payload bits but only {max} patches are available")]
    Capacity { requested: usize, max: usize },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("length error: {0}")]
    Length(String),

    #[error("input too short: {0}")]
    TooShort(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("payload parse error: {0}")]
    Payload(String),

    #[error("no feasible embedding strength found after {} iterations", trace.len())]
    Tuning { trace: Vec<TuneStep> },

    #[error("external tool failed: {0}")]
    ExternalTool(String),

    #[error("codec output alignment failed: peak normalized correlation {peak:.3}")]
    Alignment { peak: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
