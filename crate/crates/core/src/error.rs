use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("total conflict while fusing belief masses (K = {0})")]
    TotalConflict(f64),

    #[error("invalid belief mass: m_occ = {m_occ}, m_emp = {m_emp}")]
    InvalidMass { m_occ: f64, m_emp: f64 },

    #[error("invalid occupancy thresholds: need 0 <= t_emp < t_occ <= 1, got ({t_emp}, {t_occ})")]
    InvalidThresholds { t_emp: f64, t_occ: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("label id {0} is not part of the active label table")]
    UnknownLabel(u8),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
