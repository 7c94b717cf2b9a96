use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("index kinds differ: {left:?} vs {right:?}")]
    IndexKindMismatch {
        left: crate::space::IndexKind,
        right: crate::space::IndexKind,
    },

    #[error("index {index} is not valid for a {kind:?} sequence")]
    InvalidIndex {
        index: i64,
        kind: crate::space::IndexKind,
    },

    #[error("invalid weight rule: {0}")]
    InvalidWeights(String),

    #[error("no certificate: {0}")]
    NoCertificate(String),

    #[error("certificate unobtainable at depth {depth}: {reason}")]
    CertificateUnobtainable { depth: usize, reason: String },

    #[error("symbol window too small: need |k| <= {required}, sequence covers {covered}")]
    WindowTooSmall { required: i64, covered: String },

    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
