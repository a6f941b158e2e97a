use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    MalformedDocument(String),

    #[error("malformed manifest: {0}")]
    MalformedManifest(String),

    #[error("unknown manifest kind {0:?}")]
    UnknownKind(String),

    #[error("invalid resource name {name:?}: {reason}")]
    InvalidName { name: String, reason: &'static str },

    #[error("translation of {manifest} failed: {reason}")]
    Translation { manifest: String, reason: String },

    #[error("malformed verifiable configuration: {0}")]
    MalformedConfig(String),

    #[error("duplicate selector label {0:?}")]
    DuplicateLabel(String),

    #[error("bad fragment path {path:?}: {reason}")]
    BadPath { path: String, reason: &'static str },

    #[error("seed must be 32 bytes, got {0}")]
    BadSeedLength(usize),

    #[error("malformed key: {0}")]
    MalformedKey(String),

    #[error("malformed signature envelope: {0}")]
    MalformedEnvelope(String),

    #[error("malformed tombstone: {0}")]
    MalformedTombstone(String),

    #[error("{0} not found")]
    NotFound(String),

    #[error("malformed trust bundle: {0}")]
    MalformedBundle(String),

    #[error("trust bundle key id mismatch: public key derives {derived}, configuration names {declared}")]
    KeyIdMismatch { derived: String, declared: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
