use thiserror::Error;

pub type Result<T, E = NodeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NodeError {
    #[error(transparent)]
    Core(#[from] meshguard_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("control plane refused command: {0}")]
    Admin(String),

    #[error("status endpoint: {0}")]
    Status(String),

    /// Processes or ports could not be brought up; distinct from a scenario failing.
    #[error("setup failure: {0}")]
    Setup(String),
}
