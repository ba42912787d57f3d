use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("transport: {0}")]
    Io(#[from] std::io::Error),

    #[error("encoding: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("frame too large: {0} bytes")]
    FrameTooLarge(usize),

    #[error("peer disconnected: {0}")]
    Disconnected(String),

    #[error("handshake failed: {0}")]
    Handshake(String),

    #[error("node does not own qubit {qubit} (role {role})")]
    PermissionDenied { role: String, qubit: u8 },

    #[error("session configs disagree between nodes")]
    ConfigMismatch,

    #[error("protocol order violation: {0}")]
    Ordering(String),

    #[error(transparent)]
    Core(#[from] chiplink_core::CoreError),

    #[error("coordinator rejected request: {0}")]
    Rejected(String),
}

pub type Result<T> = std::result::Result<T, NetError>;
