//! Distributed two-node runner for the teleported-CNOT protocol.
//!
//! Three processes form a session: a coordinator holding the joint
//! quantum state (the stand-in for the shared photons) and two nodes, one
//! per chip, that exchange only classical framed messages with each other
//! and drive their own qubits through the coordinator. With the same seed
//! the session reproduces the in-process protocol's trial stream bit for
//! bit.

pub mod audit;
pub mod config;
pub mod coordinator;
pub mod error;
pub mod framing;
pub mod messages;
pub mod node;
pub mod session;

pub use config::SessionConfig;
pub use error::{NetError, Result};
pub use session::{run_session, write_session_outputs, Manifest, SessionOutcome};
