//! Simulation of a two-node photonic network that teleports a CNOT gate
//! between chips.
//!
//! The crate models the experiment end to end at the logical-qubit and
//! path-mode level:
//!
//! - [`state`] / [`operator`]: multi-qubit states, gates, measurement.
//! - [`photonics`]: the chip's interferometers, crossers and detection
//!   networks over four-path two-qubit registers.
//! - [`channel`]: the fiber interconnect with loss budget, polarization
//!   drift, phase jitter and the compensation search.
//! - [`protocol`]: the teleportation protocol itself with its correction
//!   table, post-selection and shot sampling.
//! - [`tomography`]: 16-setting state tomography and 256-projection
//!   process tomography with bootstrap error bars.
//! - [`experiments`]: drivers that reproduce the named experiments.
//!
//! Every sampling operation draws from an explicit `(seed, stream)`
//! address, so whole experiments replay bit for bit.

pub mod channel;
pub mod error;
pub mod experiments;
pub mod operator;
pub mod optim;
pub mod photonics;
pub mod protocol;
pub mod rng;
pub mod serial;
pub mod state;
pub mod tomography;

pub use error::{CoreError, Result};
pub use rng::RngStream;
