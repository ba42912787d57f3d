//! Wire vocabulary of the two-node session.
//!
//! [`WireMessage`] is the only thing nodes exchange with each other: the
//! classical side of the protocol. [`BackplaneRequest`] /
//! [`BackplaneResponse`] form the quantum-backplane interface to the
//! coordinator, which stands in for the shared photons; responses carry
//! acknowledgments and classical outcome bits, never state amplitudes.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use chiplink_core::operator::{Basis, PauliLabel};

/// Which chip a node plays. A holds qubits 1&2, B holds qubits 3&4 and
/// generates the pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeRole {
    A,
    B,
}

impl NodeRole {
    pub fn owned_qubits(self) -> [u8; 2] {
        match self {
            NodeRole::A => [1, 2],
            NodeRole::B => [3, 4],
        }
    }

    pub fn owns(self, qubit: u8) -> bool {
        self.owned_qubits().contains(&qubit)
    }

    pub fn peer(self) -> NodeRole {
        match self {
            NodeRole::A => NodeRole::B,
            NodeRole::B => NodeRole::A,
        }
    }
}

impl std::fmt::Display for NodeRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// A measurement result token as it travels on the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WireResult {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "1")]
    One,
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl WireResult {
    pub fn from_bit(basis: Basis, bit: u8) -> Self {
        match (basis, bit) {
            (Basis::Z, 0) => WireResult::Zero,
            (Basis::Z, _) => WireResult::One,
            (_, 0) => WireResult::Plus,
            (_, _) => WireResult::Minus,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            WireResult::Zero | WireResult::Plus => 0,
            WireResult::One | WireResult::Minus => 1,
        }
    }

    /// Token is consistent with the claimed measurement basis.
    pub fn matches_basis(self, basis: Basis) -> bool {
        match basis {
            Basis::Z => matches!(self, WireResult::Zero | WireResult::One),
            Basis::X => matches!(self, WireResult::Plus | WireResult::Minus),
            Basis::Y => false,
        }
    }
}

/// Classical message between the two nodes. `trial_id` is 0 for
/// session-level messages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WireMessage {
    Hello { trial_id: u64, role: NodeRole },
    /// Canonical config echo for cross-checking both nodes run the same
    /// session.
    Config { trial_id: u64, canonical: String },
    EprReady { trial_id: u64 },
    MeasOutcome { trial_id: u64, qubit: u8, basis: Basis, result: WireResult },
    CorrectionApplied { trial_id: u64, qubit: u8, op: PauliLabel },
    TrialResult { trial_id: u64, kept: bool, counts: BTreeMap<String, u64> },
    Shutdown { trial_id: u64 },
}

impl WireMessage {
    pub fn trial_id(&self) -> u64 {
        match self {
            WireMessage::Hello { trial_id, .. }
            | WireMessage::Config { trial_id, .. }
            | WireMessage::EprReady { trial_id }
            | WireMessage::MeasOutcome { trial_id, .. }
            | WireMessage::CorrectionApplied { trial_id, .. }
            | WireMessage::TrialResult { trial_id, .. }
            | WireMessage::Shutdown { trial_id } => *trial_id,
        }
    }

    /// B's per-trial result message; `counts` holds B's detector table.
    pub fn trial_result(trial_id: u64, kept: bool, q4_bit: Option<u8>) -> Self {
        let mut counts = BTreeMap::new();
        if let Some(bit) = q4_bit {
            counts.insert(format!("q4:{bit}"), 1u64);
        }
        WireMessage::TrialResult { trial_id, kept, counts }
    }

    /// Extract B's qubit-4 outcome from a trial-result count table.
    pub fn q4_bit(counts: &BTreeMap<String, u64>) -> Option<u8> {
        for (key, n) in counts {
            if *n > 0 {
                if let Some(bit) = key.strip_prefix("q4:") {
                    return bit.parse().ok();
                }
            }
        }
        None
    }
}

/// Quantum-backplane request from a node to the coordinator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum BackplaneRequest {
    Hello { role: NodeRole },
    PreparePair { trial_id: u64 },
    ApplyCnot { trial_id: u64, control: u8, target: u8 },
    ApplyCorrection { trial_id: u64, qubit: u8, pauli: PauliLabel },
    Measure { trial_id: u64, qubit: u8, basis: Basis },
    MeasureOutput { trial_id: u64, qubit: u8 },
    Shutdown,
}

impl BackplaneRequest {
    /// The qubits a request touches, for ownership checks.
    pub fn touched_qubits(&self) -> Vec<u8> {
        match self {
            BackplaneRequest::Hello { .. } | BackplaneRequest::Shutdown => vec![],
            // Pair emission lives on chip B's source.
            BackplaneRequest::PreparePair { .. } => vec![3],
            BackplaneRequest::ApplyCnot { control, target, .. } => vec![*control, *target],
            BackplaneRequest::ApplyCorrection { qubit, .. } => vec![*qubit],
            BackplaneRequest::Measure { qubit, .. } => vec![*qubit],
            BackplaneRequest::MeasureOutput { qubit, .. } => vec![*qubit],
        }
    }
}

/// Coordinator reply: classical-only payloads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reply", rename_all = "snake_case")]
pub enum BackplaneResponse {
    Ack,
    Outcome { bit: u8 },
    Error { message: String },
}
