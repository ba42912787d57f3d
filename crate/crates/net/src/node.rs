//! Node state machines for chips A and B.
//!
//! Each node holds only classical control state: it drives its own
//! quantum operations through the backplane and learns the other node's
//! outcomes exclusively from wire messages. Incoming wire traffic is
//! validated against a per-trial state machine; a message out of order
//! (a correction before both outcomes, a wrong trial id, a result token
//! inconsistent with its basis) is a fatal protocol error.

use std::net::{SocketAddr, TcpListener, TcpStream};
use std::time::Duration;

use chiplink_core::operator::Basis;
use chiplink_core::protocol::{correction_table, Mode, TrialRecord, XOutcome};

use crate::config::SessionConfig;
use crate::error::{NetError, Result};
use crate::framing;
use crate::messages::{BackplaneRequest, BackplaneResponse, NodeRole, WireMessage, WireResult};

/// One node's view of a finished (or aborted) session.
#[derive(Debug)]
pub struct NodeOutcome {
    /// Merged per-trial records; only node A assembles these.
    pub records: Vec<TrialRecord>,
    /// Ordered tx/rx log of every wire frame this node saw.
    pub wire_log: Vec<String>,
    pub completed_trials: u64,
    /// Present when the session ended early (peer disconnect).
    pub aborted: Option<String>,
}

/// A logged wire frame; one JSONL line per frame.
#[derive(serde::Serialize, serde::Deserialize)]
pub struct LoggedFrame {
    pub dir: String,
    pub frame: WireMessage,
}

struct Wire {
    reader: TcpStream,
    writer: TcpStream,
    log: Vec<String>,
    latency: Option<Duration>,
}

impl Wire {
    fn new(stream: TcpStream, latency_ms: Option<u64>) -> Result<Self> {
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(Duration::from_secs(60)))?;
        Ok(Self {
            reader: stream.try_clone()?,
            writer: stream,
            log: Vec::new(),
            latency: latency_ms.map(Duration::from_millis),
        })
    }

    fn send(&mut self, msg: &WireMessage) -> Result<()> {
        if let Some(latency) = self.latency {
            std::thread::sleep(latency);
        }
        self.log.push(logged(msg, "tx"));
        framing::send(&mut self.writer, msg)
    }

    fn recv(&mut self) -> Result<WireMessage> {
        let msg: WireMessage = framing::recv(&mut self.reader)?;
        self.log.push(logged(&msg, "rx"));
        Ok(msg)
    }
}

fn logged(msg: &WireMessage, dir: &str) -> String {
    serde_json::to_string(&LoggedFrame { dir: dir.into(), frame: msg.clone() })
        .expect("wire frame serializes")
}

struct Backplane {
    reader: TcpStream,
    writer: TcpStream,
}

impl Backplane {
    fn connect(addr: SocketAddr, role: NodeRole) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(Duration::from_secs(60)))?;
        let mut bp = Self { reader: stream.try_clone()?, writer: stream };
        match bp.call(&BackplaneRequest::Hello { role })? {
            BackplaneResponse::Ack => Ok(bp),
            other => Err(NetError::Handshake(format!("unexpected hello reply {other:?}"))),
        }
    }

    fn call(&mut self, request: &BackplaneRequest) -> Result<BackplaneResponse> {
        framing::send(&mut self.writer, request)?;
        framing::recv(&mut self.reader)
    }

    fn expect_ack(&mut self, request: &BackplaneRequest) -> Result<()> {
        match self.call(request)? {
            BackplaneResponse::Ack => Ok(()),
            BackplaneResponse::Error { message } => Err(NetError::Rejected(message)),
            other => Err(NetError::Rejected(format!("expected ack, got {other:?}"))),
        }
    }

    fn expect_outcome(&mut self, request: &BackplaneRequest) -> Result<u8> {
        match self.call(request)? {
            BackplaneResponse::Outcome { bit } => Ok(bit),
            BackplaneResponse::Error { message } => Err(NetError::Rejected(message)),
            other => Err(NetError::Rejected(format!("expected outcome, got {other:?}"))),
        }
    }

    fn shutdown(&mut self) {
        let _ = self.call(&BackplaneRequest::Shutdown);
    }
}

fn ordering_error(expected: &str, got: &WireMessage) -> NetError {
    NetError::Ordering(format!("expected {expected}, got {got:?}"))
}

/// Run chip A: owns qubits 1&2, performs the control-side CNOT and the
/// qubit-2 measurement, merges both nodes' results.
pub fn run_node_a(
    config: &SessionConfig,
    coordinator: SocketAddr,
    wire_listener: TcpListener,
) -> Result<NodeOutcome> {
    let mut backplane = Backplane::connect(coordinator, NodeRole::A)?;
    let (stream, _) = wire_listener.accept()?;
    let mut wire = Wire::new(stream, config.latency_ms)?;

    // Handshake: B speaks first, then configs are cross-checked.
    match wire.recv()? {
        WireMessage::Hello { role: NodeRole::B, .. } => {}
        other => return Err(ordering_error("HELLO from B", &other)),
    }
    wire.send(&WireMessage::Hello { trial_id: 0, role: NodeRole::A })?;
    wire.send(&WireMessage::Config { trial_id: 0, canonical: config.canonical() })?;
    match wire.recv()? {
        WireMessage::Config { canonical, .. } => {
            if canonical != config.canonical() {
                return Err(NetError::ConfigMismatch);
            }
        }
        other => return Err(ordering_error("CONFIG from B", &other)),
    }

    let mut records = Vec::with_capacity(config.trials as usize);
    let mut aborted = None;

    'session: for trial in 0..config.trials {
        // B opens the trial once the pair is ready.
        match wire.recv() {
            Ok(WireMessage::EprReady { trial_id }) if trial_id == trial => {}
            Ok(other) => return Err(ordering_error("EPR_READY", &other)),
            Err(NetError::Disconnected(reason)) => {
                aborted = Some(reason);
                break 'session;
            }
            Err(e) => return Err(e),
        }

        backplane.expect_ack(&BackplaneRequest::ApplyCnot { trial_id: trial, control: 1, target: 2 })?;
        let i = backplane.expect_outcome(&BackplaneRequest::Measure {
            trial_id: trial,
            qubit: 2,
            basis: Basis::Z,
        })?;
        wire.send(&WireMessage::MeasOutcome {
            trial_id: trial,
            qubit: 2,
            basis: Basis::Z,
            result: WireResult::from_bit(Basis::Z, i),
        })?;

        let j = match wire.recv()? {
            WireMessage::MeasOutcome { trial_id, qubit: 3, basis: Basis::X, result }
                if trial_id == trial && result.matches_basis(Basis::X) =>
            {
                XOutcome::from_bit(result.bit())
            }
            other => return Err(ordering_error("MEAS_OUTCOME for qubit 3", &other)),
        };

        if config.mode == Mode::Corrected {
            let (r1, r4) = correction_table().entry(i, j);
            backplane.expect_ack(&BackplaneRequest::ApplyCorrection {
                trial_id: trial,
                qubit: 1,
                pauli: r1,
            })?;
            wire.send(&WireMessage::CorrectionApplied { trial_id: trial, qubit: 1, op: r1 })?;
            match wire.recv()? {
                WireMessage::CorrectionApplied { trial_id, qubit: 4, op }
                    if trial_id == trial && op == r4 => {}
                other => return Err(ordering_error("CORRECTION_APPLIED for qubit 4", &other)),
            }
        }

        let kept = config.mode == Mode::Corrected || (i == 0 && j == XOutcome::Plus);
        let bit1 = if kept {
            Some(backplane.expect_outcome(&BackplaneRequest::MeasureOutput {
                trial_id: trial,
                qubit: 1,
            })?)
        } else {
            None
        };

        let bit4 = match wire.recv()? {
            WireMessage::TrialResult { trial_id, kept: reported, counts }
                if trial_id == trial && reported == kept =>
            {
                WireMessage::q4_bit(&counts)
            }
            other => return Err(ordering_error("TRIAL_RESULT", &other)),
        };

        let outcome = match (bit1, bit4) {
            (Some(a), Some(b)) => Some([a, b]),
            (None, None) => None,
            _ => {
                return Err(NetError::Ordering(
                    "kept flag disagrees with reported output bits".into(),
                ))
            }
        };
        records.push(TrialRecord { trial_id: trial, i, j, kept, outcome });
    }

    if aborted.is_none() {
        wire.send(&WireMessage::Shutdown { trial_id: config.trials })?;
    }
    backplane.shutdown();

    let completed = records.len() as u64;
    Ok(NodeOutcome { records, wire_log: wire.log, completed_trials: completed, aborted })
}

/// Run chip B: owns qubits 3&4, generates the pair, performs the
/// target-side CNOT and the qubit-3 measurement.
pub fn run_node_b(
    config: &SessionConfig,
    coordinator: SocketAddr,
    peer: SocketAddr,
) -> Result<NodeOutcome> {
    let mut backplane = Backplane::connect(coordinator, NodeRole::B)?;
    let stream = TcpStream::connect(peer)?;
    let mut wire = Wire::new(stream, config.latency_ms)?;

    wire.send(&WireMessage::Hello { trial_id: 0, role: NodeRole::B })?;
    match wire.recv()? {
        WireMessage::Hello { role: NodeRole::A, .. } => {}
        other => return Err(ordering_error("HELLO from A", &other)),
    }
    match wire.recv()? {
        WireMessage::Config { canonical, .. } => {
            if canonical != config.canonical() {
                return Err(NetError::ConfigMismatch);
            }
        }
        other => return Err(ordering_error("CONFIG from A", &other)),
    }
    wire.send(&WireMessage::Config { trial_id: 0, canonical: config.canonical() })?;

    let mut completed = 0u64;
    for trial in 0..config.trials {
        if config.fail_b_after_trials == Some(trial) {
            // Simulated crash: drop both connections without a word.
            return Ok(NodeOutcome {
                records: Vec::new(),
                wire_log: wire.log,
                completed_trials: completed,
                aborted: Some("injected failure".into()),
            });
        }

        backplane.expect_ack(&BackplaneRequest::PreparePair { trial_id: trial })?;
        wire.send(&WireMessage::EprReady { trial_id: trial })?;

        let i = match wire.recv()? {
            WireMessage::MeasOutcome { trial_id, qubit: 2, basis: Basis::Z, result }
                if trial_id == trial && result.matches_basis(Basis::Z) =>
            {
                result.bit()
            }
            other => return Err(ordering_error("MEAS_OUTCOME for qubit 2", &other)),
        };

        backplane.expect_ack(&BackplaneRequest::ApplyCnot { trial_id: trial, control: 3, target: 4 })?;
        let j_bit = backplane.expect_outcome(&BackplaneRequest::Measure {
            trial_id: trial,
            qubit: 3,
            basis: Basis::X,
        })?;
        let j = XOutcome::from_bit(j_bit);
        wire.send(&WireMessage::MeasOutcome {
            trial_id: trial,
            qubit: 3,
            basis: Basis::X,
            result: WireResult::from_bit(Basis::X, j_bit),
        })?;

        if config.mode == Mode::Corrected {
            let (r1, r4) = correction_table().entry(i, j);
            match wire.recv()? {
                WireMessage::CorrectionApplied { trial_id, qubit: 1, op }
                    if trial_id == trial && op == r1 => {}
                other => return Err(ordering_error("CORRECTION_APPLIED for qubit 1", &other)),
            }
            backplane.expect_ack(&BackplaneRequest::ApplyCorrection {
                trial_id: trial,
                qubit: 4,
                pauli: r4,
            })?;
            wire.send(&WireMessage::CorrectionApplied { trial_id: trial, qubit: 4, op: r4 })?;
        }

        let kept = config.mode == Mode::Corrected || (i == 0 && j == XOutcome::Plus);
        let bit4 = if kept {
            Some(backplane.expect_outcome(&BackplaneRequest::MeasureOutput {
                trial_id: trial,
                qubit: 4,
            })?)
        } else {
            None
        };
        wire.send(&WireMessage::trial_result(trial, kept, bit4))?;
        completed = trial + 1;
    }

    match wire.recv()? {
        WireMessage::Shutdown { .. } => {}
        other => return Err(ordering_error("SHUTDOWN", &other)),
    }
    backplane.shutdown();

    Ok(NodeOutcome { records: Vec::new(), wire_log: wire.log, completed_trials: completed, aborted: None })
}
