//! The quantum backplane: one process holding the joint four-qubit state.
//!
//! Entanglement cannot be split across classical processes, so the
//! coordinator owns the register and the nodes own only classical control
//! state. Each node connection is served by its own thread; a shared
//! trial engine enforces the canonical operation order, and the one
//! request that legitimately races (node B's output measurement arriving
//! before node A's) waits on a condvar instead of failing. Outcome bits
//! are returned only to the node that owns the measured qubit.

use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use chiplink_core::operator::Basis;
use chiplink_core::protocol::TrialEngine;
use chiplink_core::RngStream;

use crate::config::SessionConfig;
use crate::error::{NetError, Result};
use crate::framing;
use crate::messages::{BackplaneRequest, BackplaneResponse, NodeRole};

struct SessionState {
    engine: Option<TrialEngine>,
    current_trial: Option<u64>,
    aborted: bool,
}

/// Coordinator for one session: accepts exactly two node connections and
/// serves backplane requests until both disconnect.
pub struct Coordinator {
    config: SessionConfig,
    state: Arc<(Mutex<SessionState>, Condvar)>,
}

/// What the coordinator saw during the session.
pub struct CoordinatorOutcome {
    /// JSONL backplane log (request/response frames in per-connection
    /// order; interleaving across nodes is not deterministic).
    pub log: Vec<String>,
}

impl Coordinator {
    pub fn new(config: SessionConfig) -> Self {
        let state = SessionState { engine: None, current_trial: None, aborted: false };
        Self { config, state: Arc::new((Mutex::new(state), Condvar::new())) }
    }

    /// Serve a session on an already-bound listener.
    pub fn serve(self, listener: TcpListener) -> Result<CoordinatorOutcome> {
        let logs: Arc<Mutex<Vec<String>>> = Arc::new(Mutex::new(Vec::new()));
        let mut handles = Vec::new();
        for _ in 0..2 {
            let (stream, _) = listener.accept()?;
            stream.set_nodelay(true)?;
            stream.set_read_timeout(Some(Duration::from_secs(60)))?;
            let state = Arc::clone(&self.state);
            let config = self.config.clone();
            let logs = Arc::clone(&logs);
            handles.push(std::thread::spawn(move || serve_connection(stream, state, config, logs)));
        }
        let mut first_err = None;
        for h in handles {
            match h.join() {
                Ok(Ok(())) => {}
                Ok(Err(e)) => first_err = first_err.or(Some(e)),
                Err(_) => {
                    first_err = first_err.or(Some(NetError::Disconnected("handler panicked".into())))
                }
            }
        }
        let outcome = CoordinatorOutcome { log: logs.lock().unwrap().clone() };
        match first_err {
            // A node dropping its connection ends the session; the nodes'
            // own partial results remain valid.
            Some(NetError::Disconnected(_)) | None => Ok(outcome),
            Some(e) => Err(e),
        }
    }

    /// Bind an ephemeral local port and serve on a thread.
    pub fn spawn_local(
        config: SessionConfig,
    ) -> Result<(std::net::SocketAddr, std::thread::JoinHandle<Result<CoordinatorOutcome>>)> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let coordinator = Coordinator::new(config);
        let handle = std::thread::spawn(move || coordinator.serve(listener));
        Ok((addr, handle))
    }
}

fn log_line(logs: &Mutex<Vec<String>>, role: Option<NodeRole>, dir: &str, payload: &str) {
    let who = role.map(|r| r.to_string()).unwrap_or_else(|| "?".into());
    logs.lock()
        .unwrap()
        .push(format!("{{\"peer\":\"{who}\",\"dir\":\"{dir}\",\"frame\":{payload}}}"));
}

fn serve_connection(
    stream: TcpStream,
    state: Arc<(Mutex<SessionState>, Condvar)>,
    config: SessionConfig,
    logs: Arc<Mutex<Vec<String>>>,
) -> Result<()> {
    let mut reader = stream.try_clone()?;
    let mut writer = stream;
    let mut role: Option<NodeRole> = None;

    loop {
        let request: BackplaneRequest = match framing::recv(&mut reader) {
            Ok(r) => r,
            Err(NetError::Disconnected(_)) => {
                let (lock, cvar) = &*state;
                lock.lock().unwrap().aborted = true;
                cvar.notify_all();
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        log_line(&logs, role, "rx", &serde_json::to_string(&request)?);

        if let BackplaneRequest::Hello { role: r } = request {
            role = Some(r);
            let reply = BackplaneResponse::Ack;
            log_line(&logs, role, "tx", &serde_json::to_string(&reply)?);
            framing::send(&mut writer, &reply)?;
            continue;
        }
        if matches!(request, BackplaneRequest::Shutdown) {
            let reply = BackplaneResponse::Ack;
            log_line(&logs, role, "tx", &serde_json::to_string(&reply)?);
            framing::send(&mut writer, &reply)?;
            return Ok(());
        }

        let Some(role) = role else {
            let reply = BackplaneResponse::Error { message: "hello required first".into() };
            framing::send(&mut writer, &reply)?;
            return Err(NetError::Handshake("request before hello".into()));
        };

        let reply = handle_request(&request, role, &state, &config);
        log_line(&logs, Some(role), "tx", &serde_json::to_string(&reply)?);
        framing::send(&mut writer, &reply)?;
    }
}

fn handle_request(
    request: &BackplaneRequest,
    role: NodeRole,
    state: &Arc<(Mutex<SessionState>, Condvar)>,
    config: &SessionConfig,
) -> BackplaneResponse {
    // Ownership first: a node may only touch its own qubits.
    for q in request.touched_qubits() {
        if !role.owns(q) {
            return BackplaneResponse::Error {
                message: format!("node {role} does not own qubit {q}"),
            };
        }
    }

    let (lock, cvar) = &**state;
    let mut guard = lock.lock().unwrap();

    macro_rules! active_engine {
        ($trial:expr) => {{
            if guard.current_trial != Some($trial) {
                return BackplaneResponse::Error {
                    message: format!(
                        "trial {} is not active (current {:?})",
                        $trial, guard.current_trial
                    ),
                };
            }
            guard.engine.as_mut().expect("active trial has an engine")
        }};
    }

    fn respond<T>(
        result: chiplink_core::Result<T>,
        into: impl FnOnce(T) -> BackplaneResponse,
    ) -> BackplaneResponse {
        match result {
            Ok(v) => into(v),
            Err(e) => BackplaneResponse::Error { message: e.to_string() },
        }
    }

    match request {
        BackplaneRequest::Hello { .. } | BackplaneRequest::Shutdown => unreachable!(),
        BackplaneRequest::PreparePair { trial_id } => {
            let expected = guard.current_trial.map_or(0, |c| c + 1);
            if *trial_id != expected {
                return BackplaneResponse::Error {
                    message: format!("expected trial {expected} next, got {trial_id}"),
                };
            }
            if let Some(engine) = guard.engine.take() {
                if !engine.is_finished() {
                    return BackplaneResponse::Error {
                        message: "previous trial is still in flight".into(),
                    };
                }
            }
            let setting = match config.setting_bases() {
                Ok(s) => s,
                Err(e) => return BackplaneResponse::Error { message: e.to_string() },
            };
            let rng = RngStream::new(config.seed, *trial_id);
            let mut engine = match TrialEngine::new(config.trial_setup(), setting, rng) {
                Ok(e) => e,
                Err(e) => return BackplaneResponse::Error { message: e.to_string() },
            };
            if let Err(e) = engine.prepare_pair() {
                return BackplaneResponse::Error { message: e.to_string() };
            }
            guard.engine = Some(engine);
            guard.current_trial = Some(*trial_id);
            cvar.notify_all();
            BackplaneResponse::Ack
        }
        BackplaneRequest::ApplyCnot { trial_id, control, target } => {
            let engine = active_engine!(*trial_id);
            let result = match (control, target) {
                (1, 2) => engine.apply_cnot_12(),
                (3, 4) => engine.apply_cnot_34(),
                _ => Err(chiplink_core::CoreError::InvalidConfig(format!(
                    "no local CNOT acts on ({control}, {target})"
                ))),
            };
            respond(result, |_| BackplaneResponse::Ack)
        }
        BackplaneRequest::Measure { trial_id, qubit, basis } => {
            let engine = active_engine!(*trial_id);
            let result = match (qubit, basis) {
                (2, Basis::Z) => engine.measure_qubit2(),
                (3, Basis::X) => engine.measure_qubit3().map(|j| j.bit()),
                _ => Err(chiplink_core::CoreError::InvalidConfig(format!(
                    "ancilla measurement must be (2, Z) or (3, X), got ({qubit}, {basis:?})"
                ))),
            };
            cvar.notify_all();
            respond(result, |bit| BackplaneResponse::Outcome { bit })
        }
        BackplaneRequest::ApplyCorrection { trial_id, qubit, pauli } => {
            let engine = active_engine!(*trial_id);
            let result = match qubit {
                1 => engine.apply_correction_q1(*pauli),
                4 => engine.apply_correction_q4(*pauli),
                _ => Err(chiplink_core::CoreError::InvalidConfig(format!(
                    "corrections act on qubits 1 or 4, got {qubit}"
                ))),
            };
            cvar.notify_all();
            respond(result, |_| BackplaneResponse::Ack)
        }
        BackplaneRequest::MeasureOutput { trial_id, qubit } => {
            if *qubit == 4 {
                // Qubit 4 is measured after qubit 1; wait for node A's
                // request to land rather than failing the race.
                loop {
                    if guard.aborted {
                        return BackplaneResponse::Error { message: "session aborted".into() };
                    }
                    if guard.current_trial == Some(*trial_id)
                        && guard.engine.as_ref().map(|e| e.output_q1_done()).unwrap_or(false)
                    {
                        break;
                    }
                    let (g, timeout) = cvar
                        .wait_timeout(guard, Duration::from_secs(30))
                        .expect("condvar poisoned");
                    guard = g;
                    if timeout.timed_out() {
                        return BackplaneResponse::Error {
                            message: "timed out waiting for qubit-1 output measurement".into(),
                        };
                    }
                }
            }
            let engine = active_engine!(*trial_id);
            let result = match qubit {
                1 => engine.measure_output_q1(),
                4 => engine.measure_output_q4(),
                _ => Err(chiplink_core::CoreError::InvalidConfig(format!(
                    "output measurements act on qubits 1 or 4, got {qubit}"
                ))),
            };
            cvar.notify_all();
            respond(result, |bit| BackplaneResponse::Outcome { bit })
        }
    }
}

/// Scan a backplane log for classical-only payloads: any frame carrying
/// amplitude-like fields fails the audit.
pub fn audit_backplane_log(lines: &[String]) -> Result<()> {
    const FORBIDDEN: [&str; 5] = ["amplitude", "rho", "matrix", "state_vector", "density"];
    for line in lines {
        let lower = line.to_lowercase();
        for key in FORBIDDEN {
            if lower.contains(key) {
                return Err(NetError::Ordering(format!(
                    "backplane frame leaks quantum state: {line}"
                )));
            }
        }
    }
    Ok(())
}

/// Write a log to a JSONL file.
pub fn write_log(path: &std::path::Path, lines: &[String]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for line in lines {
        writeln!(f, "{line}")?;
    }
    Ok(())
}
