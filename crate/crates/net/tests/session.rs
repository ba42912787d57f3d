//! End-to-end session tests: distributed runs must replay the in-process
//! protocol exactly, survive fault injection, and honor the LOCC
//! boundary.

use std::net::{TcpListener, TcpStream};

use chiplink_core::channel::{CompensatorSetting, NoiseConfig};
use chiplink_core::operator::Basis;
use chiplink_core::protocol::{run_batch, InputSpec, Mode};
use chiplink_core::tomography::Letter;

use chiplink_net::audit::audit_wire_log;
use chiplink_net::config::SessionConfig;
use chiplink_net::coordinator::{audit_backplane_log, Coordinator};
use chiplink_net::framing;
use chiplink_net::messages::{BackplaneRequest, BackplaneResponse, NodeRole, WireMessage};
use chiplink_net::node::run_node_a;
use chiplink_net::{run_session, NetError};

fn base_config(trials: u64, seed: u64) -> SessionConfig {
    SessionConfig {
        input: InputSpec::alphabet(Letter::Plus, Letter::Zero),
        mode: Mode::PostSelected,
        noise: NoiseConfig::ideal(),
        compensator: CompensatorSetting::identity(),
        setting: "ZZ".into(),
        trials,
        seed,
        fail_b_after_trials: None,
        latency_ms: None,
    }
}

#[test]
fn single_trial_matches_in_process_run() {
    let config = base_config(1, 777);
    let outcome = run_session(&config).unwrap();
    let local = run_batch(&config.trial_setup(), [Basis::Z, Basis::Z], 1, 777).unwrap();
    assert_eq!(outcome.records, local);
}

#[test]
fn session_stream_is_bit_identical_to_in_process_batch() {
    let config = base_config(500, 20_25);
    let outcome = run_session(&config).unwrap();
    let local = run_batch(&config.trial_setup(), [Basis::Z, Basis::Z], 500, 20_25).unwrap();
    assert_eq!(outcome.records.len(), 500);
    // Byte-level equality of the serialized streams.
    let dist: Vec<String> =
        outcome.records.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
    let loc: Vec<String> = local.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
    assert_eq!(dist, loc);
}

#[test]
fn corrected_mode_with_noise_matches_in_process_batch() {
    let mut config = base_config(200, 4321);
    config.mode = Mode::Corrected;
    config.noise = NoiseConfig {
        source_visibility: 0.9,
        phase_jitter_sigma: 0.2,
        ..NoiseConfig::ideal()
    };
    config.setting = "XX".into();
    let outcome = run_session(&config).unwrap();
    let local = run_batch(&config.trial_setup(), [Basis::X, Basis::X], 200, 4321).unwrap();
    assert_eq!(outcome.records, local);
    // Corrected mode keeps every trial and measures both outputs.
    assert!(outcome.records.iter().all(|r| r.kept && r.outcome.is_some()));
}

#[test]
fn replay_is_deterministic_byte_for_byte() {
    let config = base_config(120, 99);
    let first = run_session(&config).unwrap();
    let second = run_session(&config).unwrap();
    assert_eq!(first.wire_log, second.wire_log);
    assert_eq!(first.records, second.records);
    assert_eq!(first.manifest.completed_trials, second.manifest.completed_trials);
}

#[test]
fn latency_injection_cannot_change_outcomes() {
    let fast = base_config(40, 12345);
    let mut slow = fast.clone();
    slow.latency_ms = Some(2);
    let fast_outcome = run_session(&fast).unwrap();
    let slow_outcome = run_session(&slow).unwrap();
    assert_eq!(fast_outcome.records, slow_outcome.records);
    assert_eq!(fast_outcome.wire_log, slow_outcome.wire_log);
}

#[test]
fn wire_log_passes_message_count_and_locc_audit() {
    let config = base_config(60, 5);
    let outcome = run_session(&config).unwrap();
    let audit = audit_wire_log(outcome.wire_log.iter().map(|s| s.as_str()), false);
    assert!(audit.is_clean(), "violations: {:?}", audit.violations);
    assert_eq!(audit.trials, 60);
    audit_backplane_log(&outcome.backplane_log).unwrap();

    let mut corrected = base_config(30, 6);
    corrected.mode = Mode::Corrected;
    let outcome = run_session(&corrected).unwrap();
    let audit = audit_wire_log(outcome.wire_log.iter().map(|s| s.as_str()), true);
    assert!(audit.is_clean(), "violations: {:?}", audit.violations);
}

#[test]
fn killing_node_b_yields_partial_manifest() {
    let mut config = base_config(50, 31);
    config.fail_b_after_trials = Some(18);
    let outcome = run_session(&config).unwrap();
    assert!(outcome.manifest.aborted);
    assert_eq!(outcome.manifest.completed_trials, 18);
    assert_eq!(outcome.records.len(), 18);
    // Completed trials are uncorrupted: they match the in-process stream.
    let local = run_batch(&config.trial_setup(), [Basis::Z, Basis::Z], 18, 31).unwrap();
    assert_eq!(outcome.records, local);
}

#[test]
fn coordinator_rejects_unowned_qubit_access() {
    let config = base_config(1, 0);
    let (addr, handle) = Coordinator::spawn_local(config).unwrap();

    // Impersonate node A and poke at node B's qubit.
    let mut intruder = TcpStream::connect(addr).unwrap();
    framing::send(&mut intruder, &BackplaneRequest::Hello { role: NodeRole::A }).unwrap();
    let _: BackplaneResponse = framing::recv(&mut intruder).unwrap();
    framing::send(
        &mut intruder,
        &BackplaneRequest::Measure { trial_id: 0, qubit: 3, basis: Basis::X },
    )
    .unwrap();
    let reply: BackplaneResponse = framing::recv(&mut intruder).unwrap();
    match reply {
        BackplaneResponse::Error { message } => assert!(message.contains("does not own")),
        other => panic!("expected permission error, got {other:?}"),
    }

    // A second (well-behaved) connection lets the coordinator finish.
    let mut bystander = TcpStream::connect(addr).unwrap();
    framing::send(&mut bystander, &BackplaneRequest::Hello { role: NodeRole::B }).unwrap();
    let _: BackplaneResponse = framing::recv(&mut bystander).unwrap();
    drop(bystander);
    drop(intruder);
    handle.join().unwrap().unwrap();
}

#[test]
fn correction_before_outcome_is_a_fatal_ordering_error() {
    let config = base_config(1, 0);
    let (coord_addr, coord_handle) = Coordinator::spawn_local(config.clone()).unwrap();
    let wire_listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let node_a_addr = wire_listener.local_addr().unwrap();

    let a_config = config.clone();
    let a_handle = std::thread::spawn(move || run_node_a(&a_config, coord_addr, wire_listener));

    // A hostile "node B": correct handshake, then a correction frame
    // before any measurement outcome exists.
    let mut fake_b = TcpStream::connect(node_a_addr).unwrap();
    framing::send(&mut fake_b, &WireMessage::Hello { trial_id: 0, role: NodeRole::B }).unwrap();
    let _: WireMessage = framing::recv(&mut fake_b).unwrap();
    let config_msg: WireMessage = framing::recv(&mut fake_b).unwrap();
    match config_msg {
        WireMessage::Config { .. } => {}
        other => panic!("unexpected {other:?}"),
    }
    framing::send(
        &mut fake_b,
        &WireMessage::Config { trial_id: 0, canonical: config.canonical() },
    )
    .unwrap();
    framing::send(
        &mut fake_b,
        &WireMessage::CorrectionApplied {
            trial_id: 0,
            qubit: 4,
            op: chiplink_core::operator::PauliLabel::X,
        },
    )
    .unwrap();

    let result = a_handle.join().unwrap();
    assert!(
        matches!(result, Err(NetError::Ordering(_))),
        "expected ordering error, got {result:?}"
    );
    drop(fake_b);
    // The coordinator saw node A's backplane connection come and go.
    let mut dummy = TcpStream::connect(coord_addr).unwrap();
    framing::send(&mut dummy, &BackplaneRequest::Hello { role: NodeRole::B }).unwrap();
    let _: BackplaneResponse = framing::recv(&mut dummy).unwrap();
    drop(dummy);
    coord_handle.join().unwrap().unwrap();
}

#[test]
fn mismatched_configs_abort_the_session() {
    let config = base_config(5, 1);
    let (coord_addr, coord_handle) = Coordinator::spawn_local(config.clone()).unwrap();
    let wire_listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let node_a_addr = wire_listener.local_addr().unwrap();

    let a_config = config.clone();
    let a_handle = std::thread::spawn(move || run_node_a(&a_config, coord_addr, wire_listener));

    let mut fake_b = TcpStream::connect(node_a_addr).unwrap();
    framing::send(&mut fake_b, &WireMessage::Hello { trial_id: 0, role: NodeRole::B }).unwrap();
    let _: WireMessage = framing::recv(&mut fake_b).unwrap();
    let _: WireMessage = framing::recv(&mut fake_b).unwrap();
    let mut other = config.clone();
    other.seed = 2;
    framing::send(&mut fake_b, &WireMessage::Config { trial_id: 0, canonical: other.canonical() })
        .unwrap();

    let result = a_handle.join().unwrap();
    assert!(matches!(result, Err(NetError::ConfigMismatch)));
    drop(fake_b);
    let mut dummy = TcpStream::connect(coord_addr).unwrap();
    framing::send(&mut dummy, &BackplaneRequest::Hello { role: NodeRole::B }).unwrap();
    let _: BackplaneResponse = framing::recv(&mut dummy).unwrap();
    drop(dummy);
    coord_handle.join().unwrap().unwrap();
}
