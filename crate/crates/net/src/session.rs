//! Single-shot session orchestration: coordinator plus both nodes over
//! local TCP, with result files and a partial-results manifest.

use std::net::TcpListener;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use chiplink_core::protocol::TrialRecord;

use crate::config::SessionConfig;
use crate::coordinator::{write_log, Coordinator};
use crate::error::{NetError, Result};
use crate::node::{run_node_a, run_node_b};

/// Completion summary written next to the results.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub trials_requested: u64,
    pub completed_trials: u64,
    pub kept_trials: u64,
    pub aborted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Everything a session produced.
pub struct SessionOutcome {
    pub records: Vec<TrialRecord>,
    /// Node A's ordered wire log (deterministic for a fixed seed).
    pub wire_log: Vec<String>,
    /// Coordinator backplane log (ordering across nodes not deterministic).
    pub backplane_log: Vec<String>,
    pub manifest: Manifest,
}

/// Run coordinator and both nodes as threads over loopback TCP and merge
/// the results. The wire protocol and state machines are exactly the ones
/// the standalone process entry points use.
pub fn run_session(config: &SessionConfig) -> Result<SessionOutcome> {
    let (coord_addr, coord_handle) = Coordinator::spawn_local(config.clone())?;

    let wire_listener = TcpListener::bind("127.0.0.1:0")?;
    let node_a_addr = wire_listener.local_addr()?;

    let a_config = config.clone();
    let a_handle = std::thread::spawn(move || run_node_a(&a_config, coord_addr, wire_listener));
    let b_config = config.clone();
    let b_handle = std::thread::spawn(move || run_node_b(&b_config, coord_addr, node_a_addr));

    let b_outcome = b_handle.join().map_err(|_| NetError::Disconnected("node B panicked".into()))?;
    let a_outcome = a_handle.join().map_err(|_| NetError::Disconnected("node A panicked".into()))??;
    let coord_outcome =
        coord_handle.join().map_err(|_| NetError::Disconnected("coordinator panicked".into()))??;

    // An injected node-B failure surfaces as a disconnect at node A; any
    // other node-B error is a real session failure.
    match b_outcome {
        Ok(_) => {}
        Err(NetError::Disconnected(_)) => {}
        Err(e) => return Err(e),
    }

    let kept = a_outcome.records.iter().filter(|r| r.kept).count() as u64;
    let manifest = Manifest {
        trials_requested: config.trials,
        completed_trials: a_outcome.completed_trials,
        kept_trials: kept,
        aborted: a_outcome.aborted.is_some(),
        reason: a_outcome.aborted.clone(),
    };

    Ok(SessionOutcome {
        records: a_outcome.records,
        wire_log: a_outcome.wire_log,
        backplane_log: coord_outcome.log,
        manifest,
    })
}

/// File names a session writes into its output directory.
pub struct SessionPaths {
    pub results: PathBuf,
    pub messages: PathBuf,
    pub backplane: PathBuf,
    pub manifest: PathBuf,
}

/// Persist a session outcome as JSONL + manifest files.
pub fn write_session_outputs(outcome: &SessionOutcome, dir: &Path) -> Result<SessionPaths> {
    std::fs::create_dir_all(dir)?;
    let paths = SessionPaths {
        results: dir.join("results.jsonl"),
        messages: dir.join("messages.jsonl"),
        backplane: dir.join("backplane.jsonl"),
        manifest: dir.join("manifest.json"),
    };
    let mut results = String::new();
    for record in &outcome.records {
        results.push_str(&serde_json::to_string(record)?);
        results.push('\n');
    }
    std::fs::write(&paths.results, results)?;
    write_log(&paths.messages, &outcome.wire_log)?;
    write_log(&paths.backplane, &outcome.backplane_log)?;
    std::fs::write(&paths.manifest, serde_json::to_string_pretty(&outcome.manifest)?)?;
    Ok(paths)
}
