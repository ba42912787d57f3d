//! Offline checks over a session's wire log: message counts per trial,
//! token/basis consistency, trial-id monotonicity, and the LOCC boundary
//! (nothing but classical wire messages between nodes).

use chiplink_core::operator::Basis;

use crate::messages::WireMessage;
use crate::node::LoggedFrame;

#[derive(Debug, Default)]
pub struct WireAudit {
    pub trials: u64,
    pub frames: u64,
    pub violations: Vec<String>,
}

impl WireAudit {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Default)]
struct TrialCounts {
    epr_ready: u32,
    meas_outcome: u32,
    corrections: u32,
    trial_result: u32,
}

/// Audit the JSONL wire log of one node (both directions of the A-B link).
pub fn audit_wire_log<'a>(lines: impl Iterator<Item = &'a str>, corrected_mode: bool) -> WireAudit {
    let mut audit = WireAudit::default();
    let mut counts: Vec<(u64, TrialCounts)> = Vec::new();
    let mut last_epr: Option<u64> = None;
    let mut last_trial_id: u64 = 0;

    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        audit.frames += 1;
        let frame: LoggedFrame = match serde_json::from_str(line) {
            Ok(f) => f,
            Err(e) => {
                audit.violations.push(format!("line {n}: not a wire frame: {e}"));
                continue;
            }
        };
        // LOCC boundary: the only inter-node payloads are the classical
        // message fields; amplitude-like keys must never appear.
        for key in ["amplitude", "rho", "state_vector", "density"] {
            if line.to_lowercase().contains(key) {
                audit.violations.push(format!("line {n}: quantum payload on the wire: {key}"));
            }
        }

        let msg = frame.frame;
        let id = msg.trial_id();
        if id < last_trial_id {
            audit.violations.push(format!("line {n}: trial id went backwards ({last_trial_id} -> {id})"));
        }
        last_trial_id = id.max(last_trial_id);

        let entry = match counts.iter_mut().find(|(t, _)| *t == id) {
            Some((_, c)) => c,
            None => {
                counts.push((id, TrialCounts::default()));
                &mut counts.last_mut().unwrap().1
            }
        };

        match &msg {
            WireMessage::Hello { .. } | WireMessage::Config { .. } | WireMessage::Shutdown { .. } => {}
            WireMessage::EprReady { trial_id } => {
                entry.epr_ready += 1;
                if let Some(prev) = last_epr {
                    if *trial_id <= prev {
                        audit
                            .violations
                            .push(format!("EPR_READY ids not strictly increasing: {prev} -> {trial_id}"));
                    }
                }
                last_epr = Some(*trial_id);
            }
            WireMessage::MeasOutcome { qubit, basis, result, .. } => {
                entry.meas_outcome += 1;
                if !result.matches_basis(*basis) {
                    audit.violations.push(format!("result {result:?} inconsistent with basis {basis:?}"));
                }
                match (qubit, basis) {
                    (2, Basis::Z) | (3, Basis::X) => {}
                    _ => audit
                        .violations
                        .push(format!("unexpected ancilla measurement: qubit {qubit} in {basis:?}")),
                }
            }
            WireMessage::CorrectionApplied { qubit, .. } => {
                entry.corrections += 1;
                if *qubit != 1 && *qubit != 4 {
                    audit.violations.push(format!("correction on unexpected qubit {qubit}"));
                }
            }
            WireMessage::TrialResult { .. } => entry.trial_result += 1,
        }
    }

    for (trial, c) in &counts {
        // Session-level frames ride trial id 0; skip pure session entries.
        let is_protocol_trial = c.epr_ready > 0 || c.meas_outcome > 0 || c.trial_result > 0;
        if !is_protocol_trial {
            continue;
        }
        audit.trials += 1;
        if c.epr_ready != 1 {
            audit.violations.push(format!("trial {trial}: {} EPR_READY frames", c.epr_ready));
        }
        if c.meas_outcome != 2 {
            audit.violations.push(format!("trial {trial}: {} MEAS_OUTCOME frames", c.meas_outcome));
        }
        if c.trial_result != 1 {
            audit.violations.push(format!("trial {trial}: {} TRIAL_RESULT frames", c.trial_result));
        }
        let expected_corrections = if corrected_mode { 2 } else { 0 };
        if c.corrections != expected_corrections {
            audit.violations.push(format!(
                "trial {trial}: {} CORRECTION_APPLIED frames (expected {expected_corrections})",
                c.corrections
            ));
        }
    }
    audit
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::messages::{NodeRole, WireResult};
    use crate::node::LoggedFrame;

    fn line(msg: WireMessage) -> String {
        serde_json::to_string(&LoggedFrame { dir: "tx".into(), frame: msg }).unwrap()
    }

    #[test]
    fn clean_post_selected_trial_passes() {
        let lines = vec![
            line(WireMessage::Hello { trial_id: 0, role: NodeRole::B }),
            line(WireMessage::EprReady { trial_id: 0 }),
            line(WireMessage::MeasOutcome {
                trial_id: 0,
                qubit: 2,
                basis: Basis::Z,
                result: WireResult::Zero,
            }),
            line(WireMessage::MeasOutcome {
                trial_id: 0,
                qubit: 3,
                basis: Basis::X,
                result: WireResult::Plus,
            }),
            line(WireMessage::trial_result(0, true, Some(0))),
        ];
        let audit = audit_wire_log(lines.iter().map(|s| s.as_str()), false);
        assert!(audit.is_clean(), "{:?}", audit.violations);
        assert_eq!(audit.trials, 1);
    }

    #[test]
    fn missing_trial_result_is_flagged() {
        let lines = vec![
            line(WireMessage::EprReady { trial_id: 0 }),
            line(WireMessage::MeasOutcome {
                trial_id: 0,
                qubit: 2,
                basis: Basis::Z,
                result: WireResult::Zero,
            }),
            line(WireMessage::MeasOutcome {
                trial_id: 0,
                qubit: 3,
                basis: Basis::X,
                result: WireResult::Minus,
            }),
        ];
        let audit = audit_wire_log(lines.iter().map(|s| s.as_str()), false);
        assert!(!audit.is_clean());
    }

    #[test]
    fn basis_token_mismatch_is_flagged() {
        let lines = vec![line(WireMessage::MeasOutcome {
            trial_id: 0,
            qubit: 2,
            basis: Basis::Z,
            result: WireResult::Plus,
        })];
        let audit = audit_wire_log(lines.iter().map(|s| s.as_str()), false);
        assert!(audit.violations.iter().any(|v| v.contains("inconsistent")));
    }

    #[test]
    fn decreasing_epr_ids_are_flagged() {
        let lines = vec![
            line(WireMessage::EprReady { trial_id: 1 }),
            line(WireMessage::EprReady { trial_id: 0 }),
        ];
        let audit = audit_wire_log(lines.iter().map(|s| s.as_str()), false);
        assert!(!audit.is_clean());
    }
}
