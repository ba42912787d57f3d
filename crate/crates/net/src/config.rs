//! Shared session configuration for coordinator and nodes.

use serde::{Deserialize, Serialize};

use chiplink_core::channel::{CompensatorSetting, NoiseConfig};
use chiplink_core::operator::Basis;
use chiplink_core::protocol::{InputSpec, Mode, TrialSetup};

use crate::error::{NetError, Result};

/// Everything all three processes must agree on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub input: InputSpec,
    pub mode: Mode,
    pub noise: NoiseConfig,
    #[serde(default = "default_compensator")]
    pub compensator: CompensatorSetting,
    /// Output measurement setting as a two-letter token, e.g. "ZZ".
    pub setting: String,
    pub trials: u64,
    pub seed: u64,
    /// Test hook: node B drops its connections after this many trials.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_b_after_trials: Option<u64>,
    /// Test hook: per-send latency injected at both nodes, milliseconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

fn default_compensator() -> CompensatorSetting {
    CompensatorSetting::identity()
}

impl SessionConfig {
    pub fn setting_bases(&self) -> Result<[Basis; 2]> {
        chiplink_core::photonics::parse_setting(&self.setting).map_err(NetError::Core)
    }

    pub fn trial_setup(&self) -> TrialSetup {
        TrialSetup {
            input: self.input.clone(),
            noise: self.noise.clone(),
            compensator: self.compensator,
            mode: self.mode,
        }
    }

    /// Canonical JSON used for the cross-node config check; fault-injection
    /// hooks are excluded so a deliberately failing node still matches.
    pub fn canonical(&self) -> String {
        let mut stripped = self.clone();
        stripped.fail_b_after_trials = None;
        stripped.latency_ms = None;
        serde_json::to_string(&stripped).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chiplink_core::tomography::Letter;

    pub(crate) fn test_config(trials: u64, seed: u64) -> SessionConfig {
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
    fn canonical_ignores_fault_hooks() {
        let mut a = test_config(10, 1);
        let mut b = test_config(10, 1);
        a.latency_ms = Some(5);
        b.fail_b_after_trials = Some(3);
        assert_eq!(a.canonical(), b.canonical());
    }

    #[test]
    fn config_roundtrips_through_json() {
        let cfg = test_config(100, 42);
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: SessionConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }
}
