//! Experiment configuration files and the shipped noise presets.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use chiplink_core::channel::{CompensatorSetting, NoiseConfig};
use chiplink_core::protocol::{InputSpec, Mode, Shots};

/// The named experiments this binary reproduces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Tomography of the shared pair after the fiber link.
    BellDistribute,
    /// Two-photon interference fringes and their visibility.
    Visibility,
    /// Computational-basis truth table of the teleported gate.
    TruthTable,
    /// Bell generation from the four superposition inputs.
    Entangle,
    /// State tomography of the teleported output for one input.
    StateTomo,
    /// Full 256-projection process tomography.
    ProcessTomo,
    /// Polarization-compensation search against the configured drift.
    CalibrateFiber,
    /// Distributed two-node session over local TCP.
    NetlabSession,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::BellDistribute => "bell-distribute",
            Experiment::Visibility => "visibility",
            Experiment::TruthTable => "truth-table",
            Experiment::Entangle => "entangle",
            Experiment::StateTomo => "state-tomo",
            Experiment::ProcessTomo => "process-tomo",
            Experiment::CalibrateFiber => "calibrate-fiber",
            Experiment::NetlabSession => "netlab-session",
        }
    }
}

fn default_mode() -> Mode {
    Mode::PostSelected
}

/// One experiment run, fully specified.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub shots: Shots,
    pub seed: u64,
    /// Inline noise model; a named preset takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Fiber length override in km.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber_km: Option<f64>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compensator: Option<CompensatorSetting>,
    /// Input state for `state-tomo`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputSpec>,
    /// Trial count for `netlab-session`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    /// Output measurement setting for `netlab-session`, e.g. "ZZ".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<String>,
    /// Evaluation budget for `calibrate-fiber`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_budget: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(km) = self.fiber_km {
            if km < 0.0 || !km.is_finite() {
                bail!("fiber_km must be finite and >= 0, got {km}");
            }
        }
        if let Some(noise) = &self.noise {
            noise.validate().map_err(|e| anyhow::anyhow!(e))?;
        }
        if let Some(name) = &self.preset {
            preset(name)?;
        }
        match self.experiment {
            Experiment::StateTomo if self.input.is_none() => {
                bail!("state-tomo requires an input state")
            }
            Experiment::NetlabSession if self.trials.is_none() => {
                bail!("netlab-session requires a trial count")
            }
            _ => {}
        }
        Ok(())
    }

    /// The effective noise model: preset, inline config, or ideal, with
    /// the fiber-length override applied.
    pub fn resolve_noise(&self) -> Result<NoiseConfig> {
        let mut noise = if let Some(name) = &self.preset {
            preset(name)?.noise
        } else if let Some(inline) = &self.noise {
            inline.clone()
        } else {
            NoiseConfig::ideal()
        };
        if let Some(km) = self.fiber_km {
            noise.fiber_km = km;
        }
        noise.validate().map_err(|e| anyhow::anyhow!(e))?;
        Ok(noise)
    }

    pub fn compensator(&self) -> CompensatorSetting {
        self.compensator.unwrap_or(CompensatorSetting::identity())
    }
}

/// A calibrated noise preset with its provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoisePreset {
    pub name: String,
    pub noise: NoiseConfig,
    pub provenance: PresetProvenance,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PresetProvenance {
    pub method: String,
    pub targets: std::collections::BTreeMap<String, f64>,
    pub achieved: std::collections::BTreeMap<String, f64>,
    pub max_residual: f64,
    pub note: String,
}

/// Look up a shipped preset by name.
pub fn preset(name: &str) -> Result<NoisePreset> {
    let text = match name {
        "paper-5m" => include_str!("../presets/paper-5m.json"),
        "paper-1km" => include_str!("../presets/paper-1km.json"),
        other => bail!("unknown preset '{other}' (available: paper-5m, paper-1km)"),
    };
    Ok(serde_json::from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_presets_parse() {
        for name in ["paper-5m", "paper-1km"] {
            let p = preset(name).unwrap();
            assert_eq!(p.name, name);
            assert!(p.noise.source_visibility > 0.9 && p.noise.source_visibility < 1.0);
            assert!(p.provenance.max_residual < 0.02);
        }
        assert!(preset("paper-5km").is_err());
    }

    #[test]
    fn preset_fiber_lengths_match_their_names() {
        assert!((preset("paper-5m").unwrap().noise.fiber_km - 0.005).abs() < 1e-12);
        assert!((preset("paper-1km").unwrap().noise.fiber_km - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation_catches_missing_fields() {
        let bad: ExperimentConfig = serde_json::from_str(
            r#"{"experiment": "state-tomo", "shots": "exact", "seed": 1}"#,
        )
        .unwrap();
        assert!(bad.validate().is_err());

        let good: ExperimentConfig = serde_json::from_str(
            r#"{"experiment": "truth-table", "shots": 100, "seed": 1}"#,
        )
        .unwrap();
        good.validate().unwrap();
        assert_eq!(good.mode, Mode::PostSelected);
    }

    #[test]
    fn zero_shots_is_rejected_at_parse_time() {
        let parsed: Result<ExperimentConfig, _> = serde_json::from_str(
            r#"{"experiment": "truth-table", "shots": 0, "seed": 1}"#,
        );
        assert!(parsed.is_err());
    }
}
