//! Fit the noise-model knobs to the reported experiment fidelities.
//!
//! The model has one coherence knob per preset tier: the source's Werner
//! visibility `v` is fitted against the 5 m state and process fidelities,
//! then the per-trial phase jitter `sigma` is fitted against the 1 km
//! numbers with `v` held fixed. Objectives are evaluated on the actual
//! exact-mode simulation, not the closed form, so the fit stays honest;
//! the closed form serves as a test oracle.

use std::collections::BTreeMap;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use chiplink_core::channel::{CompensatorSetting, LossBudget, NoiseConfig};
use chiplink_core::experiments::{
    distributed_pair_tomography, entangling_run, process_tomography_run,
};
use chiplink_core::protocol::{Mode, Shots};

use crate::config::{NoisePreset, PresetProvenance};

/// Reported fidelities the presets are fitted to.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseTargets {
    pub state_fidelity_5m: f64,
    pub process_fidelity_5m: f64,
    pub entangled_fidelity_1km: f64,
    pub process_fidelity_1km: f64,
}

impl Default for NoiseTargets {
    /// The reported values: 95.76% distributed-state and 94.81% process
    /// fidelity at 5 m; 94.07% average entangled and 93.04% process
    /// fidelity at 1 km.
    fn default() -> Self {
        Self {
            state_fidelity_5m: 0.9576,
            process_fidelity_5m: 0.9481,
            entangled_fidelity_1km: 0.9407,
            process_fidelity_1km: 0.9304,
        }
    }
}

/// Residual threshold beyond which the targets are declared infeasible
/// for this noise model.
pub const FEASIBILITY_TOLERANCE: f64 = 0.02;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitOutcome {
    pub preset_5m: NoisePreset,
    pub preset_1km: NoisePreset,
    pub feasible: bool,
    pub max_residual: f64,
}

/// Golden-section minimization of a unimodal objective on `[lo, hi]`.
fn golden_section(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, iters: usize) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    // Compare the bracket midpoint with the endpoints: boundary optima
    // (e.g. a perfect source, v = 1) must be representable exactly.
    let mid = (a + b) / 2.0;
    let candidates = [(mid, f(mid)), (lo, f(lo)), (hi, f(hi))];
    candidates
        .iter()
        .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
        .map(|(x, _)| *x)
        .unwrap()
}

fn base_noise(v: f64, sigma: f64, fiber_km: f64) -> NoiseConfig {
    NoiseConfig {
        source_visibility: v,
        drift: [0.0; 3],
        phase_jitter_sigma: sigma,
        losses_db: LossBudget::chip_default(),
        fiber_km,
    }
}

fn exact_state_fidelity(noise: &NoiseConfig) -> f64 {
    distributed_pair_tomography(noise, &CompensatorSetting::identity(), Shots::Exact, 0)
        .expect("exact pair tomography")
        .fidelity
}

fn exact_process_fidelity(noise: &NoiseConfig) -> f64 {
    process_tomography_run(noise, &CompensatorSetting::identity(), Mode::PostSelected, Shots::Exact, 0)
        .expect("exact process tomography")
        .fidelity
}

fn exact_entangled_fidelity(noise: &NoiseConfig) -> f64 {
    entangling_run(noise, &CompensatorSetting::identity(), Mode::PostSelected, Shots::Exact, 0)
        .expect("exact entangling run")
        .mean_fidelity
}

/// Fit the presets to the targets. Returns the presets with provenance;
/// `feasible` is false when the best fit misses any target by more than
/// [`FEASIBILITY_TOLERANCE`].
pub fn calibrate_noise(targets: &NoiseTargets) -> Result<FitOutcome> {
    // Stage 1: visibility against the 5 m numbers.
    let objective_v = |v: f64| {
        let noise = base_noise(v, 0.0, 0.005);
        let state = exact_state_fidelity(&noise);
        let process = exact_process_fidelity(&noise);
        (state - targets.state_fidelity_5m).powi(2)
            + (process - targets.process_fidelity_5m).powi(2)
    };
    let v = golden_section(objective_v, 0.0, 1.0, 36);

    let noise_5m = base_noise(v, 0.0, 0.005);
    let achieved_state_5m = exact_state_fidelity(&noise_5m);
    let achieved_process_5m = exact_process_fidelity(&noise_5m);

    // Stage 2: phase jitter against the 1 km numbers, v fixed.
    let objective_sigma = |sigma: f64| {
        let noise = base_noise(v, sigma, 1.0);
        let entangled = exact_entangled_fidelity(&noise);
        let process = exact_process_fidelity(&noise);
        (entangled - targets.entangled_fidelity_1km).powi(2)
            + (process - targets.process_fidelity_1km).powi(2)
    };
    let sigma = golden_section(objective_sigma, 0.0, 1.2, 36);

    let noise_1km = base_noise(v, sigma, 1.0);
    let achieved_entangled_1km = exact_entangled_fidelity(&noise_1km);
    let achieved_process_1km = exact_process_fidelity(&noise_1km);

    let residuals = [
        (achieved_state_5m - targets.state_fidelity_5m).abs(),
        (achieved_process_5m - targets.process_fidelity_5m).abs(),
        (achieved_entangled_1km - targets.entangled_fidelity_1km).abs(),
        (achieved_process_1km - targets.process_fidelity_1km).abs(),
    ];
    let max_residual = residuals.iter().cloned().fold(0.0, f64::max);

    let note = "calibration-target reproduction, not an independent prediction".to_string();
    let method = "golden-section fit of source visibility (5 m state/process targets), \
                  then phase jitter (1 km entangled/process targets), against the \
                  exact-mode simulation"
        .to_string();

    let preset_5m = NoisePreset {
        name: "paper-5m".into(),
        noise: noise_5m,
        provenance: PresetProvenance {
            method: method.clone(),
            targets: BTreeMap::from([
                ("state_fidelity".into(), targets.state_fidelity_5m),
                ("process_fidelity".into(), targets.process_fidelity_5m),
            ]),
            achieved: BTreeMap::from([
                ("state_fidelity".into(), achieved_state_5m),
                ("process_fidelity".into(), achieved_process_5m),
            ]),
            max_residual: residuals[0].max(residuals[1]),
            note: note.clone(),
        },
    };
    let preset_1km = NoisePreset {
        name: "paper-1km".into(),
        noise: noise_1km,
        provenance: PresetProvenance {
            method,
            targets: BTreeMap::from([
                ("entangled_fidelity".into(), targets.entangled_fidelity_1km),
                ("process_fidelity".into(), targets.process_fidelity_1km),
            ]),
            achieved: BTreeMap::from([
                ("entangled_fidelity".into(), achieved_entangled_1km),
                ("process_fidelity".into(), achieved_process_1km),
            ]),
            max_residual: residuals[2].max(residuals[3]),
            note,
        },
    };

    Ok(FitOutcome {
        preset_5m,
        preset_1km,
        feasible: max_residual <= FEASIBILITY_TOLERANCE,
        max_residual,
    })
}
