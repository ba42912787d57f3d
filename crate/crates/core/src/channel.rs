//! The chip-to-chip fiber interconnect: source imperfection, polarization
//! drift on the transmitted qubit, per-trial phase jitter, loss budget,
//! and the polarization-compensation search with its isolation figure.
//!
//! Loss is classical: coincidence post-selection turns every dB of the
//! path budget into a rate penalty, never a change of the kept state.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::operator::{ops, Operator};
use crate::optim::nelder_mead;
use crate::rng::RngStream;
use crate::state::{MixedState, PureState};

/// The qubit whose photon crosses the fiber.
pub const TRANSMITTED_QUBIT: u8 = 3;

/// Isolation threshold the compensation procedure must reach.
pub const ISOLATION_TARGET: f64 = 200.0;

/// Per-element insertion losses in dB.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    pub pbrc_te: f64,
    pub pbrc_tm: f64,
    pub coupler_te: f64,
    pub coupler_tm: f64,
    pub fiber_per_km: f64,
}

impl LossBudget {
    /// The measured chip-to-chip budget: PBRC 0.6/0.4 dB, couplers
    /// 3.57/3.42 dB, fiber 0.6 dB per km.
    pub fn chip_default() -> Self {
        Self { pbrc_te: 0.6, pbrc_tm: 0.4, coupler_te: 3.57, coupler_tm: 3.42, fiber_per_km: 0.6 }
    }

    pub fn zero() -> Self {
        Self { pbrc_te: 0.0, pbrc_tm: 0.0, coupler_te: 0.0, coupler_tm: 0.0, fiber_per_km: 0.0 }
    }

    pub fn total_db(&self, fiber_km: f64) -> f64 {
        self.pbrc_te + self.pbrc_tm + self.coupler_te + self.coupler_tm + self.fiber_per_km * fiber_km
    }

    fn entries(&self) -> [f64; 5] {
        [self.pbrc_te, self.pbrc_tm, self.coupler_te, self.coupler_tm, self.fiber_per_km]
    }
}

/// Full noise model of one interconnect configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Werner mixing weight of the pair source; 1 is a perfect source.
    pub source_visibility: f64,
    /// Euler angles (ZYZ) of the fiber unitary on the transmitted qubit.
    pub drift: [f64; 3],
    /// Standard deviation (rad) of the per-trial Z rotation on the
    /// transmitted qubit.
    pub phase_jitter_sigma: f64,
    /// Insertion losses in dB.
    pub losses_db: LossBudget,
    /// Interconnect length in km.
    pub fiber_km: f64,
}

impl NoiseConfig {
    /// No noise, no loss: the protocol's ideal-case configuration.
    pub fn ideal() -> Self {
        Self {
            source_visibility: 1.0,
            drift: [0.0; 3],
            phase_jitter_sigma: 0.0,
            losses_db: LossBudget::zero(),
            fiber_km: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.source_visibility) {
            return Err(CoreError::InvalidConfig(format!(
                "source visibility {} outside [0, 1]",
                self.source_visibility
            )));
        }
        if self.drift.iter().any(|a| !a.is_finite()) {
            return Err(CoreError::InvalidConfig("drift angles must be finite".into()));
        }
        if self.phase_jitter_sigma < 0.0 || !self.phase_jitter_sigma.is_finite() {
            return Err(CoreError::InvalidConfig("phase jitter sigma must be >= 0".into()));
        }
        if self.losses_db.entries().iter().any(|&db| db < 0.0) || self.fiber_km < 0.0 {
            return Err(CoreError::InvalidConfig("losses and fiber length must be >= 0".into()));
        }
        Ok(())
    }

    /// Probability that the transmitted photon survives the lossy path.
    pub fn survival_probability(&self) -> f64 {
        10f64.powf(-self.losses_db.total_db(self.fiber_km) / 10.0)
    }

    pub fn drift_unitary(&self) -> Operator {
        ops::euler(self.drift)
    }

    /// True when the config neither mixes nor rotates the state.
    pub fn is_noiseless(&self) -> bool {
        self.source_visibility == 1.0
            && self.drift == [0.0; 3]
            && self.phase_jitter_sigma == 0.0
    }
}

/// Correction unitary angles applied on arrival.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompensatorSetting {
    pub angles: [f64; 3],
}

impl CompensatorSetting {
    pub fn identity() -> Self {
        Self { angles: [0.0; 3] }
    }

    pub fn unitary(&self) -> Operator {
        ops::euler(self.angles)
    }
}

/// How the per-trial phase jitter enters a channel application.
pub enum Jitter<'a> {
    /// Ensemble average: the exact dephasing channel with coherence
    /// factor `exp(-sigma^2 / 2)`.
    Average,
    /// One trial: a Z rotation with angle drawn from `N(0, sigma)`.
    Sample(&'a mut RngStream),
}

fn apply_pair_unitaries(
    state: &MixedState,
    cfg: &NoiseConfig,
    comp: &CompensatorSetting,
    jitter: Jitter,
) -> Result<MixedState> {
    let q = TRANSMITTED_QUBIT;
    let mut out = state.apply(&cfg.drift_unitary(), &[q])?;
    out = out.apply(&comp.unitary(), &[q])?;
    match jitter {
        Jitter::Average => {
            let lambda = (-cfg.phase_jitter_sigma.powi(2) / 2.0).exp();
            if lambda < 1.0 {
                let plain = out.clone();
                let flipped = out.apply(&ops::pauli_z(), &[q])?;
                let rho = plain.matrix().scale((1.0 + lambda) / 2.0)
                    + flipped.matrix().scale((1.0 - lambda) / 2.0);
                out = MixedState::with_labels(rho, state.labels().to_vec())?;
            }
        }
        Jitter::Sample(rng) => {
            if cfg.phase_jitter_sigma > 0.0 {
                let eps = rng.normal(cfg.phase_jitter_sigma);
                out = out.apply(&ops::phase(eps), &[q])?;
            }
        }
    }
    Ok(out)
}

/// Pass a state holding the entangled pair through the interconnect.
///
/// Applies the drift unitary then the compensator on the transmitted
/// qubit, Werner-mixes the pair `(2, 3)` at the source, and applies phase
/// jitter. Returns the transformed state and the survival probability;
/// survival scales coincidence rates only and never alters the
/// post-selected state.
pub fn apply_channel(
    state: &MixedState,
    cfg: &NoiseConfig,
    comp: &CompensatorSetting,
    jitter: Jitter,
) -> Result<(MixedState, f64)> {
    cfg.validate()?;
    let mut out = apply_pair_unitaries(state, cfg, comp, jitter)?;

    let v = cfg.source_visibility;
    if v < 1.0 {
        // rho -> v rho + (1 - v) (I/4 (x) Tr_23 rho)
        let pair: Vec<u8> = vec![2, 3];
        let keep: Vec<u8> = state.labels().iter().cloned().filter(|l| !pair.contains(l)).collect();
        let mixed_pair = MixedState::maximally_mixed(&pair);
        let replaced = if keep.is_empty() {
            mixed_pair
        } else {
            out.partial_trace(&keep)?.tensor(&mixed_pair)?
        };
        let rho = out.matrix().scale(v) + replaced.matrix().scale(1.0 - v);
        out = MixedState::with_labels(rho, state.labels().to_vec())?;
    }

    Ok((out, cfg.survival_probability()))
}

/// Trajectory version for pure-state trials: Werner mixing is unraveled
/// into "keep the pair" versus "replace it with a random basis pair".
///
/// The pair must be a `(2, 3)`-labeled pure state; the returned state is
/// one trajectory whose ensemble equals [`apply_channel`].
pub fn apply_channel_trajectory(
    pair: &PureState,
    cfg: &NoiseConfig,
    comp: &CompensatorSetting,
    rng: &mut RngStream,
) -> Result<PureState> {
    cfg.validate()?;
    let mut out = if cfg.source_visibility < 1.0 {
        // Draw order: Werner selector first, then (implicitly) the basis pair.
        let u = rng.uniform();
        if u < cfg.source_visibility {
            pair.clone()
        } else {
            let index = (rng.uniform() * 4.0) as usize;
            PureState::basis(pair.labels(), index.min(3))
        }
    } else {
        pair.clone()
    };
    let q = TRANSMITTED_QUBIT;
    out = out.apply(&cfg.drift_unitary(), &[q])?;
    out = out.apply(&comp.unitary(), &[q])?;
    if cfg.phase_jitter_sigma > 0.0 {
        let eps = rng.normal(cfg.phase_jitter_sigma);
        out = out.apply(&ops::phase(eps), &[q])?;
    }
    Ok(out)
}

/// `max/min` outcome ratio per transmitted probe state; the channel's
/// figure of merit is the worst (minimum) ratio over the probe set.
/// A vanishing minimum count reports the infinite-isolation sentinel.
pub fn isolation_degree(probe_results: &[(f64, f64)]) -> f64 {
    probe_results
        .iter()
        .map(|&(max, min)| if min <= 0.0 { f64::INFINITY } else { max / min })
        .fold(f64::INFINITY, f64::min)
}

/// The bright-light probe states sent for compensation: Z eigenstates and
/// the two equators `|+>`, `|+i>`.
pub fn probe_states() -> [PureState; 4] {
    let h = Complex64::new(0.5f64.sqrt(), 0.0);
    let ih = Complex64::new(0.0, 0.5f64.sqrt());
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    [
        PureState::qubit(TRANSMITTED_QUBIT, one, zero).unwrap(),
        PureState::qubit(TRANSMITTED_QUBIT, zero, one).unwrap(),
        PureState::qubit(TRANSMITTED_QUBIT, h, h).unwrap(),
        PureState::qubit(TRANSMITTED_QUBIT, h, ih).unwrap(),
    ]
}

/// Exact aligned-port probability for each probe through drift + candidate
/// compensator: the receiver analyzes in the probe's own basis.
fn probe_alignments(drift: &Operator, comp_angles: &[f64]) -> [f64; 4] {
    let comp = ops::euler([comp_angles[0], comp_angles[1], comp_angles[2]]);
    let through = comp.compose(drift).unwrap();
    let mut out = [0.0; 4];
    for (k, probe) in probe_states().iter().enumerate() {
        let received = probe.apply(&through, &[TRANSMITTED_QUBIT]).unwrap();
        out[k] = probe.overlap(&received);
    }
    out
}

/// Per-probe (max, min) port outcomes for a compensator setting, in
/// bright-light mode (exact probabilities).
pub fn probe_outcomes(cfg: &NoiseConfig, comp: &CompensatorSetting) -> [(f64, f64); 4] {
    let aligned = probe_alignments(&cfg.drift_unitary(), &comp.angles);
    aligned.map(|p| (p.max(1.0 - p), p.min(1.0 - p)))
}

/// Report from the compensation procedure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub angles: [f64; 3],
    /// Worst-case isolation over the probe set; `None` encodes the
    /// infinite-isolation sentinel (a vanishing minimum outcome).
    pub worst_isolation: Option<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

impl CalibrationReport {
    pub fn isolation_value(&self) -> f64 {
        self.worst_isolation.unwrap_or(f64::INFINITY)
    }
}

/// Search for compensator angles that realign every probe state.
///
/// Derivative-free simplex descent over the three Euler angles with
/// random restarts, stopping once every probe reaches the isolation
/// threshold. Exhausting the budget below threshold is an error carrying
/// the best setting found.
pub fn calibrate_compensator(
    cfg: &NoiseConfig,
    budget: usize,
    seed: u64,
) -> std::result::Result<CalibrationReport, (CoreError, CalibrationReport)> {
    let drift = cfg.drift_unitary();
    let mut evals = 0usize;
    let mut best: Option<(f64, Vec<f64>)> = None;

    let mut rng = RngStream::new(seed, 0);
    let restarts = 8usize;
    for restart in 0..restarts {
        if evals >= budget {
            break;
        }
        let start: Vec<f64> = if restart == 0 {
            vec![0.0, 0.0, 0.0]
        } else {
            (0..3).map(|_| rng.uniform_in(-std::f64::consts::PI, std::f64::consts::PI)).collect()
        };
        let mut objective = |angles: &[f64]| -> f64 {
            probe_alignments(&drift, angles).iter().map(|p| 1.0 - p).sum()
        };
        let run = nelder_mead(&mut objective, &start, 0.8, (budget - evals).min(400));
        evals += run.evaluations;
        if best.as_ref().map_or(true, |(v, _)| run.value < *v) {
            best = Some((run.value, run.best.clone()));
        }
        let setting = CompensatorSetting { angles: [run.best[0], run.best[1], run.best[2]] };
        let isolation = isolation_degree(&probe_outcomes(cfg, &setting));
        if isolation >= ISOLATION_TARGET {
            return Ok(CalibrationReport {
                angles: setting.angles,
                worst_isolation: isolation.is_finite().then_some(isolation),
                evaluations: evals,
                converged: true,
            });
        }
    }

    let (_, angles) = best.expect("at least one restart ran");
    let setting = CompensatorSetting { angles: [angles[0], angles[1], angles[2]] };
    let isolation = isolation_degree(&probe_outcomes(cfg, &setting));
    let report = CalibrationReport {
        angles: setting.angles,
        worst_isolation: isolation.is_finite().then_some(isolation),
        evaluations: evals,
        converged: false,
    };
    Err((
        CoreError::CalibrationBudgetExhausted { evaluations: evals, best: report.isolation_value() },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{bell_state, fidelity_state, BellKind};
    use approx::assert_abs_diff_eq;

    /// Pair state on labels (2, 3) as the protocol prepares it.
    fn pair() -> MixedState {
        let bell = bell_state(BellKind::PhiPlus);
        PureState::with_labels(bell.amplitudes().clone(), vec![2, 3]).unwrap().density()
    }

    #[test]
    fn lossless_identity_channel_preserves_state() {
        let cfg = NoiseConfig { losses_db: LossBudget::chip_default(), ..NoiseConfig::ideal() };
        let (out, survival) =
            apply_channel(&pair(), &cfg, &CompensatorSetting::identity(), Jitter::Average).unwrap();
        assert!((out.matrix() - pair().matrix()).camax() < 1e-12);
        let expected_db = 0.6 + 0.4 + 3.57 + 3.42;
        assert_abs_diff_eq!(survival, 10f64.powf(-expected_db / 10.0), epsilon = 1e-15);
    }

    #[test]
    fn compensator_inverts_known_drift() {
        let drift = [0.4, -1.1, 2.0];
        let cfg = NoiseConfig { drift, ..NoiseConfig::ideal() };
        // Exact inverse of Rz(a) Ry(b) Rz(g) is Rz(-g) Ry(-b) Rz(-a).
        let comp = CompensatorSetting { angles: [-drift[2], -drift[1], -drift[0]] };
        let (out, survival) = apply_channel(&pair(), &cfg, &comp, Jitter::Average).unwrap();
        assert!((out.matrix() - pair().matrix()).camax() < 1e-12);
        assert_abs_diff_eq!(survival, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn perfect_source_preserves_bell_marginal() {
        let cfg = NoiseConfig::ideal();
        let (out, _) =
            apply_channel(&pair(), &cfg, &CompensatorSetting::identity(), Jitter::Average).unwrap();
        assert_abs_diff_eq!(fidelity_state(&out, &pair()).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn werner_mixing_hits_the_trace_formula() {
        let cfg = NoiseConfig { source_visibility: 0.95, ..NoiseConfig::ideal() };
        let (out, _) =
            apply_channel(&pair(), &cfg, &CompensatorSetting::identity(), Jitter::Average).unwrap();
        // v + (1 - v)/4 = 0.9625
        assert_abs_diff_eq!(fidelity_state(&out, &pair()).unwrap(), 0.9625, epsilon = 1e-12);
    }

    #[test]
    fn channel_preserves_trace_and_positivity() {
        let mut rng = RngStream::new(31, 0);
        for k in 0..25 {
            let cfg = NoiseConfig {
                source_visibility: rng.uniform(),
                drift: [rng.uniform_in(-3.0, 3.0), rng.uniform_in(-3.0, 3.0), rng.uniform_in(-3.0, 3.0)],
                phase_jitter_sigma: rng.uniform_in(0.0, 0.5),
                losses_db: LossBudget::chip_default(),
                fiber_km: 1.0,
            };
            let comp = CompensatorSetting { angles: [rng.uniform_in(-3.0, 3.0), 0.3, -0.2] };
            let (out, _) = apply_channel(&pair(), &cfg, &comp, Jitter::Average).unwrap();
            assert!((out.trace().re - 1.0).abs() < 1e-12, "trace broke at case {k}");
            assert!(out.hermiticity_defect() < 1e-12);
            let min_eig = out.eigenvalues()[0];
            assert!(min_eig > -1e-10, "negative eigenvalue {min_eig}");
        }
    }

    #[test]
    fn unit_visibility_werner_is_amplitude_exact_identity() {
        let mut rng = RngStream::new(32, 0);
        let u = ops::random_unitary(4, &mut rng);
        let state = PureState::basis(&[2, 3], 0).apply(&u, &[2, 3]).unwrap().density();
        let cfg = NoiseConfig::ideal();
        let (out, _) =
            apply_channel(&state, &cfg, &CompensatorSetting::identity(), Jitter::Average).unwrap();
        assert!((out.matrix() - state.matrix()).camax() == 0.0);
    }

    #[test]
    fn survival_is_monotone_in_every_loss_entry() {
        let base = NoiseConfig { losses_db: LossBudget::chip_default(), fiber_km: 1.0, ..NoiseConfig::ideal() };
        let s0 = base.survival_probability();
        for bump in 0..5 {
            let mut losses = LossBudget::chip_default();
            match bump {
                0 => losses.pbrc_te += 0.5,
                1 => losses.pbrc_tm += 0.5,
                2 => losses.coupler_te += 0.5,
                3 => losses.coupler_tm += 0.5,
                _ => losses.fiber_per_km += 0.5,
            }
            let bumped = NoiseConfig { losses_db: losses, ..base.clone() };
            assert!(bumped.survival_probability() < s0);
        }
    }

    #[test]
    fn isolation_examples() {
        assert_abs_diff_eq!(isolation_degree(&[(201.0, 1.0)]), 201.0, epsilon = 1e-12);
        assert_abs_diff_eq!(isolation_degree(&[(100.0, 100.0)]), 1.0, epsilon = 1e-12);
        assert!(isolation_degree(&[(1.0, 0.0)]).is_infinite());
    }

    #[test]
    fn identity_drift_needs_no_compensation() {
        let cfg = NoiseConfig::ideal();
        let report = calibrate_compensator(&cfg, 2000, 0).unwrap();
        assert!(report.converged);
        assert!(report.isolation_value() >= ISOLATION_TARGET);
        let comp = CompensatorSetting { angles: report.angles };
        let composed = comp.unitary().compose(&cfg.drift_unitary()).unwrap();
        let process_fidelity = composed.matrix().trace().norm_sqr() / 4.0;
        assert!(process_fidelity > 1.0 - 1.0 / 201.0);
    }

    #[test]
    fn known_drift_is_inverted_up_to_phase() {
        let cfg = NoiseConfig { drift: [0.7, 1.9, -2.3], ..NoiseConfig::ideal() };
        let report = calibrate_compensator(&cfg, 2000, 1).unwrap();
        assert!(report.isolation_value() >= ISOLATION_TARGET);
        let comp = CompensatorSetting { angles: report.angles };
        let composed = comp.unitary().compose(&cfg.drift_unitary()).unwrap();
        // Process fidelity to the identity implies the isolation bound.
        let process_fidelity = composed.matrix().trace().norm_sqr() / 4.0;
        assert!(process_fidelity >= 0.995, "process fidelity {process_fidelity}");
    }

    #[test]
    fn random_drifts_calibrate_within_budget() {
        let mut rng = RngStream::new(77, 0);
        for case in 0..10 {
            let cfg = NoiseConfig {
                drift: [
                    rng.uniform_in(-std::f64::consts::PI, std::f64::consts::PI),
                    rng.uniform_in(-std::f64::consts::PI, std::f64::consts::PI),
                    rng.uniform_in(-std::f64::consts::PI, std::f64::consts::PI),
                ],
                ..NoiseConfig::ideal()
            };
            let report = calibrate_compensator(&cfg, 2000, 100 + case).unwrap();
            assert!(report.evaluations <= 2000);
            assert!(report.isolation_value() >= ISOLATION_TARGET, "case {case}");
        }
    }

    #[test]
    fn trajectory_matches_channel_ensemble() {
        let cfg = NoiseConfig {
            source_visibility: 0.9,
            drift: [0.3, 0.8, -0.4],
            phase_jitter_sigma: 0.2,
            losses_db: LossBudget::zero(),
            fiber_km: 0.0,
        };
        let comp = CompensatorSetting { angles: [0.1, -0.2, 0.5] };
        let pure_pair = {
            let bell = bell_state(BellKind::PhiPlus);
            PureState::with_labels(bell.amplitudes().clone(), vec![2, 3]).unwrap()
        };
        let mut rng = RngStream::new(5150, 0);
        let trials = 40_000;
        let mut acc = nalgebra::DMatrix::from_element(4, 4, Complex64::new(0.0, 0.0));
        for _ in 0..trials {
            let traj = apply_channel_trajectory(&pure_pair, &cfg, &comp, &mut rng).unwrap();
            acc += traj.density().matrix();
        }
        acc /= Complex64::new(trials as f64, 0.0);
        let (exact, _) = apply_channel(&pure_pair.density(), &cfg, &comp, Jitter::Average).unwrap();
        // Monte-Carlo agreement at ~1/sqrt(trials).
        assert!((acc - exact.matrix()).camax() < 0.02);
    }
}
