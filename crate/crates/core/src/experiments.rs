//! Experiment drivers composing protocol runs with tomography: truth
//! table, entangling runs, distributed-pair verification, interference
//! fringes, and full process tomography.

use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, CompensatorSetting, Jitter, NoiseConfig};
use crate::error::Result;
use crate::operator::Basis;
use crate::protocol::{
    sample_counts, source_pair, InputSpec, Mode, Shots, TrialSetup,
};
use crate::rng::RngStream;
use crate::state::{bell_state, fidelity_to_pure, BellKind, MixedState, PureState};
use crate::tomography::{
    reconstruct_process, reconstruct_state, settings, ChiMatrix, Letter, ProcessReconstruction,
    StateCounts, StateReconstruction,
};

/// Tomography counts of the teleported output for a given input: one
/// protocol run per measurement setting.
pub fn output_state_counts(
    setup: &TrialSetup,
    shots: Shots,
    seed: u64,
) -> Result<StateCounts> {
    let mut counts = StateCounts::default();
    for (idx, setting) in settings().iter().enumerate() {
        let bases = [setting[0].basis(), setting[1].basis()];
        let mut rng = RngStream::new(seed, idx as u64);
        let table = sample_counts(setup, bases, shots, &mut rng)?;
        counts.insert(*setting, table.outcomes);
    }
    Ok(counts)
}

/// Truth table of the teleported gate over the four logical inputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruthTable {
    /// Rows are inputs `|00>, |01>, |10>, |11>` of qubits 1&4; columns are
    /// measured outputs, normalized over kept trials.
    pub matrix: [[f64; 4]; 4],
    /// Mean probability of the correct output over the four rows.
    pub fidelity: f64,
}

/// Measure the computational-basis truth table.
pub fn truth_table(
    noise: &NoiseConfig,
    comp: &CompensatorSetting,
    mode: Mode,
    shots: Shots,
    seed: u64,
) -> Result<TruthTable> {
    let inputs = [
        (Letter::Zero, Letter::Zero),
        (Letter::Zero, Letter::One),
        (Letter::One, Letter::Zero),
        (Letter::One, Letter::One),
    ];
    // CNOT on (control 1, target 4).
    let correct = [0usize, 1, 3, 2];
    let mut matrix = [[0.0; 4]; 4];
    let mut fidelity = 0.0;
    for (row, (q1, q4)) in inputs.iter().enumerate() {
        let setup = TrialSetup {
            input: InputSpec::alphabet(*q1, *q4),
            noise: noise.clone(),
            compensator: *comp,
            mode,
        };
        let mut rng = RngStream::new(seed, row as u64);
        let table = sample_counts(&setup, [Basis::Z, Basis::Z], shots, &mut rng)?;
        matrix[row] = table.normalized();
        fidelity += matrix[row][correct[row]] / 4.0;
    }
    Ok(TruthTable { matrix, fidelity })
}

/// The four entangling inputs `|+->_1 |0/1>_4` and their Bell targets.
pub fn entangling_cases() -> [(InputSpec, BellKind); 4] {
    let h = 0.5f64.sqrt();
    let plus = [[h, 0.0], [h, 0.0]];
    let minus = [[h, 0.0], [-h, 0.0]];
    let zero = [[1.0, 0.0], [0.0, 0.0]];
    let one = [[0.0, 0.0], [1.0, 0.0]];
    [
        (InputSpec::Amplitudes { q1: plus, q4: zero }, BellKind::PhiPlus),
        (InputSpec::Amplitudes { q1: minus, q4: zero }, BellKind::PhiMinus),
        (InputSpec::Amplitudes { q1: plus, q4: one }, BellKind::PsiPlus),
        (InputSpec::Amplitudes { q1: minus, q4: one }, BellKind::PsiMinus),
    ]
}

/// Result of the Bell-generation experiment.
#[derive(Clone, Debug)]
pub struct EntanglingRun {
    pub reconstructions: Vec<StateReconstruction>,
    pub counts: Vec<StateCounts>,
    pub fidelities: [f64; 4],
    pub mean_fidelity: f64,
}

/// Drive the four superposition inputs through the protocol and compare
/// each reconstructed output against its Bell target.
pub fn entangling_run(
    noise: &NoiseConfig,
    comp: &CompensatorSetting,
    mode: Mode,
    shots: Shots,
    seed: u64,
) -> Result<EntanglingRun> {
    let mut reconstructions = Vec::with_capacity(4);
    let mut all_counts = Vec::with_capacity(4);
    let mut fidelities = [0.0; 4];
    for (case, (input, target)) in entangling_cases().iter().enumerate() {
        let setup = TrialSetup {
            input: input.clone(),
            noise: noise.clone(),
            compensator: *comp,
            mode,
        };
        let counts = output_state_counts(&setup, shots, seed.wrapping_add(case as u64 * 1000))?;
        let recon = reconstruct_state(&counts)?;
        let bell = bell_state(*target);
        let bell14 = PureState::with_labels(bell.amplitudes().clone(), vec![1, 4]).unwrap();
        fidelities[case] = fidelity_to_pure(&recon.rho, &bell14)?;
        reconstructions.push(recon);
        all_counts.push(counts);
    }
    let mean_fidelity = fidelities.iter().sum::<f64>() / 4.0;
    Ok(EntanglingRun { reconstructions, counts: all_counts, fidelities, mean_fidelity })
}

/// Bell target of each entangling case on labels `[1, 4]`.
pub fn entangling_targets() -> [PureState; 4] {
    entangling_cases().map(|(_, kind)| {
        let bell = bell_state(kind);
        PureState::with_labels(bell.amplitudes().clone(), vec![1, 4]).unwrap()
    })
}

/// The distributed pair after the channel, before any teleportation.
pub fn distributed_pair(noise: &NoiseConfig, comp: &CompensatorSetting) -> Result<MixedState> {
    let (pair, _) = apply_channel(&source_pair().density(), noise, comp, Jitter::Average)?;
    Ok(pair)
}

/// Tomography of the distributed pair: the network-verification number.
#[derive(Clone, Debug)]
pub struct PairVerification {
    pub reconstruction: StateReconstruction,
    pub fidelity: f64,
}

pub fn distributed_pair_tomography(
    noise: &NoiseConfig,
    comp: &CompensatorSetting,
    shots: Shots,
    seed: u64,
) -> Result<PairVerification> {
    let pair = distributed_pair(noise, comp)?;
    let counts = match shots {
        Shots::Exact => crate::tomography::exact_state_counts(&pair),
        Shots::N(n) => crate::tomography::sampled_state_counts(&pair, n, seed),
    };
    let reconstruction = reconstruct_state(&counts)?;
    let target = source_pair();
    let fidelity = fidelity_to_pure(&reconstruction.rho, &target)?;
    Ok(PairVerification { reconstruction, fidelity })
}

/// One interference fringe: analyzer phase scan on qubit 2 against a
/// fixed analyzer on qubit 3.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FringeScan {
    pub fixed_basis: Basis,
    pub points: Vec<(f64, f64)>,
    pub visibility: f64,
}

/// Correlation-fringe visibility of the distributed pair, averaged over
/// two fixed analyzer bases on the transmitted qubit.
pub fn fringe_visibility(
    noise: &NoiseConfig,
    comp: &CompensatorSetting,
    phase_points: usize,
    shots: Shots,
    seed: u64,
) -> Result<(Vec<FringeScan>, f64)> {
    let pair = distributed_pair(noise, comp)?;
    let mut scans = Vec::new();
    for (scan_idx, fixed) in [Basis::X, Basis::Y].iter().enumerate() {
        let fixed_proj = fixed.projector(0);
        let mut points = Vec::with_capacity(phase_points);
        for k in 0..phase_points {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / (phase_points - 1) as f64;
            // Analyzer vector (|0> + e^{i phi} |1>)/sqrt(2) on qubit 2.
            let h = 0.5f64.sqrt();
            let analyzer = PureState::qubit(
                2,
                num_complex::Complex64::new(h, 0.0),
                num_complex::Complex64::from_polar(h, phi),
            )?;
            let proj2 = crate::operator::Operator::from_matrix(
                analyzer.amplitudes() * analyzer.amplitudes().adjoint(),
            )?;
            let joint = proj2.kronecker(&fixed_proj);
            let p = pair.expectation(&joint, &[2, 3])?.re.max(0.0);
            let count = match shots {
                Shots::Exact => p,
                Shots::N(n) => {
                    let mut rng =
                        RngStream::new(seed, (scan_idx * phase_points + k) as u64);
                    rng.multinomial(&[p, 1.0 - p], n)[0] as f64
                }
            };
            points.push((phi, count));
        }
        let visibility = crate::tomography::visibility(&points)?;
        scans.push(FringeScan { fixed_basis: *fixed, points, visibility });
    }
    let mean = scans.iter().map(|s| s.visibility).sum::<f64>() / scans.len() as f64;
    Ok((scans, mean))
}

/// Full process tomography of the teleported gate.
pub struct ProcessRun {
    pub reconstruction: ProcessReconstruction,
    pub counts: Vec<StateCounts>,
    pub fidelity: f64,
}

pub fn process_tomography_run(
    noise: &NoiseConfig,
    comp: &CompensatorSetting,
    mode: Mode,
    shots: Shots,
    seed: u64,
) -> Result<ProcessRun> {
    let inputs = settings();
    let mut counts: Vec<StateCounts> = Vec::with_capacity(16);
    for (k, letters) in inputs.iter().enumerate() {
        let setup = TrialSetup {
            input: InputSpec::alphabet(letters[0], letters[1]),
            noise: noise.clone(),
            compensator: *comp,
            mode,
        };
        counts.push(output_state_counts(&setup, shots, seed.wrapping_add(k as u64 * 100_000))?);
    }
    let tables: [StateCounts; 16] = counts.clone().try_into().unwrap();
    let reconstruction = reconstruct_process(&inputs, &tables)?;
    let fidelity =
        crate::tomography::fidelity_process(&reconstruction.chi, &ChiMatrix::ideal_cnot())?;
    Ok(ProcessRun { reconstruction, counts, fidelity })
}

/// Analytic fidelity of the protocol under a Werner source and phase
/// jitter: `v (1 + lambda)/2 + (1 - v)/4` with `lambda = exp(-sigma^2/2)`.
/// This closed form is the calibration oracle for the noise fit.
pub fn werner_model_fidelity(v: f64, sigma: f64) -> f64 {
    let lambda = (-sigma * sigma / 2.0).exp();
    v * (1.0 + lambda) / 2.0 + (1.0 - v) / 4.0
}

/// Analytic truth-table fidelity under the same model; jitter does not
/// enter because computational-basis rows are insensitive to the pair's
/// coherence sign.
pub fn werner_model_truth_fidelity(v: f64) -> f64 {
    v + (1.0 - v) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ideal_truth_table_is_the_permutation() {
        let t = truth_table(
            &NoiseConfig::ideal(),
            &CompensatorSetting::identity(),
            Mode::PostSelected,
            Shots::Exact,
            0,
        )
        .unwrap();
        assert_abs_diff_eq!(t.fidelity, 1.0, epsilon = 1e-12);
        let expect = [0usize, 1, 3, 2];
        for (row, col) in expect.iter().enumerate() {
            assert_abs_diff_eq!(t.matrix[row][*col], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn uniform_output_floors_the_truth_fidelity() {
        // A fully mixed source (v = 0) scrambles the target qubit; each
        // row keeps probability 1/2 on the correct output, and the analytic
        // floor for an all-uniform table is 0.25.
        let noise = NoiseConfig { source_visibility: 0.0, ..NoiseConfig::ideal() };
        let t = truth_table(
            &noise,
            &CompensatorSetting::identity(),
            Mode::PostSelected,
            Shots::Exact,
            0,
        )
        .unwrap();
        assert_abs_diff_eq!(t.fidelity, 0.5, epsilon = 1e-12);

        let uniform = TruthTable { matrix: [[0.25; 4]; 4], fidelity: 0.25 };
        let mean = uniform.matrix.iter().enumerate().map(|(r, row)| row[[0, 1, 3, 2][r]]).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(mean, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn ideal_entangling_run_hits_all_four_bell_states() {
        let run = entangling_run(
            &NoiseConfig::ideal(),
            &CompensatorSetting::identity(),
            Mode::PostSelected,
            Shots::Exact,
            0,
        )
        .unwrap();
        for f in run.fidelities {
            assert!((f - 1.0).abs() < 1e-10, "fidelity {f}");
        }
        assert!((run.mean_fidelity - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fully_mixed_source_gives_quarter_fidelities() {
        let noise = NoiseConfig { source_visibility: 0.0, ..NoiseConfig::ideal() };
        let run = entangling_run(
            &noise,
            &CompensatorSetting::identity(),
            Mode::PostSelected,
            Shots::Exact,
            0,
        )
        .unwrap();
        for f in run.fidelities {
            assert_abs_diff_eq!(f, 0.25, epsilon = 1e-10);
        }
    }

    #[test]
    fn werner_pair_tomography_matches_trace_formula() {
        let noise = NoiseConfig { source_visibility: 0.95, ..NoiseConfig::ideal() };
        let v = distributed_pair_tomography(
            &noise,
            &CompensatorSetting::identity(),
            Shots::Exact,
            0,
        )
        .unwrap();
        assert_abs_diff_eq!(v.fidelity, 0.9625, epsilon = 1e-10);
    }

    #[test]
    fn ideal_fringe_has_unit_visibility() {
        let (scans, mean) = fringe_visibility(
            &NoiseConfig::ideal(),
            &CompensatorSetting::identity(),
            12,
            Shots::Exact,
            0,
        )
        .unwrap();
        for scan in &scans {
            assert!((scan.visibility - 1.0).abs() < 1e-10, "scan {:?}", scan.fixed_basis);
        }
        assert!((mean - 1.0).abs() < 1e-10);
    }

    #[test]
    fn werner_fringe_visibility_tracks_v() {
        let noise = NoiseConfig { source_visibility: 0.9, ..NoiseConfig::ideal() };
        let (_, mean) = fringe_visibility(
            &noise,
            &CompensatorSetting::identity(),
            16,
            Shots::Exact,
            0,
        )
        .unwrap();
        assert_abs_diff_eq!(mean, 0.9, epsilon = 1e-10);
    }

    #[test]
    fn ideal_process_tomography_recovers_the_gate() {
        let run = process_tomography_run(
            &NoiseConfig::ideal(),
            &CompensatorSetting::identity(),
            Mode::PostSelected,
            Shots::Exact,
            0,
        )
        .unwrap();
        assert!(run.fidelity >= 1.0 - 1e-8, "process fidelity {}", run.fidelity);
    }

    #[test]
    fn werner_process_fidelity_matches_model() {
        let v = 0.9;
        let noise = NoiseConfig { source_visibility: v, ..NoiseConfig::ideal() };
        let run = process_tomography_run(
            &noise,
            &CompensatorSetting::identity(),
            Mode::PostSelected,
            Shots::Exact,
            0,
        )
        .unwrap();
        assert_abs_diff_eq!(run.fidelity, werner_model_fidelity(v, 0.0), epsilon = 1e-8);
    }

    #[test]
    fn jitter_dephasing_matches_model() {
        let (v, sigma) = (0.95, 0.3);
        let noise = NoiseConfig {
            source_visibility: v,
            phase_jitter_sigma: sigma,
            ..NoiseConfig::ideal()
        };
        let run = entangling_run(
            &noise,
            &CompensatorSetting::identity(),
            Mode::PostSelected,
            Shots::Exact,
            0,
        )
        .unwrap();
        assert_abs_diff_eq!(run.mean_fidelity, werner_model_fidelity(v, sigma), epsilon = 1e-8);
    }
}
