//! The gate-teleportation protocol: shared pair through the channel, local
//! CNOTs, ancilla measurements, correction table, post-selection, and shot
//! sampling.
//!
//! One canonical operation order is used everywhere (pair, CNOT on 1&2,
//! measure 2, CNOT on 3&4, measure 3, corrections, output measurements) so
//! that a distributed run consuming the same seeded streams reproduces the
//! in-process trial stream bit for bit.

use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::channel::{apply_channel, apply_channel_trajectory, CompensatorSetting, Jitter, NoiseConfig};
use crate::error::{CoreError, Result};
use crate::operator::{ops, Basis, PauliLabel};
use crate::photonics::MziSetting;
use crate::rng::RngStream;
use crate::state::{bell_state, BellKind, MixedState, PureState};
use crate::tomography::Letter;

/// X-basis measurement outcome of the transmitted ancilla.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum XOutcome {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl XOutcome {
    pub fn from_bit(bit: u8) -> Self {
        if bit == 0 { XOutcome::Plus } else { XOutcome::Minus }
    }

    pub fn bit(self) -> u8 {
        match self {
            XOutcome::Plus => 0,
            XOutcome::Minus => 1,
        }
    }
}

impl std::fmt::Display for XOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            XOutcome::Plus => write!(f, "+"),
            XOutcome::Minus => write!(f, "-"),
        }
    }
}

/// Keep-only-the-(0,+)-branch versus apply-corrections-everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    PostSelected,
    Corrected,
}

impl std::str::FromStr for Mode {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "post_selected" => Ok(Mode::PostSelected),
            "corrected" => Ok(Mode::Corrected),
            other => Err(CoreError::InvalidMode(other.into())),
        }
    }
}

/// Product input of the protocol qubits, either as explicit amplitudes,
/// as preparation-interferometer phases, or as alphabet tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InputSpec {
    Amplitudes {
        /// `[[re, im]; 2]` per qubit.
        q1: [[f64; 2]; 2],
        q4: [[f64; 2]; 2],
    },
    MziPhases { q1: MziSetting, q4: MziSetting },
    Alphabet { q1: Letter, q4: Letter },
}

impl InputSpec {
    pub fn alphabet(q1: Letter, q4: Letter) -> Self {
        InputSpec::Alphabet { q1, q4 }
    }

    /// The two single-qubit factors (labels 1 and 4).
    pub fn qubit_states(&self) -> Result<(PureState, PureState)> {
        match self {
            InputSpec::Amplitudes { q1, q4 } => {
                let build = |label: u8, amps: &[[f64; 2]; 2]| -> Result<PureState> {
                    let a = num_complex::Complex64::new(amps[0][0], amps[0][1]);
                    let b = num_complex::Complex64::new(amps[1][0], amps[1][1]);
                    let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
                    if norm < 1e-12 {
                        return Err(CoreError::InvalidConfig("zero input amplitudes".into()));
                    }
                    PureState::qubit(label, a / norm, b / norm)
                };
                Ok((build(1, q1)?, build(4, q4)?))
            }
            InputSpec::MziPhases { q1, q4 } => {
                Ok((q1.prepared_qubit(1), q4.prepared_qubit(4)))
            }
            InputSpec::Alphabet { q1, q4 } => {
                let (a1, b1) = q1.amplitudes();
                let (a4, b4) = q4.amplitudes();
                Ok((PureState::qubit(1, a1, b1)?, PureState::qubit(4, a4, b4)?))
            }
        }
    }

    /// The joint two-qubit input state on labels `[1, 4]`.
    pub fn to_state(&self) -> Result<PureState> {
        let (q1, q4) = self.qubit_states()?;
        PureState::product(&[&q1, &q4])
    }
}

/// One protocol trial: ancilla outcomes, applied corrections,
/// post-selection flag and the probability of the realized branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub i: u8,
    pub j: XOutcome,
    pub corrections: (PauliLabel, PauliLabel),
    pub post_selected: bool,
    pub branch_probability: f64,
}

/// Per-trial summary used for distributed-versus-local comparisons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub i: u8,
    pub j: XOutcome,
    pub kept: bool,
    /// Output-register measurement bits `[qubit 1, qubit 4]`, present when
    /// the trial was kept (or corrected).
    pub outcome: Option<[u8; 2]>,
}

/// Map from ancilla outcomes `(i, j)` to the Pauli corrections on the
/// output qubits. Derived by brute force at startup and verified against
/// the teleportation identity.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionTable {
    /// Indexed `[i][j.bit()]`.
    entries: [[(PauliLabel, PauliLabel); 2]; 2],
}

impl CorrectionTable {
    pub fn entry(&self, i: u8, j: XOutcome) -> (PauliLabel, PauliLabel) {
        self.entries[i as usize][j.bit() as usize]
    }
}

/// The shared pair as the source emits it: `(|00> + |11>)/sqrt(2)` on
/// qubits 2&3.
pub fn source_pair() -> PureState {
    let bell = bell_state(BellKind::PhiPlus);
    PureState::with_labels(bell.amplitudes().clone(), vec![2, 3]).unwrap()
}

/// Project one branch of the teleportation identity and return the
/// collapsed output factor before corrections.
fn branch_state(input: &PureState, i: u8, j: XOutcome) -> Result<PureState> {
    let (q1, q4) = split_input(input)?;
    let register = PureState::product(&[&q1, &source_pair(), &q4])?;
    let register = register.apply(&ops::cnot(), &[1, 2])?;
    let (_, register) = register.project_qubit(2, Basis::Z, i)?;
    let register = register.apply(&ops::cnot(), &[3, 4])?;
    let (_, register) = register.project_qubit(3, Basis::X, j.bit())?;
    Ok(register)
}

fn split_input(input: &PureState) -> Result<(PureState, PureState)> {
    if input.labels() != [1, 4] {
        return Err(CoreError::InvalidConfig("protocol input must live on qubits 1 and 4".into()));
    }
    // Product inputs only: factor via the reduced states.
    let rho = input.density();
    let extract = |label: u8| -> Result<PureState> {
        let red = rho.partial_trace(&[label])?;
        let eig = nalgebra::SymmetricEigen::new(red.matrix().clone());
        let (mut best, mut best_val) = (0usize, f64::MIN);
        for (k, v) in eig.eigenvalues.iter().enumerate() {
            if *v > best_val {
                best_val = *v;
                best = k;
            }
        }
        if best_val < 1.0 - 1e-9 {
            return Err(CoreError::InvalidConfig(
                "protocol input must be a product state of qubits 1 and 4".into(),
            ));
        }
        let v = eig.eigenvectors.column(best);
        PureState::qubit(label, v[0], v[1])
    };
    Ok((extract(1)?, extract(4)?))
}

/// Brute-force the correction table from the teleportation identity.
///
/// For every branch, the unique Pauli pair is selected that maps the
/// collapsed state onto `CNOT_14 |input>` for a batch of random product
/// inputs.
pub fn derive_correction_table() -> Result<CorrectionTable> {
    let mut rng = RngStream::new(0x7ab1e, 0);
    let inputs: Vec<PureState> = (0..20)
        .map(|_| {
            let q1 = ops::random_qubit(1, &mut rng);
            let q4 = ops::random_qubit(4, &mut rng);
            PureState::product(&[&q1, &q4]).unwrap()
        })
        .collect();

    let mut entries = [[(PauliLabel::I, PauliLabel::I); 2]; 2];
    for i in 0u8..2 {
        for j in [XOutcome::Plus, XOutcome::Minus] {
            let mut found: Option<(PauliLabel, PauliLabel)> = None;
            for r1 in PauliLabel::ALL {
                for r4 in PauliLabel::ALL {
                    let pass = inputs.iter().all(|input| {
                        let collapsed = branch_state(input, i, j).unwrap();
                        let corrected = collapsed
                            .apply(&r1.operator(), &[1])
                            .unwrap()
                            .apply(&r4.operator(), &[4])
                            .unwrap();
                        let target = input.apply(&ops::cnot(), &[1, 4]).unwrap();
                        let out = output_factor(&corrected);
                        (out.overlap(&target) - 1.0).abs() < 1e-10
                    });
                    if pass {
                        if found.is_some() {
                            return Err(CoreError::CorrectionVerification {
                                i,
                                j: if j == XOutcome::Plus { '+' } else { '-' },
                            });
                        }
                        found = Some((r1, r4));
                    }
                }
            }
            match found {
                Some(pair) => entries[i as usize][j.bit() as usize] = pair,
                None => {
                    return Err(CoreError::CorrectionVerification {
                        i,
                        j: if j == XOutcome::Plus { '+' } else { '-' },
                    })
                }
            }
        }
    }
    Ok(CorrectionTable { entries })
}

/// Collapse a 4-qubit register whose ancillas are already projected onto
/// a basis state into its pure qubits-1&4 factor.
fn output_factor(state: &PureState) -> PureState {
    let rho = state.density().partial_trace(&[1, 4]).unwrap();
    let eig = nalgebra::SymmetricEigen::new(rho.matrix().clone());
    let (mut best, mut best_val) = (0usize, f64::MIN);
    for (k, v) in eig.eigenvalues.iter().enumerate() {
        if *v > best_val {
            best_val = *v;
            best = k;
        }
    }
    debug_assert!(best_val > 1.0 - 1e-9, "ancilla projection left entanglement behind");
    let v = eig.eigenvectors.column(best).clone_owned();
    PureState::with_labels(v, vec![1, 4]).unwrap()
}

static CORRECTION_TABLE: OnceLock<CorrectionTable> = OnceLock::new();

/// The verified correction table; derivation failure aborts, since the
/// table is a build-time artifact.
pub fn correction_table() -> &'static CorrectionTable {
    CORRECTION_TABLE.get_or_init(|| derive_correction_table().expect("correction table"))
}

/// Verify the table against `n` random product inputs across all four
/// branches; used by the acceptance suite.
pub fn verify_correction_table(table: &CorrectionTable, n: usize, seed: u64) -> Result<()> {
    let mut rng = RngStream::new(seed, 0);
    for _ in 0..n {
        let q1 = ops::random_qubit(1, &mut rng);
        let q4 = ops::random_qubit(4, &mut rng);
        let input = PureState::product(&[&q1, &q4])?;
        let target = input.apply(&ops::cnot(), &[1, 4])?;
        for i in 0u8..2 {
            for j in [XOutcome::Plus, XOutcome::Minus] {
                let (r1, r4) = table.entry(i, j);
                let corrected = branch_state(&input, i, j)?
                    .apply(&r1.operator(), &[1])?
                    .apply(&r4.operator(), &[4])?;
                let corrected = output_factor(&corrected);
                if (corrected.overlap(&target) - 1.0).abs() > 1e-10 {
                    return Err(CoreError::CorrectionVerification {
                        i,
                        j: if j == XOutcome::Plus { '+' } else { '-' },
                    });
                }
            }
        }
    }
    Ok(())
}

/// Everything fixed for a batch of trials.
#[derive(Clone, Debug)]
pub struct TrialSetup {
    pub input: InputSpec,
    pub noise: NoiseConfig,
    pub compensator: CompensatorSetting,
    pub mode: Mode,
}

impl TrialSetup {
    pub fn ideal(input: InputSpec, mode: Mode) -> Self {
        Self { input, noise: NoiseConfig::ideal(), compensator: CompensatorSetting::identity(), mode }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Step {
    New,
    PairReady,
    ControlGateDone,
    ControlMeasured,
    TargetGateDone,
    TargetMeasured,
    CorrectionOneDone,
    CorrectionsDone,
    OutputOneMeasured,
    Finished,
}

impl Step {
    fn name(self) -> &'static str {
        match self {
            Step::New => "prepare_pair",
            Step::PairReady => "cnot_12",
            Step::ControlGateDone => "measure_2",
            Step::ControlMeasured => "cnot_34",
            Step::TargetGateDone => "measure_3",
            Step::TargetMeasured => "correction_1",
            Step::CorrectionOneDone => "correction_4",
            Step::CorrectionsDone => "measure_out_1",
            Step::OutputOneMeasured => "measure_out_4",
            Step::Finished => "finished",
        }
    }
}

/// Step-wise trial state machine over a pure trajectory.
///
/// Both the in-process runner and the distributed coordinator drive this
/// same engine; each method enforces the canonical operation order and
/// errors on violations (corrections before outcomes, wrong step, ...).
pub struct TrialEngine {
    state: PureState,
    setup: TrialSetup,
    setting: [Basis; 2],
    rng: RngStream,
    step: Step,
    i: Option<u8>,
    j: Option<XOutcome>,
    branch_probability: f64,
    corrections: (PauliLabel, PauliLabel),
    output_bits: [Option<u8>; 2],
}

impl TrialEngine {
    pub fn new(setup: TrialSetup, setting: [Basis; 2], rng: RngStream) -> Result<Self> {
        setup.noise.validate()?;
        let (q1, q4) = setup.input.qubit_states()?;
        // Placeholder register until the pair is prepared.
        let state = PureState::product(&[&q1, &q4])?;
        Ok(Self {
            state,
            setup,
            setting,
            rng,
            step: Step::New,
            i: None,
            j: None,
            branch_probability: 1.0,
            corrections: (PauliLabel::I, PauliLabel::I),
            output_bits: [None, None],
        })
    }

    fn expect(&self, step: Step, op: &str) -> Result<()> {
        if self.step != step {
            return Err(CoreError::ProtocolOrder { expected: self.step.name().into(), got: op.into() });
        }
        Ok(())
    }

    /// Emit the pair, pass it through the channel (trajectory draws), and
    /// assemble the four-qubit register.
    pub fn prepare_pair(&mut self) -> Result<()> {
        self.expect(Step::New, "prepare_pair")?;
        let pair = apply_channel_trajectory(
            &source_pair(),
            &self.setup.noise,
            &self.setup.compensator,
            &mut self.rng,
        )?;
        let (q1, q4) = self.setup.input.qubit_states()?;
        self.state = PureState::product(&[&q1, &pair, &q4])?;
        self.step = Step::PairReady;
        Ok(())
    }

    /// CNOT between the input qubit 1 and ancilla 2 (chip A).
    pub fn apply_cnot_12(&mut self) -> Result<()> {
        self.expect(Step::PairReady, "cnot_12")?;
        self.state = self.state.apply(&ops::cnot(), &[1, 2])?;
        self.step = Step::ControlGateDone;
        Ok(())
    }

    /// Z measurement of ancilla qubit 2; outcome `i`.
    pub fn measure_qubit2(&mut self) -> Result<u8> {
        self.expect(Step::ControlGateDone, "measure_2")?;
        let [p0, _] = self.state.outcome_probabilities(2, Basis::Z)?;
        let (outcome, collapsed) = self.state.measure_qubit(2, Basis::Z, &mut self.rng)?;
        self.state = collapsed;
        self.branch_probability *= if outcome == 0 { p0 } else { 1.0 - p0 };
        self.i = Some(outcome);
        self.step = Step::ControlMeasured;
        Ok(outcome)
    }

    /// CNOT between ancilla 3 and the input qubit 4 (chip B).
    pub fn apply_cnot_34(&mut self) -> Result<()> {
        self.expect(Step::ControlMeasured, "cnot_34")?;
        self.state = self.state.apply(&ops::cnot(), &[3, 4])?;
        self.step = Step::TargetGateDone;
        Ok(())
    }

    /// X measurement of ancilla qubit 3; outcome `j`.
    pub fn measure_qubit3(&mut self) -> Result<XOutcome> {
        self.expect(Step::TargetGateDone, "measure_3")?;
        let [p0, _] = self.state.outcome_probabilities(3, Basis::X)?;
        let (bit, collapsed) = self.state.measure_qubit(3, Basis::X, &mut self.rng)?;
        self.state = collapsed;
        self.branch_probability *= if bit == 0 { p0 } else { 1.0 - p0 };
        let outcome = XOutcome::from_bit(bit);
        self.j = Some(outcome);
        self.step = Step::TargetMeasured;
        // Post-selected mode applies no rotations; discarded branches end here.
        if self.setup.mode == Mode::PostSelected {
            self.step = if self.kept() { Step::CorrectionsDone } else { Step::Finished };
        }
        Ok(outcome)
    }

    pub fn ancilla_outcomes(&self) -> (Option<u8>, Option<XOutcome>) {
        (self.i, self.j)
    }

    /// The table corrections owed for the realized branch.
    pub fn expected_corrections(&self) -> Result<(PauliLabel, PauliLabel)> {
        match (self.i, self.j) {
            (Some(i), Some(j)) => Ok(correction_table().entry(i, j)),
            _ => Err(CoreError::ProtocolOrder {
                expected: self.step.name().into(),
                got: "corrections".into(),
            }),
        }
    }

    /// Apply the rotation on output qubit 1 (corrected mode only).
    pub fn apply_correction_q1(&mut self, op: PauliLabel) -> Result<()> {
        self.expect(Step::TargetMeasured, "correction_1")?;
        self.state = self.state.apply(&op.operator(), &[1])?;
        self.corrections.0 = op;
        self.step = Step::CorrectionOneDone;
        Ok(())
    }

    /// Apply the rotation on output qubit 4 (corrected mode only).
    pub fn apply_correction_q4(&mut self, op: PauliLabel) -> Result<()> {
        self.expect(Step::CorrectionOneDone, "correction_4")?;
        self.state = self.state.apply(&op.operator(), &[4])?;
        self.corrections.1 = op;
        self.step = Step::CorrectionsDone;
        Ok(())
    }

    /// Whether the realized branch survives post-selection.
    pub fn kept(&self) -> bool {
        match self.setup.mode {
            Mode::Corrected => true,
            Mode::PostSelected => self.i == Some(0) && self.j == Some(XOutcome::Plus),
        }
    }

    /// Measure output qubit 1 in the configured setting basis.
    pub fn measure_output_q1(&mut self) -> Result<u8> {
        self.expect(Step::CorrectionsDone, "measure_out_1")?;
        let (outcome, collapsed) = self.state.measure_qubit(1, self.setting[0], &mut self.rng)?;
        self.state = collapsed;
        self.output_bits[0] = Some(outcome);
        self.step = Step::OutputOneMeasured;
        Ok(outcome)
    }

    /// Measure output qubit 4 in the configured setting basis.
    pub fn measure_output_q4(&mut self) -> Result<u8> {
        self.expect(Step::OutputOneMeasured, "measure_out_4")?;
        let (outcome, collapsed) = self.state.measure_qubit(4, self.setting[1], &mut self.rng)?;
        self.state = collapsed;
        self.output_bits[1] = Some(outcome);
        self.step = Step::Finished;
        Ok(outcome)
    }

    pub fn is_finished(&self) -> bool {
        self.step == Step::Finished
    }

    /// Whether the qubit-1 output measurement has already happened; the
    /// distributed coordinator gates the qubit-4 request on this.
    pub fn output_q1_done(&self) -> bool {
        matches!(self.step, Step::OutputOneMeasured | Step::Finished)
    }

    /// The conditional state of qubits 1&4 at the current point.
    pub fn output_state(&self) -> Result<MixedState> {
        self.state.density().partial_trace(&[1, 4])
    }

    pub fn record(&self) -> Result<OutcomeRecord> {
        match (self.i, self.j) {
            (Some(i), Some(j)) => Ok(OutcomeRecord {
                i,
                j,
                corrections: self.corrections,
                post_selected: self.setup.mode == Mode::PostSelected && self.kept(),
                branch_probability: self.branch_probability,
            }),
            _ => Err(CoreError::ProtocolOrder {
                expected: self.step.name().into(),
                got: "record".into(),
            }),
        }
    }

    pub fn trial_record(&self, trial_id: u64) -> Result<TrialRecord> {
        let record = self.record()?;
        Ok(TrialRecord {
            trial_id,
            i: record.i,
            j: record.j,
            kept: self.kept(),
            outcome: match self.output_bits {
                [Some(a), Some(b)] => Some([a, b]),
                _ => None,
            },
        })
    }
}

/// Drive one full trial in the canonical order, without the final output
/// measurement: the protocol-level result plus the conditional state of
/// qubits 1&4.
pub fn run_trial(
    input: &InputSpec,
    noise: &NoiseConfig,
    mode: Mode,
    rng: RngStream,
) -> Result<(OutcomeRecord, MixedState)> {
    let setup = TrialSetup {
        input: input.clone(),
        noise: noise.clone(),
        compensator: CompensatorSetting::identity(),
        mode,
    };
    run_trial_with(setup, rng)
}

/// [`run_trial`] with an explicit compensator.
pub fn run_trial_with(setup: TrialSetup, rng: RngStream) -> Result<(OutcomeRecord, MixedState)> {
    let mode = setup.mode;
    let mut engine = TrialEngine::new(setup, [Basis::Z, Basis::Z], rng)?;
    engine.prepare_pair()?;
    engine.apply_cnot_12()?;
    let i = engine.measure_qubit2()?;
    engine.apply_cnot_34()?;
    let j = engine.measure_qubit3()?;
    if mode == Mode::Corrected {
        let (r1, r4) = correction_table().entry(i, j);
        engine.apply_correction_q1(r1)?;
        engine.apply_correction_q4(r4)?;
    }
    let output = engine.output_state()?;
    Ok((engine.record()?, output))
}

/// Drive one trial including the final output measurements; this is the
/// per-trial stream the distributed runner must reproduce bit for bit.
pub fn run_trial_sampled(
    setup: TrialSetup,
    setting: [Basis; 2],
    trial_id: u64,
    rng: RngStream,
) -> Result<TrialRecord> {
    let mode = setup.mode;
    let mut engine = TrialEngine::new(setup, setting, rng)?;
    engine.prepare_pair()?;
    engine.apply_cnot_12()?;
    let i = engine.measure_qubit2()?;
    engine.apply_cnot_34()?;
    let j = engine.measure_qubit3()?;
    if mode == Mode::Corrected {
        let (r1, r4) = correction_table().entry(i, j);
        engine.apply_correction_q1(r1)?;
        engine.apply_correction_q4(r4)?;
    }
    if engine.kept() {
        engine.measure_output_q1()?;
        engine.measure_output_q4()?;
    }
    engine.trial_record(trial_id)
}

/// Seed-pinned batch of sampled trials; trial `t` draws from stream
/// `(seed, t)`.
pub fn run_batch(
    setup: &TrialSetup,
    setting: [Basis; 2],
    trials: u64,
    seed: u64,
) -> Result<Vec<TrialRecord>> {
    (0..trials)
        .map(|t| run_trial_sampled(setup.clone(), setting, t, RngStream::new(seed, t)))
        .collect()
}

/// One branch of the exact (density-matrix) evolution.
#[derive(Clone, Debug)]
pub struct BranchOutcome {
    pub i: u8,
    pub j: XOutcome,
    pub probability: f64,
    pub corrections: (PauliLabel, PauliLabel),
    pub kept: bool,
    /// Conditional state of qubits 1&4 after the branch (and corrections,
    /// in corrected mode).
    pub output: MixedState,
}

/// Exact evolution of all four measurement branches with ensemble-average
/// noise (the infinite-shot limit).
pub fn exact_branches(setup: &TrialSetup) -> Result<Vec<BranchOutcome>> {
    setup.noise.validate()?;
    let (q1, q4) = setup.input.qubit_states()?;
    let (pair, _) = apply_channel(
        &source_pair().density(),
        &setup.noise,
        &setup.compensator,
        Jitter::Average,
    )?;
    let register = q1.density().tensor(&pair)?.tensor(&q4.density())?;
    let register = register.apply(&ops::cnot(), &[1, 2])?;

    let mut out = Vec::with_capacity(4);
    for i in 0u8..2 {
        let (p_i, after_i) = match register.project_qubit(2, Basis::Z, i) {
            Ok(x) => x,
            Err(CoreError::ZeroProbabilityBranch { .. }) => continue,
            Err(e) => return Err(e),
        };
        let after_gate = after_i.apply(&ops::cnot(), &[3, 4])?;
        for j in [XOutcome::Plus, XOutcome::Minus] {
            let (p_j, after_j) = match after_gate.project_qubit(3, Basis::X, j.bit()) {
                Ok(x) => x,
                Err(CoreError::ZeroProbabilityBranch { .. }) => continue,
                Err(e) => return Err(e),
            };
            let kept = match setup.mode {
                Mode::Corrected => true,
                Mode::PostSelected => i == 0 && j == XOutcome::Plus,
            };
            let (corrections, corrected) = if setup.mode == Mode::Corrected {
                let (r1, r4) = correction_table().entry(i, j);
                let c = after_j.apply(&r1.operator(), &[1])?.apply(&r4.operator(), &[4])?;
                ((r1, r4), c)
            } else {
                ((PauliLabel::I, PauliLabel::I), after_j.clone())
            };
            out.push(BranchOutcome {
                i,
                j,
                probability: p_i * p_j,
                corrections,
                kept,
                output: corrected.partial_trace(&[1, 4])?,
            });
        }
    }
    Ok(out)
}

/// Exact branch probabilities in `(0,+), (0,-), (1,+), (1,-)` order.
pub fn branch_distribution(input: &InputSpec, noise: &NoiseConfig) -> Result<[f64; 4]> {
    let setup = TrialSetup {
        input: input.clone(),
        noise: noise.clone(),
        compensator: CompensatorSetting::identity(),
        mode: Mode::Corrected,
    };
    let mut out = [0.0; 4];
    for b in exact_branches(&setup)? {
        out[(2 * b.i + b.j.bit()) as usize] = b.probability;
    }
    Ok(out)
}

/// Number of shots, or the exact infinite-shot limit. Serializes as a
/// bare number or the string `"exact"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ShotsRepr", into = "ShotsRepr")]
pub enum Shots {
    N(u64),
    Exact,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ShotsRepr {
    N(u64),
    Token(String),
}

impl TryFrom<ShotsRepr> for Shots {
    type Error = String;

    fn try_from(repr: ShotsRepr) -> std::result::Result<Self, String> {
        match repr {
            ShotsRepr::N(0) => Err("shots must be >= 1".into()),
            ShotsRepr::N(n) => Ok(Shots::N(n)),
            ShotsRepr::Token(t) if t == "exact" => Ok(Shots::Exact),
            ShotsRepr::Token(t) => Err(format!("unknown shots token '{t}'")),
        }
    }
}

impl From<Shots> for ShotsRepr {
    fn from(shots: Shots) -> Self {
        match shots {
            Shots::N(n) => ShotsRepr::N(n),
            Shots::Exact => ShotsRepr::Token("exact".into()),
        }
    }
}

impl Shots {
    pub fn is_exact(self) -> bool {
        self == Shots::Exact
    }
}

/// Outcome table of one measurement setting: four kept outcomes (indexed
/// `2*b1 + b4`) plus the discarded weight. Counts are real so the exact
/// mode can report probabilities in the same shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    pub outcomes: [f64; 4],
    pub discarded: f64,
    pub shots: Option<u64>,
}

impl CountTable {
    pub fn kept_total(&self) -> f64 {
        self.outcomes.iter().sum()
    }

    /// Outcome distribution conditioned on keeping the trial.
    pub fn normalized(&self) -> [f64; 4] {
        let total = self.kept_total();
        if total <= 0.0 {
            return [0.0; 4];
        }
        self.outcomes.map(|c| c / total)
    }
}

/// Exact kept-outcome probabilities and the discarded weight for one
/// measurement setting, folding in branch probabilities and channel
/// survival.
pub fn exact_count_distribution(setup: &TrialSetup, setting: [Basis; 2]) -> Result<CountTable> {
    let survival = setup.noise.survival_probability();
    let branches = exact_branches(setup)?;
    let projectors = crate::photonics::measurement_setting(setting);
    let mut outcomes = [0.0; 4];
    for branch in branches.iter().filter(|b| b.kept) {
        for (k, proj) in projectors.iter().enumerate() {
            let p = branch.output.expectation(proj, &[1, 4])?.re.max(0.0);
            outcomes[k] += survival * branch.probability * p;
        }
    }
    let discarded = 1.0 - outcomes.iter().sum::<f64>();
    Ok(CountTable { outcomes, discarded: discarded.max(0.0), shots: None })
}

/// Multinomial sample of the exact conditional probabilities; the
/// discarded bucket reflects branch probability and channel survival.
pub fn sample_counts(
    setup: &TrialSetup,
    setting: [Basis; 2],
    shots: Shots,
    rng: &mut RngStream,
) -> Result<CountTable> {
    let exact = exact_count_distribution(setup, setting)?;
    match shots {
        Shots::Exact => Ok(exact),
        Shots::N(n) => {
            let mut probs = exact.outcomes.to_vec();
            probs.push(exact.discarded);
            let counts = rng.multinomial(&probs, n);
            Ok(CountTable {
                outcomes: [counts[0] as f64, counts[1] as f64, counts[2] as f64, counts[3] as f64],
                discarded: counts[4] as f64,
                shots: Some(n),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::fidelity_to_pure;
    use approx::assert_abs_diff_eq;

    fn plus_zero() -> InputSpec {
        InputSpec::alphabet(Letter::Plus, Letter::Zero)
    }

    #[test]
    fn correction_table_matches_derived_entries() {
        let table = correction_table();
        assert_eq!(table.entry(0, XOutcome::Plus), (PauliLabel::I, PauliLabel::I));
        assert_eq!(table.entry(0, XOutcome::Minus), (PauliLabel::Z, PauliLabel::I));
        assert_eq!(table.entry(1, XOutcome::Plus), (PauliLabel::I, PauliLabel::X));
        assert_eq!(table.entry(1, XOutcome::Minus), (PauliLabel::Z, PauliLabel::X));
    }

    #[test]
    fn correction_table_verifies_on_fresh_inputs() {
        verify_correction_table(correction_table(), 50, 99).unwrap();
    }

    #[test]
    fn teleportation_identity_on_random_inputs() {
        // Every branch of corrected mode must land on CNOT_14 |input>.
        let mut rng = RngStream::new(314, 0);
        for _ in 0..50 {
            let q1 = ops::random_qubit(1, &mut rng);
            let q4 = ops::random_qubit(4, &mut rng);
            let input = InputSpec::Amplitudes {
                q1: [
                    [q1.amplitudes()[0].re, q1.amplitudes()[0].im],
                    [q1.amplitudes()[1].re, q1.amplitudes()[1].im],
                ],
                q4: [
                    [q4.amplitudes()[0].re, q4.amplitudes()[0].im],
                    [q4.amplitudes()[1].re, q4.amplitudes()[1].im],
                ],
            };
            let target = input.to_state().unwrap().apply(&ops::cnot(), &[1, 4]).unwrap();
            let setup = TrialSetup::ideal(input, Mode::Corrected);
            for branch in exact_branches(&setup).unwrap() {
                let f = fidelity_to_pure(&branch.output, &target).unwrap();
                assert!((f - 1.0).abs() < 1e-10, "branch ({}, {:?}) fidelity {f}", branch.i, branch.j);
            }
        }
    }

    #[test]
    fn corrected_trial_entangles_plus_zero() {
        let bell = bell_state(BellKind::PhiPlus);
        let target = PureState::with_labels(bell.amplitudes().clone(), vec![1, 4]).unwrap();
        for seed in 0..8 {
            let (record, output) = run_trial(
                &plus_zero(),
                &NoiseConfig::ideal(),
                Mode::Corrected,
                RngStream::new(seed, 0),
            )
            .unwrap();
            let f = fidelity_to_pure(&output, &target).unwrap();
            assert!((f - 1.0).abs() < 1e-10, "seed {seed}: fidelity {f}");
            assert_abs_diff_eq!(record.branch_probability, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn basis_inputs_follow_the_gate_truth_table() {
        for (q1, q4, expect) in [
            (Letter::Zero, Letter::Zero, 0b00usize),
            (Letter::Zero, Letter::One, 0b01),
            (Letter::One, Letter::Zero, 0b11),
            (Letter::One, Letter::One, 0b10),
        ] {
            let input = InputSpec::alphabet(q1, q4);
            let (_, output) = run_trial(
                &input,
                &NoiseConfig::ideal(),
                Mode::Corrected,
                RngStream::new(7, 0),
            )
            .unwrap();
            let target = PureState::basis(&[1, 4], expect);
            let f = fidelity_to_pure(&output, &target).unwrap();
            assert!((f - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn branch_probabilities_are_uniform_for_product_inputs() {
        let mut rng = RngStream::new(41, 0);
        for _ in 0..20 {
            let q1 = ops::random_qubit(1, &mut rng);
            let q4 = ops::random_qubit(4, &mut rng);
            let input = InputSpec::Amplitudes {
                q1: [
                    [q1.amplitudes()[0].re, q1.amplitudes()[0].im],
                    [q1.amplitudes()[1].re, q1.amplitudes()[1].im],
                ],
                q4: [
                    [q4.amplitudes()[0].re, q4.amplitudes()[0].im],
                    [q4.amplitudes()[1].re, q4.amplitudes()[1].im],
                ],
            };
            let dist = branch_distribution(&input, &NoiseConfig::ideal()).unwrap();
            for p in dist {
                assert_abs_diff_eq!(p, 0.25, epsilon = 1e-12);
            }
            assert_abs_diff_eq!(dist.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn post_selected_kept_branch_equals_corrected_branch() {
        let setup_ps = TrialSetup::ideal(plus_zero(), Mode::PostSelected);
        let setup_c = TrialSetup::ideal(plus_zero(), Mode::Corrected);
        let kept: Vec<_> = exact_branches(&setup_ps)
            .unwrap()
            .into_iter()
            .filter(|b| b.kept)
            .collect();
        assert_eq!(kept.len(), 1);
        assert_eq!((kept[0].i, kept[0].j), (0, XOutcome::Plus));
        let corrected = exact_branches(&setup_c)
            .unwrap()
            .into_iter()
            .find(|b| b.i == 0 && b.j == XOutcome::Plus)
            .unwrap();
        // The (0,+) entry is (I, I), so both modes agree amplitude-exact.
        assert!((kept[0].output.matrix() - corrected.output.matrix()).camax() == 0.0);
    }

    #[test]
    fn input_spec_paths_agree() {
        for letter in Letter::ALL {
            let (a, b) = letter.amplitudes();
            let via_alphabet = InputSpec::alphabet(letter, Letter::Zero).to_state().unwrap();
            let via_mzi = InputSpec::MziPhases {
                q1: MziSetting::for_state(a, b),
                q4: MziSetting::bar(),
            }
            .to_state()
            .unwrap();
            assert!(via_alphabet.overlap(&via_mzi) > 1.0 - 1e-10);
        }
    }

    #[test]
    fn exact_counts_of_bell_output_in_zz() {
        let setup = TrialSetup::ideal(plus_zero(), Mode::PostSelected);
        let table = exact_count_distribution(&setup, [Basis::Z, Basis::Z]).unwrap();
        let normalized = table.normalized();
        assert_abs_diff_eq!(normalized[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(normalized[3], 0.5, epsilon = 1e-12);
        assert!(normalized[1].abs() < 1e-12 && normalized[2].abs() < 1e-12);
        // Kept weight is the branch probability (no loss configured).
        assert_abs_diff_eq!(table.kept_total(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn sampled_counts_match_exact_within_5_sigma() {
        let setup = TrialSetup::ideal(plus_zero(), Mode::PostSelected);
        let mut rng = RngStream::new(2718, 0);
        let shots = 10_000u64;
        let table = sample_counts(&setup, [Basis::Z, Basis::Z], Shots::N(shots), &mut rng).unwrap();
        let exact = exact_count_distribution(&setup, [Basis::Z, Basis::Z]).unwrap();
        for k in 0..4 {
            let expect = shots as f64 * exact.outcomes[k];
            let sigma = (shots as f64 * exact.outcomes[k] * (1.0 - exact.outcomes[k])).sqrt();
            assert!(
                (table.outcomes[k] - expect).abs() <= 5.0 * sigma.max(1.0),
                "outcome {k}: {} vs {expect}",
                table.outcomes[k]
            );
        }
        assert_abs_diff_eq!(
            table.outcomes.iter().sum::<f64>() + table.discarded,
            shots as f64,
            epsilon = 1e-9
        );
    }

    #[test]
    fn kept_fraction_scales_with_survival() {
        // Full loss budget (~7.99 dB) on a post-selected run: kept fraction
        // = survival / 4 in expectation, checked at 1e6 shots within 5 sigma.
        let noise = NoiseConfig {
            losses_db: crate::channel::LossBudget::chip_default(),
            ..NoiseConfig::ideal()
        };
        let setup = TrialSetup {
            input: plus_zero(),
            noise,
            compensator: CompensatorSetting::identity(),
            mode: Mode::PostSelected,
        };
        let survival = setup.noise.survival_probability();
        let shots = 1_000_000u64;
        let mut rng = RngStream::new(5555, 0);
        let table = sample_counts(&setup, [Basis::Z, Basis::Z], Shots::N(shots), &mut rng).unwrap();
        let expect = survival / 4.0;
        let sigma = (shots as f64 * expect * (1.0 - expect)).sqrt();
        assert!(
            (table.kept_total() - shots as f64 * expect).abs() < 5.0 * sigma,
            "kept {} vs expected {}",
            table.kept_total(),
            shots as f64 * expect
        );
    }

    #[test]
    fn engine_rejects_out_of_order_operations() {
        let setup = TrialSetup::ideal(plus_zero(), Mode::Corrected);
        let mut engine = TrialEngine::new(setup, [Basis::Z, Basis::Z], RngStream::new(1, 0)).unwrap();
        // Correction before any outcome exists is an ordering violation.
        assert!(matches!(
            engine.apply_correction_q1(PauliLabel::I),
            Err(CoreError::ProtocolOrder { .. })
        ));
        engine.prepare_pair().unwrap();
        assert!(matches!(engine.measure_qubit2(), Err(CoreError::ProtocolOrder { .. })));
        engine.apply_cnot_12().unwrap();
        engine.measure_qubit2().unwrap();
        assert!(matches!(engine.measure_qubit3(), Err(CoreError::ProtocolOrder { .. })));
    }

    #[test]
    fn invalid_mode_token_is_an_error() {
        assert!(matches!("both".parse::<Mode>(), Err(CoreError::InvalidMode(_))));
        assert_eq!("post_selected".parse::<Mode>().unwrap(), Mode::PostSelected);
        assert_eq!("corrected".parse::<Mode>().unwrap(), Mode::Corrected);
    }

    #[test]
    fn batch_trials_are_reproducible() {
        let setup = TrialSetup::ideal(plus_zero(), Mode::PostSelected);
        let a = run_batch(&setup, [Basis::Z, Basis::Z], 200, 12).unwrap();
        let b = run_batch(&setup, [Basis::Z, Basis::Z], 200, 12).unwrap();
        assert_eq!(a, b);
        let kept = a.iter().filter(|t| t.kept).count();
        assert!(kept > 20 && kept < 80, "kept {kept} of 200");
    }
}
