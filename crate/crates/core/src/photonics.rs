//! Linear-optical model of the chip: path-encoded registers, MMI couplers,
//! Mach-Zehnder interferometers, waveguide crossers, and the basis-change
//! network in front of the detectors.
//!
//! Each photon carries two qubits on four paths; mode index `m` encodes the
//! ket `|q_a q_b>` of the photon's qubit pair via `m = 2*q_a + q_b`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{CoreError, Result};
use crate::operator::{ops, Basis, Operator};
use crate::state::{PureState, C_ONE, C_ZERO};

/// Which photon a path register belongs to. Photon A carries qubits 1&2,
/// photon B carries qubits 3&4.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Photon {
    A,
    B,
}

impl Photon {
    /// Labels of the two encoded qubits, first qubit first.
    pub fn qubits(self) -> [u8; 2] {
        match self {
            Photon::A => [1, 2],
            Photon::B => [3, 4],
        }
    }
}

/// Four path-mode amplitudes of one photon.
#[derive(Clone, Debug, PartialEq)]
pub struct PathRegister {
    photon: Photon,
    modes: [Complex64; 4],
}

impl PathRegister {
    pub fn new(photon: Photon, modes: [Complex64; 4]) -> Result<Self> {
        let norm: f64 = modes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(CoreError::InvalidConfig(format!("path register norm {norm} is not 1")));
        }
        Ok(Self { photon, modes })
    }

    /// Register holding all amplitude in one mode.
    pub fn single_mode(photon: Photon, mode: usize) -> Self {
        let mut modes = [C_ZERO; 4];
        modes[mode] = C_ONE;
        Self { photon, modes }
    }

    /// Build from the photon's two-qubit state via the fixed mode->ket map.
    pub fn from_state(photon: Photon, state: &PureState) -> Result<Self> {
        if state.dim() != 4 {
            return Err(CoreError::DimensionMismatch { expected: 4, got: state.dim() });
        }
        let mut modes = [C_ZERO; 4];
        for (m, amp) in state.amplitudes().iter().enumerate() {
            modes[m] = *amp;
        }
        Ok(Self { photon, modes })
    }

    /// The encoded two-qubit state (labels from the photon).
    pub fn to_state(&self) -> PureState {
        let labels = self.photon.qubits().to_vec();
        PureState::with_labels(
            nalgebra::DVector::from_vec(self.modes.to_vec()),
            labels,
        )
        .unwrap()
    }

    pub fn photon(&self) -> Photon {
        self.photon
    }

    pub fn modes(&self) -> &[Complex64; 4] {
        &self.modes
    }

    pub fn norm(&self) -> f64 {
        self.modes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Apply a 2x2 matrix to a pair of modes.
    pub fn apply_two_mode(&mut self, u: &Operator, modes: (usize, usize)) {
        let m = u.matrix();
        let (a, b) = (self.modes[modes.0], self.modes[modes.1]);
        self.modes[modes.0] = m[(0, 0)] * a + m[(0, 1)] * b;
        self.modes[modes.1] = m[(1, 0)] * a + m[(1, 1)] * b;
    }

    pub fn swap_modes(&mut self, modes: (usize, usize)) {
        self.modes.swap(modes.0, modes.1);
    }

    pub fn phase_mode(&mut self, mode: usize, theta: f64) {
        self.modes[mode] *= Complex64::from_polar(1.0, theta);
    }

    /// Power in the mode groups for the first encoded qubit being 0 or 1.
    pub fn first_qubit_group_power(&self) -> (f64, f64) {
        let g0 = self.modes[0].norm_sqr() + self.modes[1].norm_sqr();
        let g1 = self.modes[2].norm_sqr() + self.modes[3].norm_sqr();
        (g0, g1)
    }
}

/// One photonic component and where it sits in the four-mode register.
/// Circuit description files are ordered lists of these.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CircuitElement {
    /// 50:50 multimode-interference coupler on a mode pair.
    Mmi { modes: (usize, usize) },
    /// Thermal-optic phase shifter on one mode.
    PhaseShifter { mode: usize, theta: f64 },
    /// Waveguide crosser exchanging two modes.
    Crosser { modes: (usize, usize) },
    /// Mach-Zehnder interferometer on a mode pair.
    Mzi { modes: (usize, usize), theta: f64, phi: f64 },
    /// Path/polarization converter at the chip boundary. Lossless identity
    /// on the logical state; its insertion loss is a channel-level rate.
    Pbrc,
}

impl CircuitElement {
    pub fn apply(&self, reg: &mut PathRegister) {
        match self {
            CircuitElement::Mmi { modes } => reg.apply_two_mode(&mmi_unitary(), *modes),
            CircuitElement::PhaseShifter { mode, theta } => reg.phase_mode(*mode, *theta),
            CircuitElement::Crosser { modes } => reg.swap_modes(*modes),
            CircuitElement::Mzi { modes, theta, phi } => {
                reg.apply_two_mode(&mzi_unitary(*theta, *phi), *modes)
            }
            CircuitElement::Pbrc => {}
        }
    }

    /// Full 4-mode matrix of this element.
    pub fn unitary(&self) -> DMatrix<Complex64> {
        let mut cols = Vec::with_capacity(4);
        for m in 0..4 {
            let mut reg = PathRegister::single_mode(Photon::A, m);
            self.apply(&mut reg);
            cols.extend_from_slice(reg.modes());
        }
        DMatrix::from_vec(4, 4, cols)
    }
}

/// Apply an ordered element list to a register.
pub fn apply_circuit(elements: &[CircuitElement], reg: &mut PathRegister) {
    for el in elements {
        el.apply(reg);
    }
}

/// The symmetric 50:50 coupler `(1/sqrt2) [[1, i], [i, 1]]`.
pub fn mmi_unitary() -> Operator {
    let h = 0.5f64.sqrt();
    Operator::from_rows(
        1,
        &[
            Complex64::new(h, 0.0),
            Complex64::new(0.0, h),
            Complex64::new(0.0, h),
            Complex64::new(h, 0.0),
        ],
    )
}

/// Internal/external phase setting of one interferometer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MziSetting {
    pub theta: f64,
    pub phi: f64,
}

impl MziSetting {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    /// Bar routing: input `|0>` stays in the `|0>` path.
    pub fn bar() -> Self {
        Self { theta: PI, phi: 0.0 }
    }

    /// Setting that prepares the given single-qubit state from `|0>`,
    /// up to global phase.
    pub fn for_state(a: Complex64, b: Complex64) -> Self {
        let theta = 2.0 * a.norm().atan2(b.norm());
        let phi = if a.norm() < 1e-15 || b.norm() < 1e-15 {
            0.0
        } else {
            (a.arg() - b.arg()).rem_euclid(2.0 * PI)
        };
        Self { theta, phi }
    }

    pub fn unitary(&self) -> Operator {
        mzi_unitary(self.theta, self.phi)
    }

    /// The state this MZI prepares from input `|0>`.
    pub fn prepared_qubit(&self, label: u8) -> PureState {
        let m = self.unitary();
        PureState::qubit(label, m.matrix()[(0, 0)], m.matrix()[(1, 0)]).unwrap()
    }
}

/// Balanced Mach-Zehnder interferometer: two MMIs around an internal phase
/// `theta`, with an external phase `phi` on the output arm. From input
/// `|0>` this reaches every point of the Bloch sphere as
/// `e^{i phi} sin(theta/2) |0> + cos(theta/2) |1>` up to global phase.
pub fn mzi_unitary(theta: f64, phi: f64) -> Operator {
    let inner = mmi_unitary()
        .compose(&ops::phase_on_first(theta))
        .unwrap()
        .compose(&mmi_unitary())
        .unwrap();
    ops::phase_on_first(phi).compose(&inner).unwrap()
}

/// Waveguide crosser: exact exchange of two mode amplitudes.
pub fn crosser() -> Operator {
    ops::pauli_x()
}

/// CNOT between a photon's two encoded qubits: a crosser across the two
/// modes of the control-`|1>` group swaps the target's path state.
pub fn local_cnot_via_crosser(reg: &PathRegister) -> PathRegister {
    let mut out = reg.clone();
    out.swap_modes((2, 3));
    out
}

/// The element sequence of the detection-side basis-change network: route
/// the first-qubit mode pairs together with crossers, interfere each pair
/// in an MMI with a -pi/2 input phase, and restore mode order. Equals a
/// Hadamard on the photon's first qubit up to per-port phases.
pub fn basis_change_elements() -> Vec<CircuitElement> {
    vec![
        CircuitElement::Crosser { modes: (1, 2) },
        CircuitElement::PhaseShifter { mode: 1, theta: -FRAC_PI_2 },
        CircuitElement::PhaseShifter { mode: 3, theta: -FRAC_PI_2 },
        CircuitElement::Mmi { modes: (0, 1) },
        CircuitElement::Mmi { modes: (2, 3) },
        CircuitElement::Crosser { modes: (1, 2) },
    ]
}

/// X-basis analysis network for qubit 3 on photon B: after it, the
/// first-qubit Z port groups carry the `|+>` / `|->` statistics.
pub fn m3_basis_network(reg: &PathRegister) -> PathRegister {
    debug_assert_eq!(reg.photon(), Photon::B);
    let mut out = reg.clone();
    apply_circuit(&basis_change_elements(), &mut out);
    out
}

/// Product preparation of qubits 1&4 from the state-preparation MZIs.
///
/// The chip realizes each prepared qubit with one interferometer per
/// branch of the photon's other (source) qubit, so a product state needs
/// the two branch settings equal; `settings` is ordered
/// `[q1 branch 0, q1 branch 1, q4 branch 0, q4 branch 1]`.
pub fn prepare_product_state(settings: &[MziSetting; 4]) -> PureState {
    if settings[0] != settings[1] || settings[2] != settings[3] {
        log::warn!("prepare_product_state: branch settings differ; using branch-0 settings");
    }
    let q1 = settings[0].prepared_qubit(1);
    let q4 = settings[2].prepared_qubit(4);
    PureState::product(&[&q1, &q4]).unwrap()
}

/// Convenience constructor for a product preparation.
pub fn product_settings(q1: MziSetting, q4: MziSetting) -> [MziSetting; 4] {
    [q1, q1, q4, q4]
}

/// The four rank-1 projectors of a two-qubit product measurement.
/// Outcome index is `2*b1 + b2` for per-qubit outcomes `b1, b2`.
pub fn measurement_setting(bases: [Basis; 2]) -> [Operator; 4] {
    let mut out: Vec<Operator> = Vec::with_capacity(4);
    for b1 in 0u8..2 {
        for b2 in 0u8..2 {
            out.push(bases[0].projector(b1).kronecker(&bases[1].projector(b2)));
        }
    }
    out.try_into().unwrap()
}

/// Parse a two-letter setting token such as "ZX".
pub fn parse_setting(token: &str) -> Result<[Basis; 2]> {
    let chars: Vec<char> = token.chars().collect();
    if chars.len() != 2 {
        return Err(CoreError::UnknownBasis(token.into()));
    }
    Ok([chars[0].to_string().parse()?, chars[1].to_string().parse()?])
}
