//! Two-qubit state and process reconstruction.
//!
//! State tomography uses the 16-setting scheme over the alphabet
//! `{|0>, |1>, |0>+|1>, |0>+i|1>}` per qubit: outcome tables are pooled
//! into Pauli expectation values, linearly inverted, and projected onto
//! the physical set. Process tomography reconstructs the 16x16 chi matrix
//! in the normalized Pauli basis `sigma_a (x) sigma_b / 2` from the 256
//! projections of the fixed input alphabet.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{CoreError, Result};
use crate::operator::{ops, Basis, Operator};
use crate::rng::RngStream;
use crate::state::{MixedState, PureState, C_ZERO};

/// One element of the preparation/measurement alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Letter {
    /// `|0>`
    #[serde(rename = "0")]
    Zero,
    /// `|1>`
    #[serde(rename = "1")]
    One,
    /// `|0> + |1>`
    #[serde(rename = "+")]
    Plus,
    /// `|0> + i|1>`
    #[serde(rename = "i")]
    PlusI,
}

impl Letter {
    pub const ALL: [Letter; 4] = [Letter::Zero, Letter::One, Letter::Plus, Letter::PlusI];

    /// Measurement basis this letter is analyzed in.
    pub fn basis(self) -> Basis {
        match self {
            Letter::Zero | Letter::One => Basis::Z,
            Letter::Plus => Basis::X,
            Letter::PlusI => Basis::Y,
        }
    }

    pub fn token(self) -> char {
        match self {
            Letter::Zero => '0',
            Letter::One => '1',
            Letter::Plus => '+',
            Letter::PlusI => 'i',
        }
    }

    pub fn from_token(c: char) -> Result<Self> {
        match c {
            '0' => Ok(Letter::Zero),
            '1' => Ok(Letter::One),
            '+' => Ok(Letter::Plus),
            'i' => Ok(Letter::PlusI),
            other => Err(CoreError::UnknownBasis(other.to_string())),
        }
    }

    /// Normalized ket amplitudes.
    pub fn amplitudes(self) -> (Complex64, Complex64) {
        let h = 0.5f64.sqrt();
        match self {
            Letter::Zero => (Complex64::new(1.0, 0.0), C_ZERO),
            Letter::One => (C_ZERO, Complex64::new(1.0, 0.0)),
            Letter::Plus => (Complex64::new(h, 0.0), Complex64::new(h, 0.0)),
            Letter::PlusI => (Complex64::new(h, 0.0), Complex64::new(0.0, h)),
        }
    }
}

/// The 16 two-letter settings in canonical order.
pub fn settings() -> [[Letter; 2]; 16] {
    let mut out = [[Letter::Zero; 2]; 16];
    for (i, a) in Letter::ALL.iter().enumerate() {
        for (j, b) in Letter::ALL.iter().enumerate() {
            out[4 * i + j] = [*a, *b];
        }
    }
    out
}

pub fn setting_token(setting: [Letter; 2]) -> String {
    format!("{}{}", setting[0].token(), setting[1].token())
}

pub fn parse_setting_token(token: &str) -> Result<[Letter; 2]> {
    let chars: Vec<char> = token.chars().collect();
    if chars.len() != 2 {
        return Err(CoreError::UnknownBasis(token.into()));
    }
    Ok([Letter::from_token(chars[0])?, Letter::from_token(chars[1])?])
}

/// The product input state of a two-letter preparation, labels `[1, 2]`.
pub fn alphabet_state(setting: [Letter; 2]) -> PureState {
    let (a0, a1) = setting[0].amplitudes();
    let (b0, b1) = setting[1].amplitudes();
    let q1 = PureState::qubit(1, a0, a1).unwrap();
    let q2 = PureState::qubit(2, b0, b1).unwrap();
    PureState::product(&[&q1, &q2]).unwrap()
}

/// Counts for the 16 tomography settings. The four outcomes per setting
/// are indexed `2*b1 + b2` with per-qubit outcome 0 meaning the first
/// basis vector. Counts are `f64` so the same table carries exact
/// probabilities in exact mode.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StateCounts {
    pub tables: BTreeMap<String, [f64; 4]>,
}

impl StateCounts {
    pub fn insert(&mut self, setting: [Letter; 2], outcomes: [f64; 4]) {
        self.tables.insert(setting_token(setting), outcomes);
    }

    pub fn get(&self, setting: [Letter; 2]) -> Result<&[f64; 4]> {
        let token = setting_token(setting);
        self.tables.get(&token).ok_or(CoreError::EmptySetting(token))
    }

    fn validate(&self) -> Result<()> {
        for setting in settings() {
            let table = self.get(setting)?;
            if table.iter().sum::<f64>() <= 0.0 {
                return Err(CoreError::EmptySetting(setting_token(setting)));
            }
        }
        Ok(())
    }
}

/// Exact per-setting probability tables for a two-qubit state.
pub fn exact_state_counts(rho: &MixedState) -> StateCounts {
    let labels = rho.labels().to_vec();
    let mut counts = StateCounts::default();
    for setting in settings() {
        let bases = [setting[0].basis(), setting[1].basis()];
        let mut table = [0.0; 4];
        for b1 in 0u8..2 {
            for b2 in 0u8..2 {
                let proj = bases[0].projector(b1).kronecker(&bases[1].projector(b2));
                table[(2 * b1 + b2) as usize] =
                    rho.expectation(&proj, &labels).unwrap().re.max(0.0);
            }
        }
        counts.insert(setting, table);
    }
    counts
}

/// Multinomial-sampled tables at a fixed number of shots per setting.
pub fn sampled_state_counts(rho: &MixedState, shots: u64, seed: u64) -> StateCounts {
    let exact = exact_state_counts(rho);
    let mut counts = StateCounts::default();
    for (idx, setting) in settings().iter().enumerate() {
        let probs = exact.get(*setting).unwrap();
        let mut rng = RngStream::new(seed, idx as u64);
        let sampled = rng.multinomial(probs, shots);
        let mut table = [0.0; 4];
        for (k, c) in sampled.iter().enumerate() {
            table[k] = *c as f64;
        }
        counts.insert(*setting, table);
    }
    counts
}

fn pauli_sign(outcome: u8) -> f64 {
    if outcome == 0 { 1.0 } else { -1.0 }
}

/// Pooled Pauli expectation values `< sigma_a (x) sigma_b >` indexed
/// `4a + b` over `(I, X, Y, Z)`.
fn pauli_expectations(counts: &StateCounts) -> Result<[f64; 16]> {
    counts.validate()?;
    // Index order (I, X, Y, Z); I pools every qualifying basis.
    let basis_of = |p: usize| -> Option<Basis> {
        match p {
            0 => None,
            1 => Some(Basis::X),
            2 => Some(Basis::Y),
            3 => Some(Basis::Z),
            _ => unreachable!(),
        }
    };

    let mut out = [0.0; 16];
    for a in 0..4 {
        for b in 0..4 {
            let want1 = basis_of(a);
            let want2 = basis_of(b);
            let mut acc = 0.0;
            let mut total = 0.0;
            for setting in settings() {
                let b1 = setting[0].basis();
                let b2 = setting[1].basis();
                if want1.map_or(false, |w| w != b1) || want2.map_or(false, |w| w != b2) {
                    continue;
                }
                let table = counts.get(setting)?;
                for o1 in 0u8..2 {
                    for o2 in 0u8..2 {
                        let c = table[(2 * o1 + o2) as usize];
                        let s1 = if want1.is_some() { pauli_sign(o1) } else { 1.0 };
                        let s2 = if want2.is_some() { pauli_sign(o2) } else { 1.0 };
                        acc += s1 * s2 * c;
                        total += c;
                    }
                }
            }
            out[4 * a + b] = acc / total;
        }
    }
    Ok(out)
}

/// Unnormalized two-qubit Pauli products in `(II, IX, ..., ZZ)` order.
fn pauli_products() -> Vec<Operator> {
    let singles = [ops::identity(1), ops::pauli_x(), ops::pauli_y(), ops::pauli_z()];
    let mut out = Vec::with_capacity(16);
    for a in &singles {
        for b in &singles {
            out.push(a.kronecker(b));
        }
    }
    out
}

/// Labels of the Pauli basis in chi-matrix order.
pub fn pauli_labels() -> [String; 16] {
    let names = ["I", "X", "Y", "Z"];
    let mut out: Vec<String> = Vec::with_capacity(16);
    for a in names {
        for b in names {
            out.push(format!("{a}{b}"));
        }
    }
    out.try_into().unwrap()
}

/// Result of a state reconstruction, keeping the raw linear-inversion
/// estimate for auditability.
#[derive(Clone, Debug)]
pub struct StateReconstruction {
    pub rho: MixedState,
    /// Minimum eigenvalue before the physical projection.
    pub pre_projection_min_eigenvalue: f64,
    pub linear_estimate: DMatrix<Complex64>,
}

/// Frobenius-nearest density matrix: eigenvalues are projected onto the
/// probability simplex (negative weight is truncated, the overflow is
/// redistributed by a uniform shift), eigenvectors are kept.
pub fn project_to_physical(hermitian: &DMatrix<Complex64>) -> (MixedState, f64) {
    let sym = (hermitian + hermitian.adjoint()).scale(0.5);
    let eig = nalgebra::SymmetricEigen::new(sym);
    let dim = hermitian.nrows();
    let mut lambdas: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    let min_eig = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);

    // Euclidean projection of the spectrum onto the probability simplex.
    let mut sorted = lambdas.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        acc += v;
        let candidate = (acc - 1.0) / (k + 1) as f64;
        if v - candidate > 0.0 {
            tau = candidate;
        }
    }
    for l in lambdas.iter_mut() {
        *l = (*l - tau).max(0.0);
    }

    let mut rho = DMatrix::from_element(dim, dim, C_ZERO);
    for (k, l) in lambdas.iter().enumerate() {
        if *l > 0.0 {
            let v = eig.eigenvectors.column(k);
            rho += (v * v.adjoint()).scale(*l);
        }
    }
    (MixedState::new(rho).unwrap(), min_eig)
}

/// Reconstruct a two-qubit density matrix from 16-setting counts.
pub fn reconstruct_state(counts: &StateCounts) -> Result<StateReconstruction> {
    let expectations = pauli_expectations(counts)?;
    let products = pauli_products();
    let mut linear = DMatrix::from_element(4, 4, C_ZERO);
    for (e, p) in expectations.iter().zip(products.iter()) {
        linear += p.matrix().scale(e / 4.0);
    }
    let (rho, min_eig) = project_to_physical(&linear);
    Ok(StateReconstruction {
        rho,
        pre_projection_min_eigenvalue: min_eig,
        linear_estimate: linear,
    })
}

/// Process matrix in the normalized Pauli basis, trace 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ChiMatrix {
    matrix: DMatrix<Complex64>,
}

impl ChiMatrix {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// Chi matrix of a unitary process via its Pauli expansion: with
    /// `U = sum_m c_m A_m`, chi is the rank-1 matrix `c c^dagger / |c|^2`.
    pub fn of_unitary(u: &Operator) -> ChiMatrix {
        let basis = ops::normalized_pauli_basis();
        let mut c = DVector::from_element(16, C_ZERO);
        for (m, a) in basis.iter().enumerate() {
            c[m] = (a.matrix().adjoint() * u.matrix()).trace();
        }
        let norm_sqr = c.norm_squared();
        let matrix = (&c * c.adjoint()).scale(1.0 / norm_sqr);
        ChiMatrix { matrix }
    }

    /// Chi matrix of the two-qubit identity process: all weight on II.
    pub fn identity_process() -> ChiMatrix {
        Self::of_unitary(&ops::identity(2))
    }

    /// Chi matrix of the CNOT process (control on the first qubit).
    pub fn ideal_cnot() -> ChiMatrix {
        Self::of_unitary(&ops::cnot())
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.matrix + self.matrix.adjoint()).scale(0.5);
        let mut eigs: Vec<f64> =
            nalgebra::SymmetricEigen::new(herm).eigenvalues.iter().cloned().collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        eigs
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }
}

/// Process reconstruction with raw (Eq.-exact) and normalized outputs.
#[derive(Clone, Debug)]
pub struct ProcessReconstruction {
    /// Physical (Hermitian, PSD, trace-1) chi matrix.
    pub chi: ChiMatrix,
    /// Raw solution of the linear system before projection: it satisfies
    /// the process equation exactly, with trace 4 for a trace-preserving
    /// process (the display convention of raw/4 matches the unnormalized
    /// Pauli-basis convention).
    pub chi_raw: DMatrix<Complex64>,
    /// Deviation of `sum chi_mn A_n^dag A_m` from the identity; nonzero
    /// for post-selected (non-trace-preserving) processes.
    pub tp_deviation: f64,
    /// Minimum eigenvalue of the hermitized raw chi before projection.
    pub pre_projection_min_eigenvalue: f64,
}

/// Reconstruct the chi matrix from the 16 fixed alphabet inputs and one
/// reconstructed output state per input.
pub fn reconstruct_process_from_states(outputs: &[MixedState; 16]) -> ProcessReconstruction {
    let basis = ops::normalized_pauli_basis();
    let inputs = settings();
    let dim = 4usize;
    let unknowns = 256usize;

    let mut m = DMatrix::from_element(unknowns, unknowns, C_ZERO);
    let mut rhs = DVector::from_element(unknowns, C_ZERO);
    for (k, setting) in inputs.iter().enumerate() {
        let rho_in = alphabet_state(*setting).density();
        for (mi, am) in basis.iter().enumerate() {
            for (ni, an) in basis.iter().enumerate() {
                let block = am.matrix() * rho_in.matrix() * an.matrix().adjoint();
                for r in 0..dim {
                    for c in 0..dim {
                        m[(k * 16 + r * dim + c, mi * 16 + ni)] = block[(r, c)];
                    }
                }
            }
        }
        for r in 0..dim {
            for c in 0..dim {
                rhs[k * 16 + r * dim + c] = outputs[k].matrix()[(r, c)];
            }
        }
    }

    let lu = m.lu();
    // The fixed alphabet spans the operator space; a singular system here
    // means the inputs were not the spanning set.
    let chi_vec = lu.solve(&rhs).expect("alphabet input set must span the operator space");

    let mut chi_raw = DMatrix::from_element(16, 16, C_ZERO);
    for mi in 0..16 {
        for ni in 0..16 {
            chi_raw[(mi, ni)] = chi_vec[mi * 16 + ni];
        }
    }

    // Trace-preservation diagnostic on the raw solution.
    let mut tp = DMatrix::from_element(dim, dim, C_ZERO);
    for (mi, am) in basis.iter().enumerate() {
        for (ni, an) in basis.iter().enumerate() {
            tp += (an.matrix().adjoint() * am.matrix()).scale(1.0) * chi_raw[(mi, ni)];
        }
    }
    let tp_deviation = (tp - DMatrix::identity(dim, dim)).camax();

    // Hermitize, clip negative eigenvalues, renormalize the trace.
    let herm = (&chi_raw + chi_raw.adjoint()).scale(0.5);
    let eig = nalgebra::SymmetricEigen::new(herm);
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut projected = DMatrix::from_element(16, 16, C_ZERO);
    for (k, l) in eig.eigenvalues.iter().enumerate() {
        if *l > 0.0 {
            let v = eig.eigenvectors.column(k);
            projected += (v * v.adjoint()).scale(*l);
        }
    }
    let trace = projected.trace().re;
    let chi = ChiMatrix { matrix: projected.scale(1.0 / trace) };

    ProcessReconstruction { chi, chi_raw, tp_deviation, pre_projection_min_eigenvalue: min_eig }
}

/// Reconstruct the chi matrix from per-input 16-setting count tables.
/// `inputs` must be the fixed alphabet in canonical order.
pub fn reconstruct_process(
    inputs: &[[Letter; 2]; 16],
    counts: &[StateCounts; 16],
) -> Result<ProcessReconstruction> {
    assert_eq!(inputs, &settings(), "process tomography runs over the fixed alphabet");
    let mut outputs = Vec::with_capacity(16);
    for table in counts {
        outputs.push(reconstruct_state(table)?.rho);
    }
    let outputs: [MixedState; 16] = outputs.try_into().unwrap();
    Ok(reconstruct_process_from_states(&outputs))
}

/// `Tr(chi_exp chi_ideal)`, real part.
pub fn fidelity_process(exp: &ChiMatrix, ideal: &ChiMatrix) -> Result<f64> {
    if exp.matrix.nrows() != ideal.matrix.nrows() {
        return Err(CoreError::DimensionMismatch {
            expected: ideal.matrix.nrows(),
            got: exp.matrix.nrows(),
        });
    }
    let t = (&exp.matrix * &ideal.matrix).trace();
    debug_assert!(t.im.abs() < 1e-10, "process fidelity imaginary residue {}", t.im);
    Ok(t.re)
}

/// Fringe visibility from a least-squares cosine fit.
///
/// Fits `C(phi) = c0 + c1 cos(phi) + c2 sin(phi)` (equivalently
/// `A (1 + V cos(phi - phi0))`) and returns `V`. Needs at least 8 phase
/// points covering a full period. Flat data fits `V = 0` with a warning.
pub fn visibility(fringe: &[(f64, f64)]) -> Result<f64> {
    if fringe.len() < 8 {
        return Err(CoreError::InvalidConfig(format!(
            "visibility fit needs >= 8 phase points, got {}",
            fringe.len()
        )));
    }
    let lo = fringe.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = fringe.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 2.0 * std::f64::consts::PI * 0.9 {
        return Err(CoreError::InvalidConfig(
            "visibility fit needs phases covering a full period".into(),
        ));
    }

    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for &(phi, count) in fringe {
        let row = nalgebra::Vector3::new(1.0, phi.cos(), phi.sin());
        ata += row * row.transpose();
        atb += row * count;
    }
    let coeffs = ata
        .lu()
        .solve(&atb)
        .ok_or_else(|| CoreError::InvalidConfig("degenerate visibility fit".into()))?;
    let amplitude = (coeffs[1].powi(2) + coeffs[2].powi(2)).sqrt();
    if coeffs[0] <= 0.0 || amplitude < 1e-12 * coeffs[0].abs().max(1.0) {
        log::warn!("visibility: flat fringe, reporting V = 0");
        return Ok(0.0);
    }
    Ok(amplitude / coeffs[0])
}

/// Random two-qubit density matrix: a mixture of four random pure states.
pub fn random_density(rng: &mut RngStream) -> MixedState {
    let mut rho = DMatrix::from_element(4, 4, C_ZERO);
    let mut weights = [0.0; 4];
    let mut total = 0.0;
    for w in weights.iter_mut() {
        *w = rng.uniform();
        total += *w;
    }
    for w in &weights {
        let s = ops::random_state(2, rng);
        rho += s.density().matrix().scale(w / total);
    }
    MixedState::new(rho).unwrap()
}

fn resample(counts: &StateCounts, rng: &mut RngStream) -> StateCounts {
    let mut resampled = StateCounts::default();
    for (token, table) in &counts.tables {
        let mut new_table = [0.0; 4];
        for (k, c) in table.iter().enumerate() {
            new_table[k] = rng.poisson(*c) as f64;
        }
        resampled.tables.insert(token.clone(), new_table);
    }
    resampled
}

/// Poisson-bootstrap error bar for an estimator over count tables.
///
/// Each count is resampled as `Poisson(count)`, the estimator re-run, and
/// the standard deviation of the resampled estimates returned together
/// with the point estimate on the original counts.
pub fn bootstrap_error<F>(
    counts: &StateCounts,
    estimator: F,
    resamples: usize,
    seed: u64,
) -> (f64, f64)
where
    F: Fn(&StateCounts) -> f64,
{
    let point = estimator(counts);
    let mut rng = RngStream::new(seed, u64::MAX);
    let mut values = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        values.push(estimator(&resample(counts, &mut rng)));
    }
    (point, std_dev(&values))
}

/// Bootstrap over a set of count tables resampled jointly (process
/// tomography and other multi-table estimators).
pub fn bootstrap_error_multi<F>(
    counts: &[StateCounts],
    estimator: F,
    resamples: usize,
    seed: u64,
) -> (f64, f64)
where
    F: Fn(&[StateCounts]) -> f64,
{
    let point = estimator(counts);
    let mut rng = RngStream::new(seed, u64::MAX - 1);
    let mut values = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let tables: Vec<StateCounts> = counts.iter().map(|c| resample(c, &mut rng)).collect();
        values.push(estimator(&tables));
    }
    (point, std_dev(&values))
}

fn std_dev(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
        / (values.len().saturating_sub(1)).max(1) as f64;
    var.sqrt()
}
