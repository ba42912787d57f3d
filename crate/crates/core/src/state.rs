//! Multi-qubit pure and mixed states over labeled registers.
//!
//! Registers are ordered by qubit label, label 1 first; the first label is
//! the most significant bit of the amplitude index, so a register with
//! labels `[1, 2, 3, 4]` indexes its amplitudes as `|q1 q2 q3 q4>`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{CoreError, Result};
use crate::operator::{Basis, Operator};
use crate::rng::RngStream;

pub const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Tolerance for exact algebra (norms, traces, unitarity).
pub const TOL_ALGEBRA: f64 = 1e-12;
/// Tolerance for eigenvalue positivity checks.
pub const TOL_EIGEN: f64 = 1e-10;

/// Normalized amplitude vector over a labeled qubit register.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amps: DVector<Complex64>,
    labels: Vec<u8>,
}

/// Density matrix over a labeled qubit register.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedState {
    rho: DMatrix<Complex64>,
    labels: Vec<u8>,
}

/// The four maximally entangled two-qubit states.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BellKind {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

/// The named Bell state, with labels `[1, 2]`.
pub fn bell_state(kind: BellKind) -> PureState {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let amps = match kind {
        BellKind::PhiPlus => vec![h, C_ZERO, C_ZERO, h],
        BellKind::PhiMinus => vec![h, C_ZERO, C_ZERO, -h],
        BellKind::PsiPlus => vec![C_ZERO, h, h, C_ZERO],
        BellKind::PsiMinus => vec![C_ZERO, h, -h, C_ZERO],
    };
    PureState::with_labels(DVector::from_vec(amps), vec![1, 2]).unwrap()
}

fn check_labels(labels: &[u8]) -> Result<()> {
    for (k, l) in labels.iter().enumerate() {
        if labels[..k].contains(l) {
            return Err(CoreError::DuplicateTargets(labels.to_vec()));
        }
    }
    Ok(())
}

impl PureState {
    /// State from amplitudes, labels defaulting to `1..=n`.
    pub fn new(amps: DVector<Complex64>) -> Result<Self> {
        let n = amps.len().trailing_zeros() as usize;
        if amps.len() != 1 << n || amps.is_empty() {
            return Err(CoreError::DimensionMismatch { expected: 1 << n, got: amps.len() });
        }
        Self::with_labels(amps, (1..=n as u8).collect())
    }

    pub fn with_labels(amps: DVector<Complex64>, labels: Vec<u8>) -> Result<Self> {
        if amps.len() != 1 << labels.len() {
            return Err(CoreError::DimensionMismatch { expected: 1 << labels.len(), got: amps.len() });
        }
        check_labels(&labels)?;
        let norm = amps.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(CoreError::InvalidConfig(format!("state norm {norm} is not 1")));
        }
        let mut s = Self { amps, labels };
        s.renormalize();
        Ok(s)
    }

    /// Computational basis state `|bits>` for the given labels, e.g.
    /// `basis(&[1, 4], 0b10)` is `|1>_1 |0>_4`.
    pub fn basis(labels: &[u8], index: usize) -> Self {
        let mut amps = DVector::from_element(1 << labels.len(), C_ZERO);
        amps[index] = C_ONE;
        Self::with_labels(amps, labels.to_vec()).unwrap()
    }

    /// Single-qubit state `a|0> + b|1>` with the given label.
    pub fn qubit(label: u8, a: Complex64, b: Complex64) -> Result<Self> {
        Self::with_labels(DVector::from_vec(vec![a, b]), vec![label])
    }

    /// Tensor product of factors; the result register is ordered by label.
    pub fn product(factors: &[&PureState]) -> Result<Self> {
        let mut labels: Vec<u8> = factors.iter().flat_map(|f| f.labels.clone()).collect();
        check_labels(&labels)?;
        let mut amps = DVector::from_element(1, C_ONE);
        for f in factors {
            amps = amps.kronecker(&f.amps);
        }
        // Sort the register by label, tracking the bit permutation.
        let n = labels.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&k| labels[k]);
        let mut sorted = DVector::from_element(1 << n, C_ZERO);
        for (idx, amp) in amps.iter().enumerate() {
            let mut new_idx = 0usize;
            for (new_pos, &old_pos) in order.iter().enumerate() {
                let bit = (idx >> (n - 1 - old_pos)) & 1;
                new_idx |= bit << (n - 1 - new_pos);
            }
            sorted[new_idx] = *amp;
        }
        labels.sort_unstable();
        Self::with_labels(sorted, labels)
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amps
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn num_qubits(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    /// Bit position (from the most significant) of a labeled qubit.
    pub fn bit_of(&self, label: u8) -> Result<usize> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .ok_or(CoreError::UnknownQubit(label))
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    fn renormalize(&mut self) {
        let norm = self.amps.norm();
        if norm > 0.0 {
            self.amps /= Complex64::new(norm, 0.0);
        }
    }

    /// Density matrix `|psi><psi|`.
    pub fn density(&self) -> MixedState {
        let rho = &self.amps * self.amps.adjoint();
        MixedState { rho, labels: self.labels.clone() }
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureState) -> Complex64 {
        self.amps.dotc(&other.amps)
    }

    /// `|<self|other>|^2`, a global-phase-free comparison.
    pub fn overlap(&self, other: &PureState) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Apply an operator to the targeted qubits.
    pub fn apply(&self, op: &Operator, targets: &[u8]) -> Result<Self> {
        let full = op.embed(&self.labels, targets)?;
        let amps = full * &self.amps;
        Ok(Self { amps, labels: self.labels.clone() })
    }

    /// Probability of outcome 0 (first basis vector) when measuring one
    /// qubit in the given basis, plus both collapsed branches.
    fn branch(&self, qubit: u8, basis: Basis) -> Result<(f64, DVector<Complex64>, DVector<Complex64>)> {
        let bit = self.bit_of(qubit)?;
        let shift = self.num_qubits() - 1 - bit;
        // Rotate the measured qubit so outcome 0 means "first basis vector".
        let rotated = match basis {
            Basis::Z => self.clone(),
            _ => self.apply(&basis.to_z_rotation(), &[qubit])?,
        };
        let mut p0 = 0.0;
        for (idx, amp) in rotated.amps.iter().enumerate() {
            if (idx >> shift) & 1 == 0 {
                p0 += amp.norm_sqr();
            }
        }
        let mut b0 = rotated.amps.clone();
        let mut b1 = rotated.amps.clone();
        for idx in 0..b0.len() {
            if (idx >> shift) & 1 == 0 {
                b1[idx] = C_ZERO;
            } else {
                b0[idx] = C_ZERO;
            }
        }
        Ok((p0, b0, b1))
    }

    fn undo_rotation(basis: Basis, collapsed: PureState, qubit: u8) -> PureState {
        match basis {
            Basis::Z => collapsed,
            _ => collapsed.apply(&basis.from_z_rotation(), &[qubit]).unwrap(),
        }
    }

    /// Projective measurement of one qubit; outcome 0 is the first basis
    /// vector of `basis` (`|0>`, `|+>` or `|+i>`).
    pub fn measure_qubit(&self, qubit: u8, basis: Basis, rng: &mut RngStream) -> Result<(u8, PureState)> {
        let (p0, b0, b1) = self.branch(qubit, basis)?;
        debug_assert!((p0 + (1.0 - p0) - 1.0).abs() < TOL_ALGEBRA);
        let outcome = if rng.uniform() < p0 { 0 } else { 1 };
        let mut collapsed = Self {
            amps: if outcome == 0 { b0 } else { b1 },
            labels: self.labels.clone(),
        };
        collapsed.renormalize();
        Ok((outcome, Self::undo_rotation(basis, collapsed, qubit)))
    }

    /// Deterministic projection onto one measurement branch. Errors when
    /// the branch probability vanishes.
    pub fn project_qubit(&self, qubit: u8, basis: Basis, outcome: u8) -> Result<(f64, PureState)> {
        let (p0, b0, b1) = self.branch(qubit, basis)?;
        let p = if outcome == 0 { p0 } else { 1.0 - p0 };
        if p < 1e-14 {
            return Err(CoreError::ZeroProbabilityBranch { prob: p });
        }
        let mut collapsed = Self {
            amps: if outcome == 0 { b0 } else { b1 },
            labels: self.labels.clone(),
        };
        collapsed.renormalize();
        Ok((p, Self::undo_rotation(basis, collapsed, qubit)))
    }

    /// Exact outcome probabilities for measuring one qubit.
    pub fn outcome_probabilities(&self, qubit: u8, basis: Basis) -> Result<[f64; 2]> {
        let (p0, _, _) = self.branch(qubit, basis)?;
        Ok([p0, 1.0 - p0])
    }
}

impl MixedState {
    pub fn new(rho: DMatrix<Complex64>) -> Result<Self> {
        let n = rho.nrows().trailing_zeros() as usize;
        Self::with_labels(rho, (1..=n as u8).collect())
    }

    pub fn with_labels(rho: DMatrix<Complex64>, labels: Vec<u8>) -> Result<Self> {
        if rho.nrows() != rho.ncols() || rho.nrows() != 1 << labels.len() {
            return Err(CoreError::DimensionMismatch { expected: 1 << labels.len(), got: rho.nrows() });
        }
        check_labels(&labels)?;
        Ok(Self { rho, labels })
    }

    /// Maximally mixed state `I / 2^n` on the given labels.
    pub fn maximally_mixed(labels: &[u8]) -> Self {
        let dim = 1 << labels.len();
        let rho = DMatrix::from_diagonal_element(dim, dim, Complex64::new(1.0 / dim as f64, 0.0));
        Self { rho, labels: labels.to_vec() }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn num_qubits(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    /// Bit position (from the most significant) of a labeled qubit.
    pub fn bit_of(&self, label: u8) -> Result<usize> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .ok_or(CoreError::UnknownQubit(label))
    }

    /// Hermiticity defect `max |rho - rho^dagger|`.
    pub fn hermiticity_defect(&self) -> f64 {
        (&self.rho - self.rho.adjoint()).camax()
    }

    /// Validate the Hermitian / unit-trace / positive invariants.
    pub fn validate(&self) -> Result<()> {
        if self.hermiticity_defect() > 1e-10 {
            return Err(CoreError::InvalidConfig("density matrix is not Hermitian".into()));
        }
        if (self.trace().re - 1.0).abs() > 1e-9 || self.trace().im.abs() > 1e-10 {
            return Err(CoreError::InvalidConfig(format!("trace {} is not 1", self.trace())));
        }
        let eigs = self.eigenvalues();
        if eigs.iter().any(|&l| l < -TOL_EIGEN) {
            return Err(CoreError::InvalidConfig(format!(
                "negative eigenvalue {:.3e}",
                eigs.iter().cloned().fold(f64::INFINITY, f64::min)
            )));
        }
        Ok(())
    }

    /// Real eigenvalues of the (Hermitian) density matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.rho + self.rho.adjoint()).scale(0.5);
        let mut eigs: Vec<f64> = nalgebra::SymmetricEigen::new(herm).eigenvalues.iter().cloned().collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        eigs
    }

    /// Apply an operator by conjugation on the targeted qubits.
    pub fn apply(&self, op: &Operator, targets: &[u8]) -> Result<Self> {
        let full = op.embed(&self.labels, targets)?;
        let rho = &full * &self.rho * full.adjoint();
        Ok(Self { rho, labels: self.labels.clone() })
    }

    /// `Tr(P rho)` for an operator embedded on the targeted qubits.
    pub fn expectation(&self, op: &Operator, targets: &[u8]) -> Result<Complex64> {
        let full = op.embed(&self.labels, targets)?;
        Ok((full * &self.rho).trace())
    }

    /// Project onto one measurement branch of one qubit and renormalize.
    /// Returns the branch probability and the conditional state.
    pub fn project_qubit(&self, qubit: u8, basis: Basis, outcome: u8) -> Result<(f64, MixedState)> {
        let projector = basis.projector(outcome);
        let full = projector.embed(&self.labels, &[qubit])?;
        let unnorm = &full * &self.rho * full.adjoint();
        let p = unnorm.trace().re;
        if p < 1e-14 {
            return Err(CoreError::ZeroProbabilityBranch { prob: p });
        }
        let rho = unnorm.scale(1.0 / p);
        Ok((p, Self { rho, labels: self.labels.clone() }))
    }

    /// Partial trace keeping the listed qubits (by label).
    pub fn partial_trace(&self, keep: &[u8]) -> Result<MixedState> {
        if keep.is_empty() {
            return Err(CoreError::EmptyKeepSet);
        }
        let mut keep_sorted = keep.to_vec();
        keep_sorted.sort_unstable();
        keep_sorted.dedup();
        for l in &keep_sorted {
            if !self.labels.contains(l) {
                return Err(CoreError::UnknownQubit(*l));
            }
        }
        let n = self.num_qubits();
        let keep_bits: Vec<usize> = keep_sorted.iter().map(|l| self.bit_of(*l).unwrap()).collect();
        let drop_bits: Vec<usize> = (0..n).filter(|b| !keep_bits.contains(b)).collect();
        let kn = keep_bits.len();
        let dn = drop_bits.len();
        let mut out = DMatrix::from_element(1 << kn, 1 << kn, C_ZERO);

        let expand = |kept: usize, dropped: usize| -> usize {
            let mut idx = 0usize;
            for (pos, &b) in keep_bits.iter().enumerate() {
                idx |= ((kept >> (kn - 1 - pos)) & 1) << (n - 1 - b);
            }
            for (pos, &b) in drop_bits.iter().enumerate() {
                idx |= ((dropped >> (dn - 1 - pos)) & 1) << (n - 1 - b);
            }
            idx
        };

        for row in 0..1usize << kn {
            for col in 0..1usize << kn {
                let mut acc = C_ZERO;
                for d in 0..1usize << dn {
                    acc += self.rho[(expand(row, d), expand(col, d))];
                }
                out[(row, col)] = acc;
            }
        }
        Ok(MixedState { rho: out, labels: keep_sorted })
    }

    /// Tensor product; the result register is ordered by label.
    pub fn tensor(&self, other: &MixedState) -> Result<MixedState> {
        let mut labels: Vec<u8> = self.labels.iter().chain(other.labels.iter()).cloned().collect();
        check_labels(&labels)?;
        let kron = self.rho.kronecker(&other.rho);
        let n = labels.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&k| labels[k]);
        let remap = |idx: usize| -> usize {
            let mut new_idx = 0usize;
            for (new_pos, &old_pos) in order.iter().enumerate() {
                let bit = (idx >> (n - 1 - old_pos)) & 1;
                new_idx |= bit << (n - 1 - new_pos);
            }
            new_idx
        };
        let mut out = DMatrix::from_element(1 << n, 1 << n, C_ZERO);
        for row in 0..1usize << n {
            for col in 0..1usize << n {
                out[(remap(row), remap(col))] = kron[(row, col)];
            }
        }
        labels.sort_unstable();
        MixedState::with_labels(out, labels)
    }
}

/// `Tr(measured * ideal)`, the overlap fidelity used throughout.
///
/// The formula assumes a pure `ideal`; a mixed ideal is accepted with a
/// warning since the result then underestimates the Uhlmann fidelity.
pub fn fidelity_state(measured: &MixedState, ideal: &MixedState) -> Result<f64> {
    if measured.dim() != ideal.dim() {
        return Err(CoreError::DimensionMismatch { expected: ideal.dim(), got: measured.dim() });
    }
    let purity = (ideal.matrix() * ideal.matrix()).trace().re;
    if (purity - 1.0).abs() > 1e-6 {
        log::warn!("fidelity_state: ideal state has purity {purity:.6}; the trace formula assumes a pure target");
    }
    let t = (measured.matrix() * ideal.matrix()).trace();
    debug_assert!(t.im.abs() < 1e-10, "fidelity imaginary residue {}", t.im);
    Ok(t.re)
}

/// Fidelity of a mixed state against a pure target.
pub fn fidelity_to_pure(measured: &MixedState, ideal: &PureState) -> Result<f64> {
    fidelity_state(measured, &ideal.density())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::ops;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn bell_states_match_their_amplitudes() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let phi_plus = bell_state(BellKind::PhiPlus);
        let expect = [h, 0.0, 0.0, h];
        for (a, e) in phi_plus.amplitudes().iter().zip(expect) {
            assert_abs_diff_eq!(a.re, e, epsilon = 1e-15);
            assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-15);
        }
        let psi_minus = bell_state(BellKind::PsiMinus);
        let expect = [0.0, h, -h, 0.0];
        for (a, e) in psi_minus.amplitudes().iter().zip(expect) {
            assert_abs_diff_eq!(a.re, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn bell_states_are_orthogonal() {
        let pp = bell_state(BellKind::PhiPlus);
        let pm = bell_state(BellKind::PhiMinus);
        assert!(pp.inner(&pm).norm() < 1e-15);
    }

    #[test]
    fn cnot_truth_table_on_basis_state() {
        let s = PureState::basis(&[1, 2], 0b10);
        let out = s.apply(&ops::cnot(), &[1, 2]).unwrap();
        assert!(out.overlap(&PureState::basis(&[1, 2], 0b11)) > 1.0 - 1e-12);
    }

    #[test]
    fn identity_leaves_state_unchanged() {
        let s = bell_state(BellKind::PsiPlus);
        let out = s.apply(&ops::identity(1), &[1]).unwrap();
        assert!(out.overlap(&s) > 1.0 - 1e-12);
    }

    #[test]
    fn cnot_on_plus_zero_gives_phi_plus() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = PureState::qubit(1, c(h, 0.0), c(h, 0.0)).unwrap();
        let zero = PureState::qubit(4, c(1.0, 0.0), c(0.0, 0.0)).unwrap();
        let input = PureState::product(&[&plus, &zero]).unwrap();
        let out = input.apply(&ops::cnot(), &[1, 4]).unwrap();
        let mut target = bell_state(BellKind::PhiPlus);
        target.labels = vec![1, 4];
        assert!(out.overlap(&target) > 1.0 - 1e-12);
    }

    #[test]
    fn measure_basis_states_deterministically() {
        let mut rng = RngStream::new(0, 0);
        let zero = PureState::qubit(1, C_ONE, C_ZERO).unwrap();
        for _ in 0..10 {
            let (o, _) = zero.measure_qubit(1, Basis::Z, &mut rng).unwrap();
            assert_eq!(o, 0);
        }
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = PureState::qubit(1, c(h, 0.0), c(h, 0.0)).unwrap();
        for _ in 0..10 {
            let (o, _) = plus.measure_qubit(1, Basis::X, &mut rng).unwrap();
            assert_eq!(o, 0);
        }
    }

    #[test]
    fn born_rule_on_bell_pair_qubit() {
        // Brute-force Born rule over the 4 amplitudes.
        let s = bell_state(BellKind::PhiPlus);
        let brute_p0: f64 = s
            .amplitudes()
            .iter()
            .enumerate()
            .filter(|(idx, _)| idx & 1 == 0) // qubit 2 is the low bit of |q1 q2>
            .map(|(_, a)| a.norm_sqr())
            .sum();
        let [p0, p1] = s.outcome_probabilities(2, Basis::Z).unwrap();
        assert_abs_diff_eq!(p0, brute_p0, epsilon = 1e-15);
        assert_abs_diff_eq!(p0, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p0 + p1, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn measurement_frequencies_match_born_probabilities() {
        // 1e5 shots against the exact probabilities, 5-sigma binomial bound.
        let amps = DVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        let s = PureState::with_labels(amps, vec![1]).unwrap();
        let mut rng = RngStream::new(42, 0);
        let shots = 100_000u64;
        let mut ones = 0u64;
        for _ in 0..shots {
            let (o, _) = s.measure_qubit(1, Basis::Z, &mut rng).unwrap();
            ones += o as u64;
        }
        let p = 0.64;
        let sigma = (shots as f64 * p * (1.0 - p)).sqrt();
        assert!((ones as f64 - shots as f64 * p).abs() < 5.0 * sigma);
    }

    #[test]
    fn zero_probability_branch_is_an_error() {
        let zero = PureState::qubit(1, C_ONE, C_ZERO).unwrap();
        assert!(matches!(
            zero.project_qubit(1, Basis::Z, 1),
            Err(CoreError::ZeroProbabilityBranch { .. })
        ));
    }

    #[test]
    fn partial_trace_of_bell_pair_is_maximally_mixed() {
        let rho = bell_state(BellKind::PhiPlus).density();
        let reduced = rho.partial_trace(&[1]).unwrap();
        let expect = MixedState::maximally_mixed(&[1]);
        assert!((reduced.matrix() - expect.matrix()).camax() < 1e-12);
    }

    #[test]
    fn partial_trace_keeping_everything_is_identity() {
        let rho = bell_state(BellKind::PsiMinus).density();
        let same = rho.partial_trace(&[1, 2]).unwrap();
        assert!((same.matrix() - rho.matrix()).camax() < 1e-15);
    }

    #[test]
    fn partial_trace_empty_keep_set_is_an_error() {
        let rho = bell_state(BellKind::PhiPlus).density();
        assert!(matches!(rho.partial_trace(&[]), Err(CoreError::EmptyKeepSet)));
    }

    #[test]
    fn partial_trace_pauli_consistency() {
        // Tr[(sigma_a x I) rho] must equal Tr[sigma_a Tr_B(rho)].
        let mut rng = RngStream::new(3, 0);
        let u = ops::random_unitary(4, &mut rng);
        let base = PureState::basis(&[1, 2], 0).apply(&u, &[1, 2]).unwrap();
        let rho = base.density();
        let reduced = rho.partial_trace(&[1]).unwrap();
        for pauli in [ops::pauli_x(), ops::pauli_y(), ops::pauli_z(), ops::identity(1)] {
            let full = rho.expectation(&pauli, &[1]).unwrap();
            let red = reduced.expectation(&pauli, &[1]).unwrap();
            assert!((full - red).norm() < 1e-12);
        }
    }

    #[test]
    fn fidelity_examples() {
        let pp = bell_state(BellKind::PhiPlus).density();
        let pm = bell_state(BellKind::PhiMinus).density();
        assert_abs_diff_eq!(fidelity_state(&pp, &pp).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity_state(&pp, &pm).unwrap(), 0.0, epsilon = 1e-12);

        // 0.95 Werner state against its Bell component: direct trace arithmetic
        // gives 0.95 + 0.05/4 = 0.9625.
        let werner = MixedState::new(
            pp.matrix().scale(0.95) + MixedState::maximally_mixed(&[1, 2]).matrix().scale(0.05),
        )
        .unwrap();
        assert_abs_diff_eq!(fidelity_state(&werner, &pp).unwrap(), 0.9625, epsilon = 1e-12);
    }

    #[test]
    fn fidelity_dimension_mismatch_is_an_error() {
        let a = bell_state(BellKind::PhiPlus).density();
        let b = MixedState::maximally_mixed(&[1]);
        assert!(fidelity_state(&a, &b).is_err());
    }

    #[test]
    fn pure_pure_fidelity_is_symmetric_overlap() {
        let mut rng = RngStream::new(9, 0);
        for _ in 0..200 {
            let a = ops::random_state(2, &mut rng);
            let b = ops::random_state(2, &mut rng);
            let f_ab = fidelity_state(&a.density(), &b.density()).unwrap();
            let f_ba = fidelity_state(&b.density(), &a.density()).unwrap();
            assert_abs_diff_eq!(f_ab, f_ba, epsilon = 1e-12);
            assert_abs_diff_eq!(f_ab, a.overlap(&b), epsilon = 1e-12);
        }
    }

    #[test]
    fn unitaries_preserve_norm() {
        let mut rng = RngStream::new(11, 0);
        for _ in 0..1000 {
            let s = ops::random_state(3, &mut rng);
            let u = ops::random_unitary(2, &mut rng);
            let out = s.apply(&u, &[2]).unwrap();
            assert!((out.norm() - 1.0).abs() < TOL_ALGEBRA);
        }
    }

    #[test]
    fn product_orders_register_by_label() {
        let one = PureState::qubit(4, C_ZERO, C_ONE).unwrap();
        let zero = PureState::qubit(1, C_ONE, C_ZERO).unwrap();
        let s = PureState::product(&[&one, &zero]).unwrap();
        assert_eq!(s.labels(), &[1, 4]);
        // |0>_1 |1>_4 -> index 0b01
        assert!((s.amplitudes()[0b01].norm() - 1.0).abs() < 1e-15);
    }
}
