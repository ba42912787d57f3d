//! Operators on qubit registers: Pauli set, gates, projectors, rotations,
//! and the machinery to embed a k-qubit operator into a labeled register.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::RngStream;
use crate::state::{PureState, C_ONE, C_ZERO};

/// A `2^k x 2^k` matrix acting on `k` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    matrix: DMatrix<Complex64>,
    arity: usize,
}

/// Single-qubit measurement bases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
    Y,
}

/// Names for the Pauli set, used by correction tables and wire messages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliLabel {
    I,
    X,
    Y,
    Z,
}

impl PauliLabel {
    pub const ALL: [PauliLabel; 4] = [PauliLabel::I, PauliLabel::X, PauliLabel::Y, PauliLabel::Z];

    pub fn operator(self) -> Operator {
        match self {
            PauliLabel::I => ops::identity(1),
            PauliLabel::X => ops::pauli_x(),
            PauliLabel::Y => ops::pauli_y(),
            PauliLabel::Z => ops::pauli_z(),
        }
    }
}

impl std::fmt::Display for PauliLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for Basis {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Z" | "z" => Ok(Basis::Z),
            "X" | "x" => Ok(Basis::X),
            "Y" | "y" => Ok(Basis::Y),
            other => Err(CoreError::UnknownBasis(other.into())),
        }
    }
}

impl Basis {
    /// Unitary mapping this basis onto the Z basis (first vector to `|0>`).
    pub fn to_z_rotation(self) -> Operator {
        match self {
            Basis::Z => ops::identity(1),
            Basis::X => ops::hadamard(),
            // Maps |+i> -> |0>, |-i> -> |1>.
            Basis::Y => Operator::from_rows(
                1,
                &[
                    [Complex64::new(0.5f64.sqrt(), 0.0), Complex64::new(0.0, -(0.5f64.sqrt()))],
                    [Complex64::new(0.5f64.sqrt(), 0.0), Complex64::new(0.0, 0.5f64.sqrt())],
                ]
                .concat(),
            ),
        }
    }

    pub fn from_z_rotation(self) -> Operator {
        let m = self.to_z_rotation();
        Operator { matrix: m.matrix.adjoint(), arity: 1 }
    }

    /// Rank-1 projector onto the basis vector with the given outcome.
    pub fn projector(self, outcome: u8) -> Operator {
        let vec = self.eigenvector(outcome);
        let m = &vec * vec.adjoint();
        Operator { matrix: m, arity: 1 }
    }

    /// The basis vector for an outcome (0 is `|0>`, `|+>` or `|+i>`).
    pub fn eigenvector(self, outcome: u8) -> nalgebra::DVector<Complex64> {
        let h = 0.5f64.sqrt();
        let (a, b) = match (self, outcome) {
            (Basis::Z, 0) => (C_ONE, C_ZERO),
            (Basis::Z, _) => (C_ZERO, C_ONE),
            (Basis::X, 0) => (Complex64::new(h, 0.0), Complex64::new(h, 0.0)),
            (Basis::X, _) => (Complex64::new(h, 0.0), Complex64::new(-h, 0.0)),
            (Basis::Y, 0) => (Complex64::new(h, 0.0), Complex64::new(0.0, h)),
            (Basis::Y, _) => (Complex64::new(h, 0.0), Complex64::new(0.0, -h)),
        };
        nalgebra::DVector::from_vec(vec![a, b])
    }

    /// The Pauli observable measured in this basis.
    pub fn pauli(self) -> PauliLabel {
        match self {
            Basis::Z => PauliLabel::Z,
            Basis::X => PauliLabel::X,
            Basis::Y => PauliLabel::Y,
        }
    }
}

impl Operator {
    pub fn from_matrix(matrix: DMatrix<Complex64>) -> Result<Self> {
        let arity = matrix.nrows().trailing_zeros() as usize;
        if matrix.nrows() != matrix.ncols() || matrix.nrows() != 1 << arity {
            return Err(CoreError::DimensionMismatch { expected: 1 << arity, got: matrix.nrows() });
        }
        Ok(Self { matrix, arity })
    }

    /// Row-major construction of a `2^arity` square operator.
    pub fn from_rows(arity: usize, entries: &[Complex64]) -> Self {
        let dim = 1 << arity;
        assert_eq!(entries.len(), dim * dim);
        Self { matrix: DMatrix::from_row_slice(dim, dim, entries), arity }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Operator {
        Operator { matrix: self.matrix.adjoint(), arity: self.arity }
    }

    /// `U U^dagger = I` within the given tolerance.
    pub fn is_unitary(&self, tol: f64) -> bool {
        let prod = &self.matrix * self.matrix.adjoint();
        let eye = DMatrix::identity(self.dim(), self.dim());
        (prod - eye).camax() < tol
    }

    /// Matrix product `self * other`.
    pub fn compose(&self, other: &Operator) -> Result<Operator> {
        if self.dim() != other.dim() {
            return Err(CoreError::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(Operator { matrix: &self.matrix * &other.matrix, arity: self.arity })
    }

    pub fn kronecker(&self, other: &Operator) -> Operator {
        Operator {
            matrix: self.matrix.kronecker(&other.matrix),
            arity: self.arity + other.arity,
        }
    }

    pub fn scale(&self, factor: Complex64) -> Operator {
        Operator { matrix: &self.matrix * factor, arity: self.arity }
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        if self.dim() != other.dim() {
            return Err(CoreError::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(Operator { matrix: &self.matrix + &other.matrix, arity: self.arity })
    }

    /// Expand to the full register matrix, acting on `targets` (labels, in
    /// the operator's own qubit order) and as identity elsewhere.
    pub fn embed(&self, register: &[u8], targets: &[u8]) -> Result<DMatrix<Complex64>> {
        if targets.len() != self.arity {
            return Err(CoreError::ArityMismatch { arity: self.arity, targets: targets.len() });
        }
        for (k, t) in targets.iter().enumerate() {
            if targets[..k].contains(t) {
                return Err(CoreError::DuplicateTargets(targets.to_vec()));
            }
        }
        let n = register.len();
        let mut target_bits = Vec::with_capacity(targets.len());
        for t in targets {
            let bit = register
                .iter()
                .position(|l| l == t)
                .ok_or(CoreError::UnknownQubit(*t))?;
            target_bits.push(n - 1 - bit); // shift amount of this label
        }
        let k = self.arity;
        let dim = 1usize << n;
        let mut full = DMatrix::from_element(dim, dim, C_ZERO);
        for row in 0..dim {
            // Local row index of the operator block this full row belongs to.
            let mut local_row = 0usize;
            for (pos, &shift) in target_bits.iter().enumerate() {
                local_row |= ((row >> shift) & 1) << (k - 1 - pos);
            }
            let rest = {
                let mut r = row;
                for &shift in &target_bits {
                    r &= !(1usize << shift);
                }
                r
            };
            for local_col in 0..1usize << k {
                let mut col = rest;
                for (pos, &shift) in target_bits.iter().enumerate() {
                    col |= ((local_col >> (k - 1 - pos)) & 1) << shift;
                }
                full[(row, col)] = self.matrix[(local_row, local_col)];
            }
        }
        Ok(full)
    }
}

/// Constructors for the operators used by the protocol and the chips.
pub mod ops {
    use super::*;

    pub fn identity(arity: usize) -> Operator {
        let dim = 1 << arity;
        Operator { matrix: DMatrix::identity(dim, dim), arity }
    }

    pub fn pauli_x() -> Operator {
        Operator::from_rows(1, &[C_ZERO, C_ONE, C_ONE, C_ZERO])
    }

    pub fn pauli_y() -> Operator {
        Operator::from_rows(
            1,
            &[C_ZERO, Complex64::new(0.0, -1.0), Complex64::new(0.0, 1.0), C_ZERO],
        )
    }

    pub fn pauli_z() -> Operator {
        Operator::from_rows(1, &[C_ONE, C_ZERO, C_ZERO, -C_ONE])
    }

    pub fn hadamard() -> Operator {
        let h = Complex64::new(0.5f64.sqrt(), 0.0);
        Operator::from_rows(1, &[h, h, h, -h])
    }

    /// CNOT with the first operator qubit as control.
    pub fn cnot() -> Operator {
        Operator::from_rows(
            2,
            &[
                C_ONE, C_ZERO, C_ZERO, C_ZERO, //
                C_ZERO, C_ONE, C_ZERO, C_ZERO, //
                C_ZERO, C_ZERO, C_ZERO, C_ONE, //
                C_ZERO, C_ZERO, C_ONE, C_ZERO,
            ],
        )
    }

    /// Z rotation `diag(1, e^{i phi})`.
    pub fn phase(phi: f64) -> Operator {
        Operator::from_rows(1, &[C_ONE, C_ZERO, C_ZERO, Complex64::from_polar(1.0, phi)])
    }

    /// Phase on the first mode: `diag(e^{i phi}, 1)`. This is where the
    /// chip's thermal phase shifters sit inside an interferometer.
    pub fn phase_on_first(phi: f64) -> Operator {
        Operator::from_rows(1, &[Complex64::from_polar(1.0, phi), C_ZERO, C_ZERO, C_ONE])
    }

    /// Y rotation by `theta` (mixing angle `theta/2`).
    pub fn rotation_y(theta: f64) -> Operator {
        let (s, c) = (theta / 2.0).sin_cos();
        Operator::from_rows(
            1,
            &[
                Complex64::new(c, 0.0),
                Complex64::new(-s, 0.0),
                Complex64::new(s, 0.0),
                Complex64::new(c, 0.0),
            ],
        )
    }

    /// ZYZ Euler-angle unitary `Rz(alpha) Ry(beta) Rz(gamma)`.
    pub fn euler(angles: [f64; 3]) -> Operator {
        phase(angles[0])
            .compose(&rotation_y(angles[1]))
            .unwrap()
            .compose(&phase(angles[2]))
            .unwrap()
    }

    /// The sixteen two-qubit Pauli products in (II, IX, IY, IZ, XI, ...)
    /// order, normalized as `sigma_a (x) sigma_b / 2` so the set is
    /// orthonormal under the Hilbert-Schmidt inner product.
    pub fn normalized_pauli_basis() -> Vec<Operator> {
        let singles = [identity(1), pauli_x(), pauli_y(), pauli_z()];
        let mut basis = Vec::with_capacity(16);
        for a in &singles {
            for b in &singles {
                basis.push(a.kronecker(b).scale(Complex64::new(0.5, 0.0)));
            }
        }
        basis
    }

    /// Haar-like random unitary via QR of a complex Gaussian matrix.
    pub fn random_unitary(dim: usize, rng: &mut RngStream) -> Operator {
        let g = DMatrix::from_fn(dim, dim, |_, _| {
            Complex64::new(rng.normal(1.0), rng.normal(1.0))
        });
        let qr = g.qr();
        let r = qr.r();
        let mut q = qr.q();
        // Fix the column phases so the distribution is Haar.
        for c in 0..dim {
            let d = r[(c, c)];
            let phase = if d.norm() > 0.0 { d / d.norm() } else { C_ONE };
            for rph in 0..dim {
                q[(rph, c)] *= phase.conj();
            }
        }
        Operator::from_matrix(q).unwrap()
    }

    /// Random pure state on `n` qubits with labels `1..=n`.
    pub fn random_state(n: usize, rng: &mut RngStream) -> PureState {
        let dim = 1 << n;
        let amps = nalgebra::DVector::from_fn(dim, |_, _| {
            Complex64::new(rng.normal(1.0), rng.normal(1.0))
        });
        let norm = amps.norm();
        PureState::new(amps / Complex64::new(norm, 0.0)).unwrap()
    }

    /// Random single-qubit state with an explicit label.
    pub fn random_qubit(label: u8, rng: &mut RngStream) -> PureState {
        let a = Complex64::new(rng.normal(1.0), rng.normal(1.0));
        let b = Complex64::new(rng.normal(1.0), rng.normal(1.0));
        let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
        PureState::qubit(label, a / norm, b / norm).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::TOL_ALGEBRA;

    #[test]
    fn standard_gates_are_unitary() {
        for op in [
            ops::identity(1),
            ops::pauli_x(),
            ops::pauli_y(),
            ops::pauli_z(),
            ops::hadamard(),
            ops::cnot(),
            ops::phase(0.7),
            ops::rotation_y(1.3),
            ops::euler([0.1, 2.2, -0.8]),
        ] {
            assert!(op.is_unitary(TOL_ALGEBRA));
        }
    }

    #[test]
    fn random_unitaries_are_unitary() {
        let mut rng = RngStream::new(5, 0);
        for _ in 0..50 {
            assert!(ops::random_unitary(4, &mut rng).is_unitary(1e-10));
        }
    }

    #[test]
    fn embed_matches_kronecker_for_adjacent_targets() {
        let op = ops::cnot();
        let full = op.embed(&[1, 2, 3], &[1, 2]).unwrap();
        let expect = op.matrix().kronecker(ops::identity(1).matrix());
        assert!((full - expect).camax() < 1e-15);
    }

    #[test]
    fn embed_handles_reversed_target_order() {
        // CNOT with control on the lower bit: embed on (2, 1) of a 2-qubit
        // register and compare against the explicitly permuted matrix.
        let full = ops::cnot().embed(&[1, 2], &[2, 1]).unwrap();
        let mut expect = DMatrix::from_element(4, 4, C_ZERO);
        // control = qubit 2 (low bit), target = qubit 1 (high bit)
        for idx in 0..4usize {
            let control = idx & 1;
            let target = (idx >> 1) & 1;
            let out = if control == 1 { (target ^ 1) << 1 | control } else { idx };
            expect[(out, idx)] = C_ONE;
        }
        assert!((full - expect).camax() < 1e-15);
    }

    #[test]
    fn embed_rejects_duplicate_targets() {
        assert!(matches!(
            ops::cnot().embed(&[1, 2], &[1, 1]),
            Err(CoreError::DuplicateTargets(_))
        ));
    }

    #[test]
    fn projectors_resolve_identity() {
        for basis in [Basis::Z, Basis::X, Basis::Y] {
            let sum = basis.projector(0).add(&basis.projector(1)).unwrap();
            assert!((sum.matrix() - ops::identity(1).matrix()).camax() < TOL_ALGEBRA);
        }
    }

    #[test]
    fn basis_rotations_roundtrip() {
        for basis in [Basis::X, Basis::Y] {
            let round = basis.from_z_rotation().compose(&basis.to_z_rotation()).unwrap();
            assert!((round.matrix() - ops::identity(1).matrix()).camax() < TOL_ALGEBRA);
        }
    }
}
