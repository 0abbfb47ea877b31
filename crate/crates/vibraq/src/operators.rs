//! Pauli-word operator algebra and linear-combination-of-unitaries (LCU)
//! decompositions.
//!
//! A Hermitian operator is held as a positively weighted sum of signed Pauli
//! words,
//!
//!   H = Σ_l  w_l · s_l · P_l,    w_l > 0,  s_l ∈ {+1, −1},
//!
//! with the sign folded into the word so all LCU weights stay strictly
//! positive. Dense realizations use the convention that qubit 0 is the most
//! significant bit of the basis index.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on qubit counts for dense realizations (2^10 amplitudes per
/// row keeps a dense complex matrix under ~17 MB).
pub const DEFAULT_DENSE_CAP: usize = 10;

/// Single-qubit Pauli operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    /// The 2×2 dense matrix of this operator.
    pub fn matrix(self) -> DMatrix<Complex64> {
        let o = Complex64::new(0.0, 0.0);
        let l = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match self {
            Pauli::I => DMatrix::from_row_slice(2, 2, &[l, o, o, l]),
            Pauli::X => DMatrix::from_row_slice(2, 2, &[o, l, l, o]),
            Pauli::Y => DMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
            Pauli::Z => DMatrix::from_row_slice(2, 2, &[l, o, o, -l]),
        }
    }

    fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    fn to_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Sign folded into a Pauli word so LCU weights stay positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// A signed tensor product of single-qubit Paulis.
///
/// The dense realization is unitary and Hermitian; the sign is part of the
/// unitary, not of the weight multiplying it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliWord {
    letters: Vec<Pauli>,
    sign: Sign,
}

impl PauliWord {
    pub fn new(letters: Vec<Pauli>, sign: Sign) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::PauliParse(String::new()));
        }
        Ok(Self { letters, sign })
    }

    /// All-identity word on `n` qubits.
    pub fn identity(n: usize, sign: Sign) -> Self {
        Self {
            letters: vec![Pauli::I; n],
            sign,
        }
    }

    pub fn qubit_count(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn with_sign(&self, sign: Sign) -> Self {
        Self {
            letters: self.letters.clone(),
            sign,
        }
    }

    pub fn negated(&self) -> Self {
        self.with_sign(self.sign.flipped())
    }

    /// Basis action `P |k⟩ = phase(k) |imagened(k)⟩` for basis index `k`.
    ///
    /// Qubit 0 is the most significant bit of `k`.
    pub fn basis_action(&self, k: usize) -> (usize, Complex64) {
        let n = self.letters.len();
        let mut image = k;
        let mut phase = Complex64::new(self.sign.as_f64(), 0.0);
        for (q, letter) in self.letters.iter().enumerate() {
            let bit_pos = n - 1 - q;
            let bit = (k >> bit_pos) & 1;
            match letter {
                Pauli::I => {}
                Pauli::X => image ^= 1 << bit_pos,
                Pauli::Y => {
                    image ^= 1 << bit_pos;
                    // Y|0> = i|1>, Y|1> = -i|0>
                    phase *= if bit == 0 {
                        Complex64::new(0.0, 1.0)
                    } else {
                        Complex64::new(0.0, -1.0)
                    };
                }
                Pauli::Z => {
                    if bit == 1 {
                        phase = -phase;
                    }
                }
            }
        }
        (image, phase)
    }

    /// Dense 2^n × 2^n realization (sign included).
    pub fn dense(&self) -> DMatrix<Complex64> {
        let dim = 1usize << self.letters.len();
        let mut m = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            let (image, phase) = self.basis_action(k);
            m[(image, k)] = phase;
        }
        m
    }
}

impl FromStr for PauliWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (sign, body) = match s.strip_prefix('-') {
            Some(rest) => (Sign::Minus, rest),
            None => (Sign::Plus, s.strip_prefix('+').unwrap_or(s)),
        };
        if body.is_empty() {
            return Err(Error::PauliParse(s.to_string()));
        }
        let letters = body
            .chars()
            .map(Pauli::from_char)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::PauliParse(s.to_string()))?;
        Ok(Self { letters, sign })
    }
}

impl fmt::Display for PauliWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.sign == Sign::Minus {
            write!(f, "-")?;
        }
        for letter in &self.letters {
            write!(f, "{}", letter.to_char())?;
        }
        Ok(())
    }
}

/// One weighted term of an LCU decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcuTerm {
    pub weight: f64,
    pub word: PauliWord,
}

/// A Hermitian operator as a positively weighted sum of signed Pauli words.
///
/// An empty term list represents the zero operator on `qubit_count` qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcuOperator {
    terms: Vec<LcuTerm>,
    qubit_count: usize,
}

impl LcuOperator {
    /// Build from `(weight, word)` pairs. Weights must be strictly positive
    /// and all words must act on `qubit_count` qubits. Term order is
    /// preserved; sums over terms are sequential in that order.
    pub fn new(qubit_count: usize, terms: Vec<LcuTerm>) -> Result<Self> {
        if qubit_count == 0 {
            return Err(Error::DimensionMismatch(
                "operator needs at least one qubit".into(),
            ));
        }
        for t in &terms {
            if !(t.weight > 0.0) || !t.weight.is_finite() {
                return Err(Error::InvalidPrecision(format!(
                    "LCU weight {} must be strictly positive and finite",
                    t.weight
                )));
            }
            if t.word.qubit_count() != qubit_count {
                return Err(Error::DimensionMismatch(format!(
                    "word `{}` acts on {} qubits, operator declares {}",
                    t.word,
                    t.word.qubit_count(),
                    qubit_count
                )));
            }
        }
        Ok(Self { terms, qubit_count })
    }

    /// The zero operator.
    pub fn zero(qubit_count: usize) -> Self {
        Self {
            terms: Vec::new(),
            qubit_count,
        }
    }

    /// Convenience constructor from `(weight, "±XYZ…")` string pairs.
    pub fn parse_terms(qubit_count: usize, terms: &[(f64, &str)]) -> Result<Self> {
        let parsed = terms
            .iter()
            .map(|(w, s)| {
                Ok(LcuTerm {
                    weight: *w,
                    word: s.parse()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(qubit_count, parsed)
    }

    pub fn qubit_count(&self) -> usize {
        self.qubit_count
    }

    pub fn terms(&self) -> &[LcuTerm] {
        &self.terms
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sum of the LCU weights, |w| = Σ_l w_l, evaluated sequentially in
    /// stored term order.
    pub fn weight(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }

    /// Dense realization Σ_l w_l s_l P_l under the default qubit cap.
    pub fn to_dense(&self) -> Result<DMatrix<Complex64>> {
        self.to_dense_capped(DEFAULT_DENSE_CAP)
    }

    /// Dense realization with an explicit qubit cap.
    pub fn to_dense_capped(&self, cap: usize) -> Result<DMatrix<Complex64>> {
        if self.qubit_count > cap {
            return Err(Error::CapExceeded {
                qubits: self.qubit_count,
                cap,
            });
        }
        let dim = 1usize << self.qubit_count;
        let mut m = DMatrix::zeros(dim, dim);
        for t in &self.terms {
            for k in 0..dim {
                let (image, phase) = t.word.basis_action(k);
                m[(image, k)] += phase * t.weight;
            }
        }
        Ok(m)
    }

    /// The LCU of `e0·I − H` for this operator `H`: an identity word of
    /// weight `|e0|` (sign of `e0` folded into the word) followed by every
    /// term of `H` with its sign flipped.
    pub fn shifted_from(&self, e0: f64) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() + 1);
        if e0 != 0.0 {
            let sign = if e0 > 0.0 { Sign::Plus } else { Sign::Minus };
            terms.push(LcuTerm {
                weight: e0.abs(),
                word: PauliWord::identity(self.qubit_count, sign),
            });
        }
        for t in &self.terms {
            terms.push(LcuTerm {
                weight: t.weight,
                word: t.word.negated(),
            });
        }
        Self {
            terms,
            qubit_count: self.qubit_count,
        }
    }

    /// Pauli decomposition of a dense Hermitian matrix. Coefficients with
    /// magnitude at most `drop_tol` are dropped; negative coefficients fold
    /// their sign into the word.
    pub fn from_dense_hermitian(
        m: &DMatrix<Complex64>,
        qubit_count: usize,
        drop_tol: f64,
    ) -> Result<Self> {
        let dim = 1usize << qubit_count;
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, expected {}x{}",
                m.nrows(),
                m.ncols(),
                dim,
                dim
            )));
        }
        let mut terms = Vec::new();
        for code in 0..4usize.pow(qubit_count as u32) {
            let mut letters = Vec::with_capacity(qubit_count);
            let mut c = code;
            for _ in 0..qubit_count {
                letters.push(match c % 4 {
                    0 => Pauli::I,
                    1 => Pauli::X,
                    2 => Pauli::Y,
                    _ => Pauli::Z,
                });
                c /= 4;
            }
            let word = PauliWord {
                letters,
                sign: Sign::Plus,
            };
            // tr(P M) = Σ_k phase(k) · M[k, image(k)]
            let mut tr = Complex64::new(0.0, 0.0);
            for k in 0..dim {
                let (image, phase) = word.basis_action(k);
                tr += phase * m[(k, image)];
            }
            let coeff = tr.re / dim as f64;
            if coeff.abs() > drop_tol {
                let (weight, sign) = if coeff >= 0.0 {
                    (coeff, Sign::Plus)
                } else {
                    (-coeff, Sign::Minus)
                };
                terms.push(LcuTerm {
                    weight,
                    word: word.with_sign(sign),
                });
            }
        }
        Self::new(qubit_count, terms)
    }
}

/// Shorthand for the free function form used throughout the crate.
pub fn lcu_weight(op: &LcuOperator) -> f64 {
    op.weight()
}

/// LCU of `e0·I − h0`.
pub fn shifted_hamiltonian(h0: &LcuOperator, e0: f64) -> LcuOperator {
    h0.shifted_from(e0)
}

/// A full dense eigendecomposition of a Hermitian operator.
///
/// Eigenvalues are sorted ascending and eigenvectors are the matching
/// orthonormal columns, so index 0 is the ground level.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<Complex64>,
    pub ground_index: usize,
}

impl EigenSystem {
    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[self.ground_index]
    }

    /// Column view of the `i`-th eigenvector.
    pub fn eigenvector(&self, i: usize) -> nalgebra::DVectorView<'_, Complex64> {
        self.eigenvectors.column(i)
    }

    /// Spread between the extreme eigenvalues.
    pub fn spectral_range(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1] - self.eigenvalues[0]
    }

    /// Index of the eigenvalue closest to `energy`.
    pub fn nearest_level(&self, energy: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, e) in self.eigenvalues.iter().enumerate() {
            let d = (e - energy).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Check that `v` does not couple degenerate levels of the decomposed
/// Hamiltonian: for every pair `j ≠ k` with `|E_j − E_k|` at most the
/// degeneracy tolerance, `|⟨E_j|V|E_k⟩|` must be at most `tol`.
///
/// The degeneracy tolerance defaults to 1e-9 times the spectral range.
pub fn validate_perturbation(v: &LcuOperator, eig: &EigenSystem, tol: f64) -> Result<bool> {
    let dim = eig.dimension();
    if 1usize << v.qubit_count() != dim {
        return Err(Error::DimensionMismatch(format!(
            "perturbation acts on {} qubits but eigensystem has dimension {}",
            v.qubit_count(),
            dim
        )));
    }
    let deg_tol = 1e-9 * eig.spectral_range().max(f64::EPSILON);
    let v_dense = v.to_dense_capped(v.qubit_count())?;
    let in_basis = eig.eigenvectors.adjoint() * &v_dense * &eig.eigenvectors;
    for j in 0..dim {
        for k in (j + 1)..dim {
            if (eig.eigenvalues[j] - eig.eigenvalues[k]).abs() <= deg_tol
                && in_basis[(j, k)].norm() > tol
            {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Max elementwise deviation of a matrix from its own adjoint.
pub fn hermiticity_defect(m: &DMatrix<Complex64>) -> f64 {
    let d = m - m.adjoint();
    d.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["X", "-XZY", "IZ", "-I", "YYXZ"] {
            let w: PauliWord = s.parse().unwrap();
            assert_eq!(w.to_string(), s);
        }
        assert!("".parse::<PauliWord>().is_err());
        assert!("XQ".parse::<PauliWord>().is_err());
        assert!("-".parse::<PauliWord>().is_err());
        let plus: PauliWord = "+XZ".parse().unwrap();
        assert_eq!(plus.to_string(), "XZ");
    }

    #[test]
    fn weight_sums_terms() {
        let op = LcuOperator::parse_terms(1, &[(1.0, "Z")]).unwrap();
        assert_eq!(op.weight(), 1.0);
        let op = LcuOperator::parse_terms(1, &[(0.5, "X"), (0.5, "Z")]).unwrap();
        assert_eq!(op.weight(), 1.0);
        let op =
            LcuOperator::parse_terms(2, &[(0.3, "XZ"), (0.2, "YI"), (0.1, "ZZ")]).unwrap();
        assert_abs_diff_eq!(op.weight(), 0.6, epsilon = 1e-15);
    }

    #[test]
    fn dense_single_paulis() {
        let x = LcuOperator::parse_terms(1, &[(1.0, "X")]).unwrap();
        let m = x.to_dense().unwrap();
        assert_eq!(m[(0, 1)], c(1.0, 0.0));
        assert_eq!(m[(1, 0)], c(1.0, 0.0));
        assert_eq!(m[(0, 0)], c(0.0, 0.0));

        let zx = LcuOperator::parse_terms(1, &[(1.0, "Z"), (1.0, "X")]).unwrap();
        let m = zx.to_dense().unwrap();
        let expect = [[1.0, 1.0], [1.0, -1.0]];
        for r in 0..2 {
            for col in 0..2 {
                assert_abs_diff_eq!(m[(r, col)].re, expect[r][col], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn dense_tensor_structure() {
        let zz = LcuOperator::parse_terms(2, &[(0.5, "ZZ")]).unwrap();
        let m = zz.to_dense().unwrap();
        for (i, want) in [0.5, -0.5, -0.5, 0.5].iter().enumerate() {
            assert_abs_diff_eq!(m[(i, i)].re, *want, epsilon = 1e-15);
        }
    }

    #[test]
    fn dense_y_is_hermitian_and_unitary() {
        let y = LcuOperator::parse_terms(2, &[(1.0, "YX")]).unwrap();
        let m = y.to_dense().unwrap();
        assert!(hermiticity_defect(&m) < 1e-12);
        let prod = &m * &m;
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(prod[(i, j)].re, want, epsilon = 1e-12);
                assert_abs_diff_eq!(prod[(i, j)].im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn negative_sign_folds_into_word() {
        let op = LcuOperator::parse_terms(1, &[(1.0, "-X")]).unwrap();
        let m = op.to_dense().unwrap();
        assert_eq!(m[(0, 1)], c(-1.0, 0.0));
        assert!(op.terms()[0].weight > 0.0);
    }

    #[test]
    fn shift_two_level() {
        // h0 = Z, e0 = -1: dense diag(-2, 0)
        let h0 = LcuOperator::parse_terms(1, &[(1.0, "Z")]).unwrap();
        let shifted = shifted_hamiltonian(&h0, -1.0);
        let m = shifted.to_dense().unwrap();
        assert_abs_diff_eq!(m[(0, 0)].re, -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m[(1, 1)].re, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn shift_zero_operator() {
        let zero = LcuOperator::zero(1);
        let shifted = shifted_hamiltonian(&zero, 0.0);
        assert!(shifted.is_zero());
        let m = shifted.to_dense().unwrap();
        assert_eq!(m.iter().map(|c| c.norm()).fold(0.0, f64::max), 0.0);
    }

    #[test]
    fn shift_arithmetic() {
        // h0 = 0.5 X, e0 = 0.25: [[0.25, -0.5], [-0.5, 0.25]]
        let h0 = LcuOperator::parse_terms(1, &[(0.5, "X")]).unwrap();
        let m = shifted_hamiltonian(&h0, 0.25).to_dense().unwrap();
        assert_abs_diff_eq!(m[(0, 0)].re, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(m[(0, 1)].re, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m[(1, 0)].re, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m[(1, 1)].re, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn cap_is_enforced() {
        let op = LcuOperator::parse_terms(1, &[(1.0, "Z")]).unwrap();
        assert!(matches!(
            op.to_dense_capped(0),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn rejects_nonpositive_weights() {
        assert!(LcuOperator::parse_terms(1, &[(0.0, "Z")]).is_err());
        assert!(LcuOperator::parse_terms(1, &[(-0.5, "Z")]).is_err());
    }

    #[test]
    fn pauli_decomposition_round_trip() {
        let op = LcuOperator::parse_terms(
            2,
            &[(0.7, "XZ"), (0.2, "-YY"), (0.45, "IZ"), (0.1, "ZI")],
        )
        .unwrap();
        let dense = op.to_dense().unwrap();
        let back = LcuOperator::from_dense_hermitian(&dense, 2, 1e-12).unwrap();
        let dense2 = back.to_dense().unwrap();
        let diff = (&dense - &dense2).iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "round trip defect {diff}");
        assert_abs_diff_eq!(back.weight(), op.weight(), epsilon = 1e-12);
    }
}
