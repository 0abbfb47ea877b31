//! Block encodings: prepare/select LCU circuits, a polynomial pseudo-inverse
//! of the shifted Hamiltonian, and products of encodings.
//!
//! A `(α, a, ε)` block encoding is a unitary on `a` ancillas plus the system
//! whose top-left block (ancillas in |0⟩) approximates the target divided by
//! the subnormalization α: ‖α·block − target‖ ≤ α·ε. Ancilla qubits come
//! first (most significant), so the block is literally the top-left corner
//! of the dense circuit matrix.
//!
//! The pseudo-inverse is realized by applying the reciprocal polynomial
//! directly to the eigenvalues of the block-encoded operator — exact at desk
//! scale — while the query ledger charges the number of shifted-Hamiltonian
//! oracle applications the polynomial degree implies (all suppressed
//! constants set to one).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::{LcuOperator, Pauli};
use crate::simulator::{Circuit, Gate, StateVector};

/// Ledger labels for the oracles the pipeline counts.
pub mod oracle_labels {
    pub const PREPARE_V: &str = "prepare_v";
    pub const SELECT_V: &str = "select_v";
    pub const PREPARE_H_PRIME: &str = "prepare_h_prime";
    pub const SELECT_H_PRIME: &str = "select_h_prime";
    pub const GROUND_PREP: &str = "ground_prep";
    pub const CONTROLLED_UK: &str = "controlled_u_k";
    pub const WALK: &str = "walk";
}

/// Named non-negative query counters, merged additively through encoding
/// compositions and scaled by repetition counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct QueryLedger {
    counts: BTreeMap<String, u64>,
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, label: &str, count: u64) {
        if count > 0 {
            *self.counts.entry(label.to_string()).or_insert(0) += count;
        }
    }

    pub fn merge(&mut self, other: &QueryLedger) {
        for (label, count) in &other.counts {
            *self.counts.entry(label.clone()).or_insert(0) += count;
        }
    }

    /// Every counter multiplied by `factor` (costs compose multiplicatively
    /// through repeated invocations).
    pub fn scaled(&self, factor: u64) -> Self {
        let counts = self
            .counts
            .iter()
            .map(|(label, count)| (label.clone(), count * factor))
            .collect();
        Self { counts }
    }

    pub fn get(&self, label: &str) -> u64 {
        self.counts.get(label).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// A unitary realization together with its subnormalization, ancilla count
/// and operator-norm error bound (relative to the subnormalization).
///
/// `alpha == 0` encodes the zero operator; the realization is then an
/// identity placeholder.
#[derive(Debug, Clone)]
pub struct BlockEncoding {
    pub alpha: f64,
    pub ancilla_count: usize,
    pub epsilon: f64,
    pub system_qubits: usize,
    pub realization: Circuit,
    pub ledger: QueryLedger,
}

impl BlockEncoding {
    /// Encoding of the zero operator.
    pub fn zero(system_qubits: usize) -> Self {
        Self {
            alpha: 0.0,
            ancilla_count: 0,
            epsilon: 0.0,
            system_qubits,
            realization: Circuit::new(system_qubits),
            ledger: QueryLedger::new(),
        }
    }

    pub fn total_qubits(&self) -> usize {
        self.ancilla_count + self.system_qubits
    }

    /// Extract the top-left block ⟨0|^⊗a U |0⟩^⊗a by applying the
    /// realization to each system basis state.
    pub fn block(&self) -> Result<DMatrix<Complex64>> {
        let n = self.system_qubits;
        let total = self.total_qubits();
        let dim = 1usize << n;
        let mut out = DMatrix::zeros(dim, dim);
        for col in 0..dim {
            let mut amps = vec![Complex64::new(0.0, 0.0); 1 << total];
            // Ancillas are the most significant qubits, so |0_anc⟩|col⟩ is
            // index `col`.
            amps[col] = Complex64::new(1.0, 0.0);
            let state = StateVector::from_amplitudes(amps, total)?;
            let image = self.realization.apply(&state)?;
            for row in 0..dim {
                out[(row, col)] = image.amplitudes()[row];
            }
        }
        Ok(out)
    }

    /// `alpha` times the extracted block: the encoded operator itself.
    pub fn encoded_operator(&self) -> Result<DMatrix<Complex64>> {
        Ok(self.block()? * Complex64::new(self.alpha, 0.0))
    }

    /// Error-free encoding of a dense Hermitian matrix by unitary dilation
    /// (one ancilla). Requires `alpha` at least the spectral norm.
    pub fn exact_of_hermitian(m: &DMatrix<Complex64>, alpha: f64) -> Result<Self> {
        let n_qubits = (m.nrows() as f64).log2().round() as usize;
        if m.nrows() != 1 << n_qubits || !m.is_square() {
            return Err(Error::DimensionMismatch(
                "matrix dimension is not a power of two".into(),
            ));
        }
        let eig = m.clone().symmetric_eigen();
        let norm = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if alpha == 0.0 {
            if norm > 1e-12 {
                return Err(Error::InvalidBounds(
                    "zero subnormalization for a nonzero operator".into(),
                ));
            }
            return Ok(Self::zero(n_qubits));
        }
        if norm > alpha * (1.0 + 1e-12) {
            return Err(Error::InvalidBounds(format!(
                "subnormalization {alpha} below operator norm {norm}"
            )));
        }
        let scaled: Vec<f64> = eig
            .eigenvalues
            .iter()
            .map(|v| (v / alpha).clamp(-1.0, 1.0))
            .collect();
        let circuit = dilation_circuit(&eig.eigenvectors, &scaled, n_qubits)?;
        Ok(Self {
            alpha,
            ancilla_count: 1,
            epsilon: 0.0,
            system_qubits: n_qubits,
            realization: circuit,
            ledger: QueryLedger::new(),
        })
    }
}

/// Unitary dilation of a Hermitian contraction given its eigenbasis and
/// scaled eigenvalues: [[M, √(1−M²)], [√(1−M²), −M]] on one extra qubit.
fn dilation_circuit(
    eigenvectors: &DMatrix<Complex64>,
    scaled_eigenvalues: &[f64],
    system_qubits: usize,
) -> Result<Circuit> {
    let dim = 1usize << system_qubits;
    let diag_m = DVector::from_iterator(
        dim,
        scaled_eigenvalues.iter().map(|&v| Complex64::new(v, 0.0)),
    );
    let diag_s = DVector::from_iterator(
        dim,
        scaled_eigenvalues
            .iter()
            .map(|&v| Complex64::new((1.0 - v * v).max(0.0).sqrt(), 0.0)),
    );
    let m = eigenvectors * DMatrix::from_diagonal(&diag_m) * eigenvectors.adjoint();
    let s = eigenvectors * DMatrix::from_diagonal(&diag_s) * eigenvectors.adjoint();
    let mut big = DMatrix::zeros(2 * dim, 2 * dim);
    for i in 0..dim {
        for j in 0..dim {
            big[(i, j)] = m[(i, j)];
            big[(i, j + dim)] = s[(i, j)];
            big[(i + dim, j)] = s[(i, j)];
            big[(i + dim, j + dim)] = -m[(i, j)];
        }
    }
    let mut circuit = Circuit::new(system_qubits + 1);
    circuit.push_unitary((0..system_qubits + 1).collect(), big)?;
    Ok(circuit)
}

fn ceil_log2(l: usize) -> usize {
    if l <= 1 {
        0
    } else {
        (usize::BITS - (l - 1).leading_zeros()) as usize
    }
}

/// Circuit loading the normalized weight amplitudes: |0⟩^⊗a ↦
/// Σ_l √(w_l/|w|)|l⟩ on a = ⌈log₂ L⌉ ancillas, padding amplitudes zero.
///
/// Realized as a real Householder reflection sending |0…0⟩ to the target
/// amplitude vector, so all amplitudes stay real and non-negative.
pub fn prepare_state(op: &LcuOperator) -> Result<Circuit> {
    if op.is_zero() {
        return Err(Error::PreconditionViolated(
            "prepare needs a nonempty operator".into(),
        ));
    }
    let l = op.term_count();
    let a = ceil_log2(l);
    if a == 0 {
        return Ok(Circuit::new(0));
    }
    let dim = 1usize << a;
    let total = op.weight();
    let mut target = vec![0.0f64; dim];
    for (i, term) in op.terms().iter().enumerate() {
        target[i] = (term.weight / total).sqrt();
    }
    let matrix = householder_from_zero(&target);
    let mut c = Circuit::new(a);
    c.push_unitary((0..a).collect(), matrix)?;
    Ok(c)
}

/// Real orthogonal matrix with first column `target` (unit vector).
fn householder_from_zero(target: &[f64]) -> DMatrix<Complex64> {
    let dim = target.len();
    let mut w: Vec<f64> = target.to_vec();
    w[0] -= 1.0; // w = target − e0
    let norm_sq: f64 = w.iter().map(|x| x * x).sum();
    let mut m = DMatrix::<Complex64>::identity(dim, dim);
    if norm_sq < 1e-30 {
        return m;
    }
    for i in 0..dim {
        for j in 0..dim {
            let val = -2.0 * w[i] * w[j] / norm_sq;
            m[(i, j)] += Complex64::new(val, 0.0);
        }
    }
    m
}

/// Select circuit |l⟩|ψ⟩ ↦ |l⟩ U_l|ψ⟩ with the word's sign inside U_l and
/// the identity on padding indices.
pub fn select(op: &LcuOperator) -> Result<Circuit> {
    if op.is_zero() {
        return Err(Error::PreconditionViolated(
            "select needs a nonempty operator".into(),
        ));
    }
    let a = ceil_log2(op.term_count());
    let n = op.qubit_count();
    let total = a + n;
    let mut circuit = Circuit::new(total);
    for (l, term) in op.terms().iter().enumerate() {
        let body = word_gates(term.word.letters(), term.word.sign().as_f64(), a, total)?;
        if a == 0 {
            circuit.extend(&body)?;
        } else {
            let pattern: Vec<bool> = (0..a).map(|q| (l >> (a - 1 - q)) & 1 == 1).collect();
            circuit.push(Gate::Controlled {
                controls: (0..a).collect(),
                pattern,
                body: Box::new(body),
            })?;
        }
    }
    Ok(circuit)
}

/// Gates realizing a signed Pauli word on the system qubits at `offset`.
fn word_gates(letters: &[Pauli], sign: f64, offset: usize, total: usize) -> Result<Circuit> {
    let mut c = Circuit::new(total);
    let mut sign_pending = sign < 0.0;
    for (q, letter) in letters.iter().enumerate() {
        if *letter == Pauli::I {
            continue;
        }
        let mut m = letter.matrix();
        if sign_pending {
            m *= Complex64::new(-1.0, 0.0);
            sign_pending = false;
        }
        c.push_unitary(vec![offset + q], m)?;
    }
    if sign_pending {
        // All-identity word with a folded minus sign.
        let m = Pauli::I.matrix() * Complex64::new(-1.0, 0.0);
        c.push_unitary(vec![offset], m)?;
    }
    Ok(c)
}

/// `(|w|, ⌈log₂L⌉, 0)` encoding of an LCU operator via prepare–select–unprepare.
/// Charges two prepare queries and one select query under the given labels.
pub fn encode_lcu_labeled(
    op: &LcuOperator,
    prepare_label: &str,
    select_label: &str,
) -> Result<BlockEncoding> {
    if op.is_zero() {
        return Ok(BlockEncoding::zero(op.qubit_count()));
    }
    let a = ceil_log2(op.term_count());
    let n = op.qubit_count();
    let total = a + n;
    let prep = prepare_state(op)?;
    let sel = select(op)?;
    let mut circuit = Circuit::new(total);
    if a > 0 {
        let prep_matrix = prep.to_matrix()?;
        circuit.push_unitary((0..a).collect(), prep_matrix.clone())?;
        circuit.extend(&sel)?;
        circuit.push_unitary((0..a).collect(), prep_matrix.adjoint())?;
    } else {
        circuit.extend(&sel)?;
    }
    let mut ledger = QueryLedger::new();
    ledger.add(prepare_label, 2);
    ledger.add(select_label, 1);
    Ok(BlockEncoding {
        alpha: op.weight(),
        ancilla_count: a,
        epsilon: 0.0,
        system_qubits: n,
        realization: circuit,
        ledger,
    })
}

/// `encode_lcu` with the perturbation-oracle labels.
pub fn encode_lcu(op: &LcuOperator) -> Result<BlockEncoding> {
    encode_lcu_labeled(op, oracle_labels::PREPARE_V, oracle_labels::SELECT_V)
}

// ---------------------------------------------------------------------------
// Reciprocal polynomial
// ---------------------------------------------------------------------------

/// Odd Chebyshev approximation of 1/x on [−1, −1/κ] ∪ [1/κ, 1]:
///
///   g(x) = 4 Σ_{n=0}^{N} (−1)^n [S_n / 2^{2B}] T_{2n+1}(x),
///   S_n  = Σ_{i=n+1}^{B} C(2B, B+i),
///
/// with B = ⌈κ² ln²(2κ/ε)⌉ and N = ⌈√(B ln(8B/ε))⌉. The binomial tails are
/// evaluated in log space, so B is limited by time, not overflow.
#[derive(Debug, Clone)]
pub struct InversePolynomial {
    /// c_n multiplying T_{2n+1}; signs alternate.
    coefficients: Vec<f64>,
    n_bound: usize,
    b_param: usize,
    kappa: f64,
    epsilon: f64,
}

/// Largest B the tail computation will attempt (O(B) time).
const MAX_B_PARAM: usize = 200_000_000;

/// Compute the reciprocal-polynomial coefficients for a condition bound and
/// target accuracy.
pub fn inverse_coefficients(kappa: f64, epsilon: f64) -> Result<InversePolynomial> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidPrecision(format!(
            "epsilon {epsilon} must lie in (0, 1)"
        )));
    }
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::PreconditionViolated(format!(
            "condition bound kappa {kappa} must be at least 1"
        )));
    }
    let log_term = (2.0 * kappa / epsilon).ln();
    let b_real = kappa * kappa * log_term * log_term;
    let b = (b_real.ceil() as usize).max(1);
    if b > MAX_B_PARAM {
        return Err(Error::PreconditionViolated(format!(
            "polynomial parameter B = {b} too large; relax kappa or epsilon"
        )));
    }
    let n_bound = ((b as f64) * (8.0 * b as f64 / epsilon).ln())
        .sqrt()
        .ceil() as usize;
    let n_eff = n_bound.min(b - 1).max(0);

    // Binomial tails S_n / 2^{2B} = P(X > B+n) for X ~ Binomial(2B, 1/2),
    // accumulated from the far tail for accuracy.
    let two_b = 2 * b;
    let ln2 = std::f64::consts::LN_2;
    let log_total = libm::lgamma((two_b + 1) as f64);
    let mut tails = vec![0.0f64; n_eff + 1];
    let mut running = 0.0f64;
    for i in (1..=b).rev() {
        let log_p = log_total
            - libm::lgamma((b + i + 1) as f64)
            - libm::lgamma((b - i + 1) as f64)
            - two_b as f64 * ln2;
        running += log_p.exp();
        if i - 1 <= n_eff {
            tails[i - 1] = running;
        }
    }

    let coefficients: Vec<f64> = (0..=n_eff)
        .map(|n| {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            4.0 * sign * tails[n]
        })
        .collect();

    Ok(InversePolynomial {
        coefficients,
        n_bound,
        b_param: b,
        kappa,
        epsilon,
    })
}

impl InversePolynomial {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// N, the truncation bound.
    pub fn n_bound(&self) -> usize {
        self.n_bound
    }

    /// B, the smoothing parameter (integer ceiling).
    pub fn b_param(&self) -> usize {
        self.b_param
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Polynomial degree 2·n_eff + 1.
    pub fn degree(&self) -> usize {
        2 * (self.coefficients.len() - 1) + 1
    }

    /// Signed coefficient sum Σ c_n = g(1).
    pub fn coefficient_sum(&self) -> f64 {
        self.coefficients.iter().sum()
    }

    /// L1 coefficient mass Σ |c_n|.
    pub fn coefficient_l1(&self) -> f64 {
        self.coefficients.iter().map(|c| c.abs()).sum()
    }

    /// Evaluate g(x) by Clenshaw recurrence over the odd Chebyshev series.
    pub fn evaluate(&self, x: f64) -> f64 {
        // Full series a_k T_k with zeros at even k.
        let degree = self.degree();
        let mut b1 = 0.0f64;
        let mut b2 = 0.0f64;
        for k in (0..=degree).rev() {
            let a_k = if k % 2 == 1 {
                self.coefficients[(k - 1) / 2]
            } else {
                0.0
            };
            let b0 = a_k + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        // T_0 coefficient is zero, so g = (b0 − b2 term collapses to) b1·x… ;
        // standard Clenshaw tail: g = b1_final − x·b2_final adjusted below.
        // With the loop structure above (k down to 0), g(x) = b1 - x*b2 is the
        // value for series Σ a_k T_k when a_0 halved; since a_0 = 0 both
        // conventions coincide:
        b1 - x * b2
    }

    /// Max deviation |g(x) − 1/x| over an even grid on [1/κ, 1].
    pub fn max_grid_deviation(&self, points: usize) -> f64 {
        let lo = 1.0 / self.kappa;
        let hi = 1.0;
        let mut worst = 0.0f64;
        for i in 0..points {
            let x = if points == 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (points - 1) as f64
            };
            worst = worst.max((self.evaluate(x) - 1.0 / x).abs());
        }
        worst
    }
}

// ---------------------------------------------------------------------------
// Pseudo-inverse encoding
// ---------------------------------------------------------------------------

/// Block-encode the Moore–Penrose inverse of a shifted Hamiltonian given as
/// an LCU with weight |a|.
///
/// Nonzero eigenvalues of H'/|a| must lie in [−1, −1/κ) ∪ (1/κ, 1]; the
/// (shifted reference) zero eigenvalue is mapped to zero by the odd
/// polynomial, matching the pseudo-inverse convention. The realization is a
/// one-ancilla dilation of g(H'/|a|)/c with c the realized norm, giving a
/// subnormalization c/|a| ∈ Θ(κ/|a|).
pub fn pseudo_inverse(
    h_prime: &LcuOperator,
    kappa: f64,
    epsilon: f64,
) -> Result<BlockEncoding> {
    let n = h_prime.qubit_count();
    let weight = h_prime.weight();
    if h_prime.is_zero() || weight == 0.0 {
        return Ok(BlockEncoding::zero(n));
    }
    let dense = h_prime.to_dense()?;
    let normalized = &dense / Complex64::new(weight, 0.0);
    let eig = normalized.symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let kernel_cutoff = crate::oracle::KERNEL_RELATIVE_TOL * max_abs;
    let window_tol = 1e-9;
    for &lambda in eig.eigenvalues.iter() {
        let mag = lambda.abs();
        if mag <= kernel_cutoff {
            continue;
        }
        if mag <= 1.0 / kappa - window_tol || mag > 1.0 + window_tol {
            return Err(Error::SpectrumViolation { value: lambda, kappa });
        }
    }

    let poly = inverse_coefficients(kappa, epsilon)?;
    let g_values: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&lambda| {
            if lambda.abs() <= kernel_cutoff {
                0.0
            } else {
                poly.evaluate(lambda.clamp(-1.0, 1.0))
            }
        })
        .collect();
    let c = g_values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if c == 0.0 {
        return Ok(BlockEncoding::zero(n));
    }

    // Realized operator-norm error against the exact reciprocal, relative to
    // the subnormalization.
    let mut abs_err = 0.0f64;
    for (&lambda, &g) in eig.eigenvalues.iter().zip(&g_values) {
        if lambda.abs() > kernel_cutoff {
            abs_err = abs_err.max((g - 1.0 / lambda).abs() / weight);
        }
    }
    let alpha = c / weight;
    let scaled: Vec<f64> = g_values.iter().map(|g| g / c).collect();
    let circuit = dilation_circuit(&eig.eigenvectors, &scaled, n)?;

    let mut ledger = QueryLedger::new();
    let applications = (kappa * (1.0 / epsilon).ln()).ceil().max(1.0) as u64;
    ledger.add(oracle_labels::SELECT_H_PRIME, applications);
    ledger.add(oracle_labels::PREPARE_H_PRIME, 2 * applications);

    Ok(BlockEncoding {
        alpha,
        ancilla_count: 1,
        epsilon: abs_err / alpha,
        system_qubits: n,
        realization: circuit,
        ledger,
    })
}

// ---------------------------------------------------------------------------
// Products of encodings
// ---------------------------------------------------------------------------

/// Product of block encodings applied left-to-right in circuit order, so the
/// encoded operator is `factors[last] ⋯ factors[0]` as a matrix product.
///
/// Subnormalizations multiply, ancilla counts add, and absolute errors
/// compose as Σ_i (Π_{j≠i} α_j) · α_i ε_i.
pub fn product(factors: &[&BlockEncoding]) -> Result<BlockEncoding> {
    if factors.is_empty() {
        return Err(Error::DimensionMismatch("empty encoding product".into()));
    }
    let n = factors[0].system_qubits;
    for f in factors {
        if f.system_qubits != n {
            return Err(Error::DimensionMismatch(
                "system qubit counts differ across product factors".into(),
            ));
        }
    }
    let mut ledger = QueryLedger::new();
    for f in factors {
        ledger.merge(&f.ledger);
    }
    let alpha: f64 = factors.iter().map(|f| f.alpha).product();
    let total_anc: usize = factors.iter().map(|f| f.ancilla_count).sum();
    if alpha == 0.0 {
        let mut zero = BlockEncoding::zero(n);
        zero.ledger = ledger;
        return Ok(zero);
    }
    let total = total_anc + n;
    let mut circuit = Circuit::new(total);
    let mut offset = 0usize;
    for f in factors {
        let a_i = f.ancilla_count;
        let block_start = offset;
        let embedded = f.realization.remapped(&move |q| {
            if q < a_i {
                block_start + q
            } else {
                total_anc + (q - a_i)
            }
        });
        for g in embedded.gates() {
            circuit.push(g.clone())?;
        }
        offset += a_i;
    }

    // ε composition on absolute errors, reported relative to the product α.
    let mut abs_total = 0.0;
    for (i, f) in factors.iter().enumerate() {
        let others: f64 = factors
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, g)| g.alpha)
            .product();
        abs_total += others * f.alpha * f.epsilon;
    }

    Ok(BlockEncoding {
        alpha,
        ancilla_count: total_anc,
        epsilon: abs_total / alpha,
        system_qubits: n,
        realization: circuit,
        ledger,
    })
}

/// Three-factor sandwich encoding of V·A·V (V applied first and last).
/// Ancillas total 2a_V + a_A and the subnormalization is α_V²·α_A.
pub fn product_vav(v_enc: &BlockEncoding, a_enc: &BlockEncoding) -> Result<BlockEncoding> {
    product(&[v_enc, a_enc, v_enc])
}

/// Block-encode K = V (e0·I − H₀)⁺ V from the LCU pieces.
///
/// The perturbation must not couple degenerate levels of H₀ and the scaled
/// shifted spectrum must respect the κ window. The inner polynomial accuracy
/// is tightened to ε/(κ|b|²) so the composed encoding meets ε after the
/// error is multiplied through the sandwich.
pub fn encode_k(
    v: &LcuOperator,
    h0: &LcuOperator,
    e0: f64,
    kappa: f64,
    epsilon: f64,
) -> Result<BlockEncoding> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidPrecision(format!(
            "epsilon {epsilon} must lie in (0, 1)"
        )));
    }
    if v.is_zero() {
        return Ok(BlockEncoding::zero(v.qubit_count()));
    }
    if v.qubit_count() != h0.qubit_count() {
        return Err(Error::DimensionMismatch(
            "perturbation and Hamiltonian qubit counts differ".into(),
        ));
    }
    let eig = crate::oracle::diagonalize(h0)?;
    let elem_tol = 1e-9 * v.weight().max(1.0);
    if let Some((gap, magnitude)) = worst_degenerate_coupling(v, &eig, elem_tol)? {
        return Err(Error::PerturbationInvalid { magnitude, gap });
    }

    let b_norm = v.weight();
    let h_prime = h0.shifted_from(e0);
    let inner_eps = (epsilon / (kappa * b_norm * b_norm)).clamp(1e-15, epsilon);
    let v_enc = encode_lcu(v)?;
    let pinv_enc = pseudo_inverse(&h_prime, kappa, inner_eps)?;
    product_vav(&v_enc, &pinv_enc)
}

/// Worst coupling between degenerate levels, if any exceeds `tol`.
fn worst_degenerate_coupling(
    v: &LcuOperator,
    eig: &crate::operators::EigenSystem,
    tol: f64,
) -> Result<Option<(f64, f64)>> {
    let dim = eig.dimension();
    let v_dense = v.to_dense()?;
    if v_dense.nrows() != dim {
        return Err(Error::DimensionMismatch(
            "perturbation and eigensystem dimensions differ".into(),
        ));
    }
    let deg_tol = crate::oracle::degeneracy_tolerance(eig);
    let in_basis = eig.eigenvectors.adjoint() * &v_dense * &eig.eigenvectors;
    let mut worst: Option<(f64, f64)> = None;
    for j in 0..dim {
        for k in (j + 1)..dim {
            let gap = (eig.eigenvalues[j] - eig.eigenvalues[k]).abs();
            if gap <= deg_tol {
                let magnitude = in_basis[(j, k)].norm();
                if magnitude > tol && worst.map_or(true, |(_, m)| magnitude > m) {
                    worst = Some((gap, magnitude));
                }
            }
        }
    }
    Ok(worst)
}
