//! Dense statevector engine.
//!
//! Circuits are ordered lists of gates; a gate is either a dense unitary on
//! a qubit subset, a pattern-controlled sub-circuit, or an inverse quantum
//! Fourier transform on a register. Qubit 0 is the most significant bit of
//! the amplitude index, so the state |q0 q1 … q_{n−1}⟩ sits at index
//! q0·2^{n−1} + … + q_{n−1}.
//!
//! Probabilities are always computed exactly from amplitudes; sampling is
//! left to callers that explicitly want it.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Cap on statevector sizes (2^24 complex amplitudes ≈ 268 MB).
pub const MAX_STATE_QUBITS: usize = 24;

/// A pure state on `qubit_count` qubits.
#[derive(Debug, Clone)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
    qubit_count: usize,
    /// False only for transient post-projection values before renormalization.
    normalized: bool,
}

impl StateVector {
    /// |0…0⟩ on `n` qubits.
    pub fn zero_state(n: usize) -> Result<Self> {
        if n > MAX_STATE_QUBITS {
            return Err(Error::CapExceeded {
                qubits: n,
                cap: MAX_STATE_QUBITS,
            });
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            amplitudes,
            qubit_count: n,
            normalized: true,
        })
    }

    /// Build from raw amplitudes; the caller asserts normalization.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>, n: usize) -> Result<Self> {
        if amplitudes.len() != 1 << n {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for {} qubits",
                amplitudes.len(),
                n
            )));
        }
        Ok(Self {
            amplitudes,
            qubit_count: n,
            normalized: true,
        })
    }

    pub fn qubit_count(&self) -> usize {
        self.qubit_count
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_normalized_flag(&self) -> bool {
        self.normalized
    }

    /// Inner product ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Probability of reading `bits` on `qubits` (exact, no sampling).
    pub fn outcome_probability(&self, qubits: &[usize], bits: &[bool]) -> Result<f64> {
        let (mask, want) = self.pattern_masks(qubits, bits)?;
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == want)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Project onto the given bit pattern without renormalizing. Returns the
    /// outcome probability and the (unnormalized-flagged) projected state.
    pub fn project(&self, qubits: &[usize], bits: &[bool]) -> Result<(f64, StateVector)> {
        let (mask, want) = self.pattern_masks(qubits, bits)?;
        let mut amplitudes = self.amplitudes.clone();
        let mut prob = 0.0;
        for (i, a) in amplitudes.iter_mut().enumerate() {
            if i & mask == want {
                prob += a.norm_sqr();
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        Ok((
            prob,
            StateVector {
                amplitudes,
                qubit_count: self.qubit_count,
                normalized: false,
            },
        ))
    }

    /// Exact marginal distribution of a qubit register, indexed by the
    /// register value read with `qubits[0]` as the most significant bit.
    pub fn register_distribution(&self, qubits: &[usize]) -> Result<Vec<f64>> {
        self.check_qubits(qubits)?;
        let k = qubits.len();
        let mut dist = vec![0.0; 1 << k];
        let n = self.qubit_count;
        for (i, a) in self.amplitudes.iter().enumerate() {
            let mut y = 0usize;
            for (j, &q) in qubits.iter().enumerate() {
                let bit = (i >> (n - 1 - q)) & 1;
                y |= bit << (k - 1 - j);
            }
            dist[y] += a.norm_sqr();
        }
        Ok(dist)
    }

    fn check_qubits(&self, qubits: &[usize]) -> Result<()> {
        let mut seen = vec![false; self.qubit_count];
        for &q in qubits {
            if q >= self.qubit_count || seen[q] {
                return Err(Error::DimensionMismatch(format!(
                    "bad qubit index {q} on {}-qubit state",
                    self.qubit_count
                )));
            }
            seen[q] = true;
        }
        Ok(())
    }

    fn pattern_masks(&self, qubits: &[usize], bits: &[bool]) -> Result<(usize, usize)> {
        if qubits.len() != bits.len() {
            return Err(Error::DimensionMismatch(
                "qubit and bit pattern lengths differ".into(),
            ));
        }
        self.check_qubits(qubits)?;
        let n = self.qubit_count;
        let mut mask = 0usize;
        let mut want = 0usize;
        for (&q, &b) in qubits.iter().zip(bits) {
            let m = 1usize << (n - 1 - q);
            mask |= m;
            if b {
                want |= m;
            }
        }
        Ok((mask, want))
    }
}

/// A circuit gate.
#[derive(Debug, Clone)]
pub enum Gate {
    /// Dense unitary on an ordered qubit subset; `qubits[0]` is the most
    /// significant bit of the matrix row/column index.
    Unitary {
        qubits: Vec<usize>,
        matrix: DMatrix<Complex64>,
    },
    /// Sub-circuit applied when every control qubit reads its pattern bit.
    Controlled {
        controls: Vec<usize>,
        pattern: Vec<bool>,
        body: Box<Circuit>,
    },
    /// Inverse QFT on a register (`qubits[0]` most significant).
    InverseQft { qubits: Vec<usize> },
}

impl Gate {
    fn qubits_touched(&self) -> Vec<usize> {
        match self {
            Gate::Unitary { qubits, .. } => qubits.clone(),
            Gate::Controlled { controls, body, .. } => {
                let mut v = controls.clone();
                for g in &body.gates {
                    v.extend(g.qubits_touched());
                }
                v
            }
            Gate::InverseQft { qubits } => qubits.clone(),
        }
    }

    fn remapped(&self, map: &dyn Fn(usize) -> usize) -> Gate {
        match self {
            Gate::Unitary { qubits, matrix } => Gate::Unitary {
                qubits: qubits.iter().map(|&q| map(q)).collect(),
                matrix: matrix.clone(),
            },
            Gate::Controlled {
                controls,
                pattern,
                body,
            } => Gate::Controlled {
                controls: controls.iter().map(|&q| map(q)).collect(),
                pattern: pattern.clone(),
                body: Box::new(body.remapped(map)),
            },
            Gate::InverseQft { qubits } => Gate::InverseQft {
                qubits: qubits.iter().map(|&q| map(q)).collect(),
            },
        }
    }
}

/// An ordered gate list on a fixed qubit count.
#[derive(Debug, Clone, Default)]
pub struct Circuit {
    qubit_count: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(qubit_count: usize) -> Self {
        Self {
            qubit_count,
            gates: Vec::new(),
        }
    }

    pub fn qubit_count(&self) -> usize {
        self.qubit_count
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        self.validate_gate(&gate)?;
        self.gates.push(gate);
        Ok(())
    }

    /// Append a dense unitary on the given qubits.
    pub fn push_unitary(&mut self, qubits: Vec<usize>, matrix: DMatrix<Complex64>) -> Result<()> {
        let dim = 1usize << qubits.len();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "gate matrix {}x{} does not fit {} qubits",
                matrix.nrows(),
                matrix.ncols(),
                qubits.len()
            )));
        }
        self.push(Gate::Unitary { qubits, matrix })
    }

    /// Append every gate of `other` (same qubit count).
    pub fn extend(&mut self, other: &Circuit) -> Result<()> {
        if other.qubit_count != self.qubit_count {
            return Err(Error::DimensionMismatch(format!(
                "cannot splice {}-qubit circuit into {}-qubit circuit",
                other.qubit_count, self.qubit_count
            )));
        }
        for g in &other.gates {
            self.gates.push(g.clone());
        }
        Ok(())
    }

    fn validate_gate(&self, gate: &Gate) -> Result<()> {
        let touched = gate.qubits_touched();
        let mut seen = vec![false; self.qubit_count];
        for q in touched {
            if q >= self.qubit_count {
                return Err(Error::DimensionMismatch(format!(
                    "gate touches qubit {q} on a {}-qubit circuit",
                    self.qubit_count
                )));
            }
            seen[q] = true;
        }
        if let Gate::Controlled {
            controls, pattern, ..
        } = gate
        {
            if controls.len() != pattern.len() {
                return Err(Error::DimensionMismatch(
                    "control pattern length differs from control count".into(),
                ));
            }
            // Controls must be distinct and disjoint from the body.
            let mut body_qubits = vec![false; self.qubit_count];
            if let Gate::Controlled { body, .. } = gate {
                for g in &body.gates {
                    for q in g.qubits_touched() {
                        body_qubits[q] = true;
                    }
                }
            }
            let mut cseen = vec![false; self.qubit_count];
            for &ctl in controls {
                if cseen[ctl] || body_qubits[ctl] {
                    return Err(Error::DimensionMismatch(format!(
                        "control qubit {ctl} reused inside the controlled body"
                    )));
                }
                cseen[ctl] = true;
            }
        }
        Ok(())
    }

    /// The same circuit with every qubit index sent through `map`. The new
    /// qubit count must cover all mapped indices.
    pub fn remapped(&self, map: &dyn Fn(usize) -> usize) -> Circuit {
        let gates = self.gates.iter().map(|g| g.remapped(map)).collect();
        Circuit {
            qubit_count: self.qubit_count,
            gates,
        }
    }

    /// Embed into a circuit on `total` qubits with all indices shifted up by
    /// `offset`.
    pub fn embedded(&self, total: usize, offset: usize) -> Result<Circuit> {
        if offset + self.qubit_count > total {
            return Err(Error::DimensionMismatch(format!(
                "cannot embed {} qubits at offset {offset} into {total}",
                self.qubit_count
            )));
        }
        let mut out = self.remapped(&|q| q + offset);
        out.qubit_count = total;
        Ok(out)
    }

    /// Apply the circuit to a state, returning a fresh state.
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if state.qubit_count() != self.qubit_count {
            return Err(Error::DimensionMismatch(format!(
                "{}-qubit circuit applied to {}-qubit state",
                self.qubit_count,
                state.qubit_count()
            )));
        }
        let mut amps = state.amplitudes.clone();
        for gate in &self.gates {
            apply_gate(&mut amps, self.qubit_count, gate, &[])?;
        }
        Ok(StateVector {
            amplitudes: amps,
            qubit_count: self.qubit_count,
            normalized: state.normalized,
        })
    }

    /// Apply to |0…0⟩.
    pub fn apply_to_zero(&self) -> Result<StateVector> {
        self.apply(&StateVector::zero_state(self.qubit_count)?)
    }

    /// Dense matrix of the composed circuit, built column by column.
    pub fn to_matrix(&self) -> Result<DMatrix<Complex64>> {
        let dim = 1usize << self.qubit_count;
        let mut m = DMatrix::zeros(dim, dim);
        for col in 0..dim {
            let mut amps = vec![Complex64::new(0.0, 0.0); dim];
            amps[col] = Complex64::new(1.0, 0.0);
            for gate in &self.gates {
                apply_gate(&mut amps, self.qubit_count, gate, &[])?;
            }
            for row in 0..dim {
                m[(row, col)] = amps[row];
            }
        }
        Ok(m)
    }
}

/// `apply(circuit, state)` as a free function.
pub fn apply(circuit: &Circuit, state: &StateVector) -> Result<StateVector> {
    circuit.apply(state)
}

/// Wrap `circuit` behind `control_count` fresh control qubits (prepended,
/// all-ones pattern): the body acts iff every control reads |1⟩.
pub fn controlled(circuit: &Circuit, control_count: usize) -> Result<Circuit> {
    if control_count == 0 {
        return Err(Error::DimensionMismatch(
            "controlled() needs at least one control qubit".into(),
        ));
    }
    let total = control_count + circuit.qubit_count();
    let mut body = circuit.remapped(&|q| q + control_count);
    body.qubit_count = total;
    let mut out = Circuit::new(total);
    out.push(Gate::Controlled {
        controls: (0..control_count).collect(),
        pattern: vec![true; control_count],
        body: Box::new(body),
    })?;
    Ok(out)
}

/// Dense matrix of the standard QFT on `k` qubits: entries ω^{jl}/√(2^k)
/// with ω = e^{2πi/2^k}.
pub fn qft_matrix(k: usize) -> DMatrix<Complex64> {
    let dim = 1usize << k;
    let scale = 1.0 / (dim as f64).sqrt();
    DMatrix::from_fn(dim, dim, |j, l| {
        let angle = 2.0 * std::f64::consts::PI * (j as f64) * (l as f64) / dim as f64;
        Complex64::from_polar(scale, angle)
    })
}

/// Circuit holding an inverse QFT on a `k`-qubit register.
pub fn inverse_qft(k: usize) -> Result<Circuit> {
    if k == 0 {
        return Err(Error::DimensionMismatch(
            "inverse QFT needs at least one qubit".into(),
        ));
    }
    let mut c = Circuit::new(k);
    c.push(Gate::InverseQft {
        qubits: (0..k).collect(),
    })?;
    Ok(c)
}

/// Probability of reading `bits` on `qubits` of `state`.
pub fn outcome_probability(state: &StateVector, qubits: &[usize], bits: &[bool]) -> Result<f64> {
    state.outcome_probability(qubits, bits)
}

fn apply_gate(
    amps: &mut [Complex64],
    n: usize,
    gate: &Gate,
    extra_controls: &[(usize, bool)],
) -> Result<()> {
    match gate {
        Gate::Unitary { qubits, matrix } => {
            apply_dense(amps, n, qubits, matrix, extra_controls)
        }
        Gate::Controlled {
            controls,
            pattern,
            body,
        } => {
            let mut merged = extra_controls.to_vec();
            merged.extend(controls.iter().copied().zip(pattern.iter().copied()));
            for g in &body.gates {
                apply_gate(amps, n, g, &merged)?;
            }
            Ok(())
        }
        Gate::InverseQft { qubits } => {
            let m = qft_matrix(qubits.len()).adjoint();
            apply_dense(amps, n, qubits, &m, extra_controls)
        }
    }
}

fn apply_dense(
    amps: &mut [Complex64],
    n: usize,
    qubits: &[usize],
    matrix: &DMatrix<Complex64>,
    controls: &[(usize, bool)],
) -> Result<()> {
    let k = qubits.len();
    let sub_dim = 1usize << k;
    if matrix.nrows() != sub_dim || matrix.ncols() != sub_dim {
        return Err(Error::DimensionMismatch(
            "gate matrix does not match its qubit subset".into(),
        ));
    }
    // Bit position (from the LSB of the index) of each gate qubit; qubits[0]
    // is the most significant bit of the sub-block index.
    let positions: Vec<usize> = qubits.iter().map(|&q| n - 1 - q).collect();
    let gate_mask: usize = positions.iter().map(|&p| 1usize << p).sum();
    let mut ctl_mask = 0usize;
    let mut ctl_want = 0usize;
    for &(q, b) in controls {
        let m = 1usize << (n - 1 - q);
        ctl_mask |= m;
        if b {
            ctl_want |= m;
        }
    }

    let dim = amps.len();
    let mut gathered = vec![Complex64::new(0.0, 0.0); sub_dim];
    for base in 0..dim {
        // Visit each sub-block once via its representative with gate bits 0.
        if base & gate_mask != 0 {
            continue;
        }
        if base & ctl_mask != ctl_want {
            continue;
        }
        for s in 0..sub_dim {
            let mut idx = base;
            for (j, &p) in positions.iter().enumerate() {
                if (s >> (k - 1 - j)) & 1 == 1 {
                    idx |= 1 << p;
                }
            }
            gathered[s] = amps[idx];
        }
        for (r, row) in matrix.row_iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for s in 0..sub_dim {
                acc += row[s] * gathered[s];
            }
            let mut idx = base;
            for (j, &p) in positions.iter().enumerate() {
                if (r >> (k - 1 - j)) & 1 == 1 {
                    idx |= 1 << p;
                }
            }
            amps[idx] = acc;
        }
    }
    Ok(())
}

/// Common 2×2 gates.
pub mod gates {
    use super::*;

    pub fn hadamard() -> DMatrix<Complex64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(s, 0.0),
                Complex64::new(s, 0.0),
                Complex64::new(s, 0.0),
                Complex64::new(-s, 0.0),
            ],
        )
    }

    pub fn pauli_x() -> DMatrix<Complex64> {
        crate::operators::Pauli::X.matrix()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_circuit_preserves_state() {
        let c = Circuit::new(2);
        let s = StateVector::zero_state(2).unwrap();
        let out = c.apply(&s).unwrap();
        assert_eq!(out.amplitudes()[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn x_flips_zero() {
        let mut c = Circuit::new(1);
        c.push_unitary(vec![0], gates::pauli_x()).unwrap();
        let out = c.apply_to_zero().unwrap();
        assert_abs_diff_eq!(out.amplitudes()[1].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn qubit_zero_is_most_significant() {
        // X on qubit 0 of a 2-qubit register must set index 2 (binary 10).
        let mut c = Circuit::new(2);
        c.push_unitary(vec![0], gates::pauli_x()).unwrap();
        let out = c.apply_to_zero().unwrap();
        assert_abs_diff_eq!(out.amplitudes()[2].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cnot_via_controlled() {
        let mut x = Circuit::new(1);
        x.push_unitary(vec![0], gates::pauli_x()).unwrap();
        let cnot = controlled(&x, 1).unwrap();

        // |10⟩ → |11⟩
        let mut prep = Circuit::new(2);
        prep.push_unitary(vec![0], gates::pauli_x()).unwrap();
        prep.extend(&cnot).unwrap();
        let out = prep.apply_to_zero().unwrap();
        assert_abs_diff_eq!(out.amplitudes()[3].re, 1.0, epsilon = 1e-14);

        // control off: |00⟩ unchanged
        let out = cnot.apply_to_zero().unwrap();
        assert_abs_diff_eq!(out.amplitudes()[0].re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn hadamard_probability_half() {
        let mut c = Circuit::new(1);
        c.push_unitary(vec![0], gates::hadamard()).unwrap();
        let out = c.apply_to_zero().unwrap();
        let p = out.outcome_probability(&[0], &[false]).unwrap();
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn inverse_qft_size_one_is_hadamard() {
        let c = inverse_qft(1).unwrap();
        let m = c.to_matrix().unwrap();
        let h = gates::hadamard();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(m[(i, j)].re, h[(i, j)].re, epsilon = 1e-12);
                assert_abs_diff_eq!(m[(i, j)].im, h[(i, j)].im, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn qft_times_inverse_is_identity() {
        let k = 3;
        let q = qft_matrix(k);
        let prod = &q * q.adjoint();
        for i in 0..8 {
            for j in 0..8 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(prod[(i, j)].re, want, epsilon = 1e-10);
                assert_abs_diff_eq!(prod[(i, j)].im, 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn inverse_qft_maps_uniform_to_zero() {
        let k = 2;
        let mut c = Circuit::new(k);
        for q in 0..k {
            c.push_unitary(vec![q], gates::hadamard()).unwrap();
        }
        c.extend(&inverse_qft(k).unwrap()).unwrap();
        let out = c.apply_to_zero().unwrap();
        assert_abs_diff_eq!(out.amplitudes()[0].norm(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut c = Circuit::new(3);
        for q in 0..3 {
            c.push_unitary(vec![q], gates::hadamard()).unwrap();
        }
        let out = c.apply_to_zero().unwrap();
        let mut total = 0.0;
        for pattern in 0..8usize {
            let bits: Vec<bool> = (0..3).map(|q| (pattern >> (2 - q)) & 1 == 1).collect();
            total += out.outcome_probability(&[0, 1, 2], &bits).unwrap();
        }
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn register_distribution_matches_outcomes() {
        let mut c = Circuit::new(2);
        c.push_unitary(vec![0], gates::hadamard()).unwrap();
        let out = c.apply_to_zero().unwrap();
        let dist = out.register_distribution(&[0]).unwrap();
        assert_abs_diff_eq!(dist[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(dist[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn projection_flags_unnormalized() {
        let mut c = Circuit::new(1);
        c.push_unitary(vec![0], gates::hadamard()).unwrap();
        let out = c.apply_to_zero().unwrap();
        let (p, projected) = out.project(&[0], &[false]).unwrap();
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-12);
        assert!(!projected.is_normalized_flag());
        assert_abs_diff_eq!(projected.norm(), (0.5f64).sqrt(), epsilon = 1e-12);
    }
}
