//! Exact classical reference computations.
//!
//! Everything the quantum pipeline claims is checked against this module:
//! dense eigendecomposition, the Moore–Penrose pseudo-inverse, the
//! second-order perturbation sum, curvature by central finite differences,
//! exact eigenstate expectations of K = V(e·I − H)⁺V, and an analytically
//! solvable clock-Hamiltonian instance generator.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operators::{EigenSystem, LcuOperator};

/// Relative eigenvalue threshold below which the pseudo-inverse treats a
/// level as kernel (matches the double-precision eigensolver noise floor).
pub const KERNEL_RELATIVE_TOL: f64 = 1e-10;

/// Full dense eigendecomposition of a Hermitian matrix, sorted ascending.
pub fn diagonalize_dense(m: &DMatrix<Complex64>) -> EigenSystem {
    let eig = m.clone().symmetric_eigen();
    let dim = m.nrows();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = DMatrix::zeros(dim, dim);
    for (col, &src) in order.iter().enumerate() {
        eigenvectors.set_column(col, &eig.eigenvectors.column(src));
    }
    EigenSystem {
        eigenvalues,
        eigenvectors,
        ground_index: 0,
    }
}

/// Diagonalize an LCU operator (no degeneracy check).
pub fn diagonalize(h0: &LcuOperator) -> Result<EigenSystem> {
    Ok(diagonalize_dense(&h0.to_dense()?))
}

/// Degeneracy tolerance used throughout: 1e-9 of the spectral range.
pub fn degeneracy_tolerance(eig: &EigenSystem) -> f64 {
    1e-9 * eig.spectral_range().max(f64::EPSILON)
}

/// Gap between `level` and its nearest neighbour, or an error when that gap
/// sits below the degeneracy tolerance.
pub fn check_level_isolation(eig: &EigenSystem, level: usize) -> Result<f64> {
    let tol = degeneracy_tolerance(eig);
    let mut gap = f64::INFINITY;
    if level > 0 {
        gap = gap.min(eig.eigenvalues[level] - eig.eigenvalues[level - 1]);
    }
    if level + 1 < eig.dimension() {
        gap = gap.min(eig.eigenvalues[level + 1] - eig.eigenvalues[level]);
    }
    if gap <= tol {
        return Err(Error::DegenerateLevel { gap, tol });
    }
    Ok(gap)
}

/// Dense eigendecomposition of `h0` with a non-degenerate ground level.
pub fn ground_state(h0: &LcuOperator) -> Result<EigenSystem> {
    let eig = diagonalize(h0)?;
    check_level_isolation(&eig, 0)?;
    Ok(eig)
}

/// Second-order perturbation sum at `level`:
///
///   2 Σ_{k≠level} |⟨E_k|V|E_level⟩|² / (E_level − E_k).
///
/// This is the curvature of the level's energy along the perturbation.
pub fn second_derivative_sum(v: &LcuOperator, eig: &EigenSystem, level: usize) -> Result<f64> {
    check_level_isolation(eig, level)?;
    let v_dense = v.to_dense()?;
    if v_dense.nrows() != eig.dimension() {
        return Err(Error::DimensionMismatch(
            "perturbation and eigensystem dimensions differ".into(),
        ));
    }
    let reference = eig.eigenvector(level);
    let image = &v_dense * reference;
    let e_ref = eig.eigenvalues[level];
    let mut sum = 0.0;
    for k in 0..eig.dimension() {
        if k == level {
            continue;
        }
        let overlap: Complex64 = eig.eigenvector(k).dotc(&image);
        sum += overlap.norm_sqr() / (e_ref - eig.eigenvalues[k]);
    }
    Ok(2.0 * sum)
}

/// Moore–Penrose pseudo-inverse of a Hermitian matrix: eigenvalues above the
/// kernel threshold are inverted, the rest map to zero.
pub fn moore_penrose(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = m.clone().symmetric_eigen();
    let max_abs = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let cutoff = KERNEL_RELATIVE_TOL * max_abs;
    let dim = m.nrows();
    let mut out = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let lambda = eig.eigenvalues[k];
        if lambda.abs() > cutoff {
            let col = eig.eigenvectors.column(k);
            let outer = col * col.adjoint();
            out += outer * Complex64::new(1.0 / lambda, 0.0);
        }
    }
    out
}

/// Exact expectation ⟨E_level| V (e·I − H₀)⁺ V |E_level⟩ via the dense
/// Moore–Penrose route. Carries no factor of two: the perturbation sum above
/// equals twice this value.
pub fn exact_k_expectation(
    h0: &LcuOperator,
    v: &LcuOperator,
    eig: &EigenSystem,
    level: usize,
) -> Result<f64> {
    check_level_isolation(eig, level)?;
    let h_dense = h0.to_dense()?;
    let v_dense = v.to_dense()?;
    if h_dense.nrows() != v_dense.nrows() {
        return Err(Error::DimensionMismatch(
            "hamiltonian and perturbation dimensions differ".into(),
        ));
    }
    let dim = h_dense.nrows();
    let e_ref = Complex64::new(eig.eigenvalues[level], 0.0);
    let shifted = DMatrix::identity(dim, dim) * e_ref - h_dense;
    let pinv = moore_penrose(&shifted);
    let k_dense = v_dense.adjoint() * pinv * v_dense;
    let reference = eig.eigenvector(level);
    let expectation = (reference.adjoint() * &k_dense * reference)[(0, 0)];
    Ok(expectation.re)
}

/// Dense K = V (e0·I − H₀)⁺ V for cross-checks against block encodings.
pub fn dense_k_operator(h0: &LcuOperator, v: &LcuOperator, e0: f64) -> Result<DMatrix<Complex64>> {
    let h_dense = h0.to_dense()?;
    let v_dense = v.to_dense()?;
    let dim = h_dense.nrows();
    let shifted = DMatrix::identity(dim, dim) * Complex64::new(e0, 0.0) - h_dense;
    let pinv = moore_penrose(&shifted);
    Ok(v_dense.adjoint() * pinv * v_dense)
}

/// Central finite difference of the level energy:
///
///   (E(h) − 2E(0) + E(−h)) / h²
///
/// computed from three dense diagonalizations; truncation error is O(h²).
pub fn finite_difference_d2(
    h0: &LcuOperator,
    v: &LcuOperator,
    h: f64,
    level: usize,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidPrecision(format!(
            "finite-difference step {h} must be positive"
        )));
    }
    let h_dense = h0.to_dense()?;
    let v_dense = v.to_dense()?;
    if h_dense.nrows() != v_dense.nrows() {
        return Err(Error::DimensionMismatch(
            "hamiltonian and perturbation dimensions differ".into(),
        ));
    }
    let level_energy = |delta: f64| -> Result<f64> {
        let perturbed = &h_dense + &v_dense * Complex64::new(delta, 0.0);
        let eig = diagonalize_dense(&perturbed);
        check_level_isolation(&eig, level)?;
        Ok(eig.eigenvalues[level])
    };
    let plus = level_energy(h)?;
    let zero = level_energy(0.0)?;
    let minus = level_energy(-h)?;
    Ok((plus - 2.0 * zero + minus) / (h * h))
}

/// Richardson-refined central difference: combines steps `h` and `h/2` to
/// cancel the leading O(h²) truncation term.
pub fn finite_difference_d2_refined(
    h0: &LcuOperator,
    v: &LcuOperator,
    h: f64,
    level: usize,
) -> Result<f64> {
    let coarse = finite_difference_d2(h0, v, h, level)?;
    let fine = finite_difference_d2(h0, v, h / 2.0, level)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Default finite-difference step: 1e-3 of the reference level's gap.
pub fn default_fd_step(eig: &EigenSystem, level: usize) -> Result<f64> {
    let gap = check_level_isolation(eig, level)?;
    Ok(1e-3 * gap)
}

// ---------------------------------------------------------------------------
// Clock-Hamiltonian test instances
// ---------------------------------------------------------------------------

/// A circuit-to-Hamiltonian instance: gates U_1…U_L on `system_qubits`
/// qubits plus a clock register of ⌈log₂(L+1)⌉ qubits.
///
/// The dense Hamiltonian uses clock ⊗ system ordering (clock qubits are the
/// most significant). Clock values above L are decoupled zero rows, so
/// padding adds null vectors and nothing else.
#[derive(Debug, Clone)]
pub struct FkInstance {
    system_qubits: usize,
    gates: Vec<DMatrix<Complex64>>,
}

impl FkInstance {
    /// Gates must be 2^n × 2^n unitaries, one per time step.
    pub fn new(system_qubits: usize, gates: Vec<DMatrix<Complex64>>) -> Result<Self> {
        let dim = 1usize << system_qubits;
        if gates.is_empty() {
            return Err(Error::DimensionMismatch(
                "instance needs at least one gate".into(),
            ));
        }
        for g in &gates {
            if g.nrows() != dim || g.ncols() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "gate is {}x{}, system dimension is {}",
                    g.nrows(),
                    g.ncols(),
                    dim
                )));
            }
        }
        Ok(Self {
            system_qubits,
            gates,
        })
    }

    /// All-identity gates: the spectrum is known in closed form.
    pub fn identity(steps: usize, system_qubits: usize) -> Result<Self> {
        let dim = 1usize << system_qubits;
        Self::new(system_qubits, vec![DMatrix::identity(dim, dim); steps])
    }

    pub fn steps(&self) -> usize {
        self.gates.len()
    }

    pub fn system_qubits(&self) -> usize {
        self.system_qubits
    }

    /// Clock register size ⌈log₂(L+1)⌉.
    pub fn clock_qubits(&self) -> usize {
        let slots = self.steps() + 1;
        (usize::BITS - (slots - 1).leading_zeros()) as usize
    }

    pub fn total_qubits(&self) -> usize {
        self.clock_qubits() + self.system_qubits
    }

    fn system_dim(&self) -> usize {
        1 << self.system_qubits
    }

    /// Dense clock Hamiltonian
    ///
    ///   H = −Σ_t (|t⟩⟨t−1| ⊗ U_t + |t−1⟩⟨t| ⊗ U_t†)
    ///       +Σ_t (|t⟩⟨t| + |t−1⟩⟨t−1|) ⊗ I.
    pub fn dense_hamiltonian(&self) -> Result<DMatrix<Complex64>> {
        let cap = crate::operators::DEFAULT_DENSE_CAP;
        if self.total_qubits() > cap {
            return Err(Error::CapExceeded {
                qubits: self.total_qubits(),
                cap,
            });
        }
        let sys = self.system_dim();
        let dim = (1 << self.clock_qubits()) * sys;
        let one = Complex64::new(1.0, 0.0);
        let mut h = DMatrix::<Complex64>::zeros(dim, dim);
        for (idx, gate) in self.gates.iter().enumerate() {
            let t = idx + 1;
            let row0 = t * sys;
            let col0 = (t - 1) * sys;
            for i in 0..sys {
                for j in 0..sys {
                    h[(row0 + i, col0 + j)] -= gate[(i, j)];
                    h[(col0 + i, row0 + j)] -= gate[(j, i)].conj();
                }
                h[(row0 + i, row0 + i)] += one;
                h[(col0 + i, col0 + i)] += one;
            }
        }
        Ok(h)
    }

    /// The k-th history state
    ///
    ///   (L+1)^{-1/2} Σ_j e^{2πijk/(L+1)} |j⟩ ⊗ U_j⋯U_1|0⟩
    ///
    /// as a padded dense vector.
    pub fn history_state(&self, k: usize) -> Result<DVector<Complex64>> {
        let sys = self.system_dim();
        let slots = self.steps() + 1;
        let dim = (1 << self.clock_qubits()) * sys;
        let mut prefix = DVector::<Complex64>::zeros(sys);
        prefix[0] = Complex64::new(1.0, 0.0);
        let scale = 1.0 / (slots as f64).sqrt();
        let mut out = DVector::<Complex64>::zeros(dim);
        for j in 0..slots {
            if j > 0 {
                prefix = &self.gates[j - 1] * prefix;
            }
            let phase =
                Complex64::from_polar(scale, 2.0 * std::f64::consts::PI * (j * k) as f64 / slots as f64);
            for s in 0..sys {
                out[j * sys + s] += phase * prefix[s];
            }
        }
        Ok(out)
    }
}

/// The clock Hamiltonian of an instance as a Pauli LCU.
pub fn feynman_kitaev(instance: &FkInstance) -> Result<LcuOperator> {
    let dense = instance.dense_hamiltonian()?;
    LcuOperator::from_dense_hermitian(&dense, instance.total_qubits(), 1e-12)
}

/// Clock-diagonal phase rotation Σ_j e^{2πij/(L+1)} |j⟩⟨j| ⊗ I, identity on
/// padded clock values. Its (L+1)-th power is the identity and it advances
/// the history-state index by one.
pub fn fk_phase_rotation(instance: &FkInstance) -> DMatrix<Complex64> {
    let sys = instance.system_dim();
    let slots = instance.steps() + 1;
    let clock_dim = 1 << instance.clock_qubits();
    let dim = clock_dim * sys;
    let mut out = DMatrix::<Complex64>::zeros(dim, dim);
    for j in 0..clock_dim {
        let phase = if j < slots {
            Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / slots as f64)
        } else {
            Complex64::new(1.0, 0.0)
        };
        for s in 0..sys {
            out[(j * sys + s, j * sys + s)] = phase;
        }
    }
    out
}

/// Closed-form connected-sector eigenvalues 2(1 − cos(πk/(L+1))), k = 0…L.
pub fn fk_connected_eigenvalues(steps: usize) -> Vec<f64> {
    let slots = (steps + 1) as f64;
    (0..=steps)
        .map(|k| 2.0 * (1.0 - (std::f64::consts::PI * k as f64 / slots).cos()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::hermiticity_defect;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ground_state_of_diagonal() {
        // H = (I - Z)/2 = diag(0, 1)
        let h0 = LcuOperator::parse_terms(1, &[(0.5, "I"), (0.5, "-Z")]).unwrap();
        let eig = ground_state(&h0).unwrap();
        assert_abs_diff_eq!(eig.eigenvalues[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.eigenvalues[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.eigenvector(0)[0].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ground_state_of_x() {
        let h0 = LcuOperator::parse_terms(1, &[(1.0, "X")]).unwrap();
        let eig = ground_state(&h0).unwrap();
        assert_abs_diff_eq!(eig.eigenvalues[0], -1.0, epsilon = 1e-12);
        let v0 = eig.eigenvector(0);
        // (1, -1)/√2 up to global phase
        assert_abs_diff_eq!((v0[0] + v0[1]).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_ground_is_reported() {
        let h0 = LcuOperator::parse_terms(2, &[(1.0, "ZZ")]).unwrap();
        assert!(matches!(
            ground_state(&h0),
            Err(Error::DegenerateLevel { .. })
        ));
    }

    #[test]
    fn two_level_curvature_is_minus_two() {
        // H0 = diag(0,1), V = X: sum formula gives 2·|1|²/(0−1) = −2.
        let h0 = LcuOperator::parse_terms(1, &[(0.5, "I"), (0.5, "-Z")]).unwrap();
        let v = LcuOperator::parse_terms(1, &[(1.0, "X")]).unwrap();
        let eig = ground_state(&h0).unwrap();
        let d2 = second_derivative_sum(&v, &eig, 0).unwrap();
        assert_abs_diff_eq!(d2, -2.0, epsilon = 1e-10);
        let k = exact_k_expectation(&h0, &v, &eig, 0).unwrap();
        assert_abs_diff_eq!(k, -1.0, epsilon = 1e-10);
    }

    #[test]
    fn commuting_perturbation_has_zero_curvature() {
        let h0 = LcuOperator::parse_terms(2, &[(0.5, "ZI"), (0.25, "IZ")]).unwrap();
        let v = LcuOperator::parse_terms(2, &[(0.7, "ZZ")]).unwrap();
        let eig = ground_state(&h0).unwrap();
        let d2 = second_derivative_sum(&v, &eig, 0).unwrap();
        assert_abs_diff_eq!(d2, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_perturbation_fd_is_zero() {
        let h0 = LcuOperator::parse_terms(1, &[(0.5, "Z")]).unwrap();
        let v = LcuOperator::zero(1);
        let d2 = finite_difference_d2(&h0, &v, 1e-3, 0).unwrap();
        assert_abs_diff_eq!(d2, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn fd_matches_closed_form_two_level() {
        let h0 = LcuOperator::parse_terms(1, &[(0.5, "I"), (0.5, "-Z")]).unwrap();
        let v = LcuOperator::parse_terms(1, &[(1.0, "X")]).unwrap();
        let d2 = finite_difference_d2(&h0, &v, 1e-3, 0).unwrap();
        assert_abs_diff_eq!(d2, -2.0, epsilon = 1e-4);
    }

    #[test]
    fn richardson_shrinks_error_by_factor_four() {
        let h0 =
            LcuOperator::parse_terms(2, &[(0.6, "ZI"), (0.3, "IZ"), (0.2, "XX")]).unwrap();
        let v = LcuOperator::parse_terms(2, &[(0.5, "XI"), (0.25, "IY")]).unwrap();
        let eig = ground_state(&h0).unwrap();
        let exact = second_derivative_sum(&v, &eig, 0).unwrap();
        let coarse = (finite_difference_d2(&h0, &v, 2e-2, 0).unwrap() - exact).abs();
        let fine = (finite_difference_d2(&h0, &v, 1e-2, 0).unwrap() - exact).abs();
        // O(h²) convergence: halving h shrinks the error ~4x (allow slack).
        assert!(
            fine < coarse / 2.5,
            "errors {coarse:.3e} -> {fine:.3e} shrank too slowly"
        );
    }

    #[test]
    fn moore_penrose_examples() {
        let c = |x: f64| Complex64::new(x, 0.0);
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![c(2.0), c(0.0)]));
        let p = moore_penrose(&m);
        assert_abs_diff_eq!(p[(0, 0)].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[(1, 1)].re, 0.0, epsilon = 1e-12);

        // invertible case reduces to the inverse
        let m = DMatrix::from_row_slice(2, 2, &[c(2.0), c(1.0), c(1.0), c(3.0)]);
        let p = moore_penrose(&m);
        let inv = m.clone().try_inverse().unwrap();
        let diff = (&p - &inv).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-9);
    }

    #[test]
    fn penrose_identities_on_rank_deficient() {
        // Rank-1 Hermitian projector-like matrix.
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)],
        );
        let p = moore_penrose(&m);
        let checks = [
            &m * &p * &m - &m,
            &p * &m * &p - &p,
            (&m * &p).adjoint() - &m * &p,
            (&p * &m).adjoint() - &p * &m,
        ];
        for d in checks {
            assert!(d.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-8);
        }
    }

    #[test]
    fn sum_and_pinv_routes_agree() {
        let h0 =
            LcuOperator::parse_terms(2, &[(0.6, "ZI"), (0.3, "IZ"), (0.15, "XX")]).unwrap();
        let v = LcuOperator::parse_terms(2, &[(0.4, "XI"), (0.3, "-ZY")]).unwrap();
        let eig = ground_state(&h0).unwrap();
        let sum = second_derivative_sum(&v, &eig, 0).unwrap();
        let k = exact_k_expectation(&h0, &v, &eig, 0).unwrap();
        assert_abs_diff_eq!(sum, 2.0 * k, epsilon = 1e-9);
    }

    #[test]
    fn fk_instance_l1_spectrum() {
        let inst = FkInstance::identity(1, 1).unwrap();
        let h = inst.dense_hamiltonian().unwrap();
        assert!(hermiticity_defect(&h) < 1e-12);
        let eig = diagonalize_dense(&h);
        let mut distinct: Vec<f64> = Vec::new();
        for &v in &eig.eigenvalues {
            if distinct.last().map_or(true, |&d| (v - d).abs() > 1e-8) {
                distinct.push(v);
            }
        }
        let expect = fk_connected_eigenvalues(1);
        assert_eq!(distinct.len(), expect.len());
        for (got, want) in distinct.iter().zip(&expect) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn history_ground_state_is_null_vector() {
        let inst = FkInstance::identity(3, 1).unwrap();
        let h = inst.dense_hamiltonian().unwrap();
        let psi0 = inst.history_state(0).unwrap();
        let residual = (&h * &psi0).norm();
        assert!(residual < 1e-9, "residual {residual}");
    }

    #[test]
    fn phase_rotation_advances_history_index() {
        let inst = FkInstance::identity(3, 1).unwrap();
        let r = fk_phase_rotation(&inst);
        let psi0 = inst.history_state(0).unwrap();
        let psi1 = inst.history_state(1).unwrap();
        let overlap = (psi1.adjoint() * (&r * &psi0))[(0, 0)];
        assert_abs_diff_eq!(overlap.re, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(overlap.im, 0.0, epsilon = 1e-9);
        // (L+1)-th power returns to the identity
        let mut acc = DMatrix::<Complex64>::identity(r.nrows(), r.nrows());
        for _ in 0..4 {
            acc = &acc * &r;
        }
        let defect = (&acc - DMatrix::<Complex64>::identity(r.nrows(), r.nrows()))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(defect < 1e-12);
    }

    #[test]
    fn phase_rotation_l1_diagonal() {
        let inst = FkInstance::identity(1, 1).unwrap();
        let r = fk_phase_rotation(&inst);
        assert_abs_diff_eq!(r[(0, 0)].re, 1.0, epsilon = 1e-15);
        // e^{iπ} = −1 on the second clock value
        assert_abs_diff_eq!(r[(2, 2)].re, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn fk_lcu_round_trips_to_dense() {
        let inst = FkInstance::identity(1, 1).unwrap();
        let op = feynman_kitaev(&inst).unwrap();
        let dense = op.to_dense().unwrap();
        let direct = inst.dense_hamiltonian().unwrap();
        let diff = (&dense - &direct).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10);
    }
}
