//! Dense complex linear algebra for bipartite pure states.
//!
//! A total state over `A (x) B` is stored as a flat vector indexed by
//! `iA * dB + iB`. The same convention is used by [`tensor_product`],
//! [`amplitude_matrix`] and every partial contraction in the crate.

mod schmidt;
mod svd;

pub mod random;

pub use schmidt::{schmidt_decompose, SchmidtForm};
pub use svd::{jacobi_svd, Svd};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type StateVector = DVector<C64>;

/// Probabilities at or below this value count as unoccupied branches.
pub const EPS_RANK: f64 = 1e-12;
/// Two Schmidt probabilities closer than this are flagged as degenerate.
pub const EPS_DEG: f64 = 1e-9;
/// Accepted deviation from unit norm for states passed as normalized.
pub const NORM_TOL: f64 = 1e-10;
/// Accepted max-entry deviation from Hermiticity for inputs.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Dimensions of the two factors of a bipartite Hilbert space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub a: usize,
    pub b: usize,
}

impl Dims {
    pub fn new(a: usize, b: usize) -> Self {
        Dims { a, b }
    }

    pub fn total(&self) -> usize {
        self.a * self.b
    }

    /// Number of Schmidt branches, `min(dA, dB)`.
    pub fn rank(&self) -> usize {
        self.a.min(self.b)
    }

    pub(crate) fn check_state(&self, psi: &StateVector) -> Result<()> {
        if self.a == 0 || self.b == 0 {
            return Err(Error::dims("zero-dimensional factor"));
        }
        if psi.len() != self.total() {
            return Err(Error::dims(format!(
                "state of length {} does not match {}x{}",
                psi.len(),
                self.a,
                self.b
            )));
        }
        Ok(())
    }
}

/// Which factor of the bipartite space a reduced quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// The system factor `A` (states `phi_i`).
    Left,
    /// The environment factor `B` (states `Phi_i`).
    Right,
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `<a|b>`, antilinear in the first argument.
pub fn inner(a: &StateVector, b: &StateVector) -> C64 {
    a.dotc(b)
}

pub fn basis_state(dim: usize, k: usize) -> StateVector {
    let mut v = StateVector::zeros(dim);
    v[k] = C64::new(1.0, 0.0);
    v
}

pub fn check_normalized(v: &StateVector) -> Result<()> {
    let n = v.norm();
    if (n - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { norm: n });
    }
    Ok(())
}

/// Amplitudes of `a (x) b` at flattened index `iA * dB + iB`.
pub fn tensor_product(a: &StateVector, b: &StateVector) -> Result<StateVector> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::dims("tensor product of a zero-dimensional vector"));
    }
    let db = b.len();
    Ok(StateVector::from_fn(a.len() * db, |k, _| {
        a[k / db] * b[k % db]
    }))
}

/// Kronecker product of two operators, consistent with [`tensor_product`].
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// The `dA x dB` matrix `M[iA, iB] = psi[iA * dB + iB]`.
pub fn amplitude_matrix(psi: &StateVector, dims: Dims) -> Result<ComplexMatrix> {
    dims.check_state(psi)?;
    Ok(ComplexMatrix::from_fn(dims.a, dims.b, |i, j| {
        psi[i * dims.b + j]
    }))
}

pub fn from_amplitude_matrix(m: &ComplexMatrix) -> StateVector {
    let (da, db) = m.shape();
    StateVector::from_fn(da * db, |k, _| m[(k / db, k % db)])
}

/// Partial inner product `<phi|psi>` over the left factor; a vector on `B`.
pub fn partial_inner_left(phi: &StateVector, psi: &StateVector, dims: Dims) -> StateVector {
    debug_assert_eq!(phi.len(), dims.a);
    let mut out = StateVector::zeros(dims.b);
    for ia in 0..dims.a {
        let w = phi[ia].conj();
        if w == C64::new(0.0, 0.0) {
            continue;
        }
        for ib in 0..dims.b {
            out[ib] += w * psi[ia * dims.b + ib];
        }
    }
    out
}

/// Partial inner product `<Phi|psi>` over the right factor; a vector on `A`.
pub fn partial_inner_right(big_phi: &StateVector, psi: &StateVector, dims: Dims) -> StateVector {
    debug_assert_eq!(big_phi.len(), dims.b);
    StateVector::from_fn(dims.a, |ia, _| {
        (0..dims.b)
            .map(|ib| big_phi[ib].conj() * psi[ia * dims.b + ib])
            .sum()
    })
}

/// Reduced density matrix of one factor of a pure bipartite state.
///
/// `Side::Left` traces out `B` and returns `rho_phi` (`dA x dA`);
/// `Side::Right` traces out `A` and returns `rho_Phi` (`dB x dB`).
pub fn partial_trace(psi: &StateVector, dims: Dims, side: Side) -> Result<ComplexMatrix> {
    let m = amplitude_matrix(psi, dims)?;
    Ok(match side {
        Side::Left => &m * m.adjoint(),
        Side::Right => m.transpose() * m.map(|z| z.conj()),
    })
}

/// Partial trace of a general operator on `A (x) B`.
pub fn partial_trace_operator(op: &ComplexMatrix, dims: Dims, side: Side) -> Result<ComplexMatrix> {
    if op.nrows() != dims.total() || op.ncols() != dims.total() {
        return Err(Error::dims("operator does not match bipartite dimensions"));
    }
    let (da, db) = (dims.a, dims.b);
    Ok(match side {
        Side::Left => ComplexMatrix::from_fn(da, da, |i, j| {
            (0..db).map(|k| op[(i * db + k, j * db + k)]).sum()
        }),
        Side::Right => ComplexMatrix::from_fn(db, db, |i, j| {
            (0..da).map(|k| op[(k * db + i, k * db + j)]).sum()
        }),
    })
}

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `max |M - M^dagger|` over entries.
pub fn hermitian_deviation(m: &ComplexMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn check_hermitian(m: &ComplexMatrix) -> Result<()> {
    let dev = hermitian_deviation(m);
    let scale = max_abs(m).max(1.0);
    if dev > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian { deviation: dev });
    }
    Ok(())
}

/// `max |U^dagger U - I|` over entries.
pub fn unitarity_deviation(u: &ComplexMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - ComplexMatrix::identity(n, n)))
}

/// Gram-matrix deviation from the identity for a set of vectors.
pub fn orthonormality_deviation(vs: &[StateVector]) -> f64 {
    let mut dev: f64 = 0.0;
    for (i, a) in vs.iter().enumerate() {
        for (j, b) in vs.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((inner(a, b) - C64::new(target, 0.0)).norm());
        }
    }
    dev
}

/// Check that `vs` is an orthonormal basis of `C^dim`.
pub fn check_basis(vs: &[StateVector], dim: usize) -> Result<()> {
    if vs.len() != dim || vs.iter().any(|v| v.len() != dim) {
        return Err(Error::IncompleteBasis(format!(
            "expected {dim} vectors of dimension {dim}, got {}",
            vs.len()
        )));
    }
    let dev = orthonormality_deviation(vs);
    if dev > NORM_TOL {
        return Err(Error::IncompleteBasis(format!(
            "Gram matrix deviates from identity by {dev:e}"
        )));
    }
    Ok(())
}

pub fn columns(m: &ComplexMatrix) -> Vec<StateVector> {
    m.column_iter().map(|c| c.into_owned()).collect()
}

pub fn from_columns(vs: &[StateVector]) -> ComplexMatrix {
    ComplexMatrix::from_columns(vs)
}

/// Spectral decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, ordered like `eigenvalues`.
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let d = ComplexMatrix::from_diagonal(&DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&l| C64::new(l, 0.0)),
        ));
        &self.eigenvectors * d * self.eigenvectors.adjoint()
    }
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
pub fn hermitian_eigendecomposition(m: &ComplexMatrix) -> Result<HermitianEigen> {
    check_hermitian(m)?;
    let n = m.nrows();
    if n == 0 {
        return Err(Error::dims("empty matrix"));
    }
    // Symmetrize so the solver sees an exactly Hermitian input.
    let h = (m + m.adjoint()).scale(0.5);
    let eig = nalgebra::SymmetricEigen::try_new(h, f64::EPSILON, 0)
        .ok_or_else(|| Error::InvalidArgument("Hermitian eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    Ok(HermitianEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// Cached spectral decomposition of a Hamiltonian for repeated `exp(-iHt/hbar)`.
#[derive(Debug, Clone)]
pub struct Propagator {
    eigen: HermitianEigen,
    hbar: f64,
}

impl Propagator {
    pub fn new(h: &ComplexMatrix, hbar: f64) -> Result<Self> {
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "hbar must be positive, got {hbar}"
            )));
        }
        Ok(Propagator {
            eigen: hermitian_eigendecomposition(h)?,
            hbar,
        })
    }

    pub fn eigen(&self) -> &HermitianEigen {
        &self.eigen
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Largest eigenvalue magnitude of the generator.
    pub fn spectral_radius(&self) -> f64 {
        self.eigen
            .eigenvalues
            .iter()
            .fold(0.0_f64, |acc, l| acc.max(l.abs()))
    }

    fn phases(&self, t: f64) -> DVector<C64> {
        DVector::from_iterator(
            self.eigen.eigenvalues.len(),
            self.eigen
                .eigenvalues
                .iter()
                .map(|&l| C64::from_polar(1.0, -l * t / self.hbar)),
        )
    }

    pub fn matrix(&self, t: f64) -> ComplexMatrix {
        let v = &self.eigen.eigenvectors;
        let d = ComplexMatrix::from_diagonal(&self.phases(t));
        v * d * v.adjoint()
    }

    /// `exp(-iHt/hbar) psi` without forming the full propagator.
    pub fn apply(&self, t: f64, psi: &StateVector) -> StateVector {
        let v = &self.eigen.eigenvectors;
        let coeffs = v.adjoint() * psi;
        let rotated = coeffs.component_mul(&self.phases(t));
        v * rotated
    }
}

/// `exp(-iHt/hbar)` via the spectral decomposition of `H`.
pub fn unitary_propagator(h: &ComplexMatrix, t: f64, hbar: f64) -> Result<ComplexMatrix> {
    Ok(Propagator::new(h, hbar)?.matrix(t))
}

/// Pauli matrices, handy for small models and tests.
pub mod pauli {
    use super::{c, ComplexMatrix};

    pub fn x() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    pub fn y() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
    }

    pub fn z() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
    }

    pub fn id() -> ComplexMatrix {
        ComplexMatrix::identity(2, 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random::{random_hermitian, random_state, rng};
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    #[test]
    fn tensor_basis_case() {
        let e0 = basis_state(2, 0);
        let v = tensor_product(&e0, &e0).unwrap();
        assert_eq!(v, basis_state(4, 0));
    }

    #[test]
    fn tensor_linearity() {
        let plus = (basis_state(2, 0) + basis_state(2, 1)).scale(FRAC_1_SQRT_2);
        let v = tensor_product(&plus, &basis_state(2, 0)).unwrap();
        let expected = (basis_state(4, 0) + basis_state(4, 2)).scale(FRAC_1_SQRT_2);
        assert!((v - expected).norm() < 1e-15);
    }

    #[test]
    fn tensor_norm_is_multiplicative() {
        let mut r = rng(11);
        for k in 0..50 {
            let a = random_state(&mut r, 2 + k % 3).scale(0.3 + k as f64 * 0.1);
            let b = random_state(&mut r, 3 + k % 4).scale(1.7);
            let ab = tensor_product(&a, &b).unwrap();
            assert!((ab.norm() - a.norm() * b.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn tensor_rejects_empty() {
        let e = StateVector::zeros(0);
        assert!(tensor_product(&e, &basis_state(2, 0)).is_err());
    }

    #[test]
    fn partial_trace_product_is_pure() {
        let mut r = rng(3);
        let a = random_state(&mut r, 3);
        let b = random_state(&mut r, 2);
        let psi = tensor_product(&a, &b).unwrap();
        let rho_a = partial_trace(&psi, Dims::new(3, 2), Side::Left).unwrap();
        let rho_b = partial_trace(&psi, Dims::new(3, 2), Side::Right).unwrap();
        assert!(max_abs(&(rho_a - &a * a.adjoint())) < 1e-14);
        assert!(max_abs(&(rho_b - &b * b.adjoint())) < 1e-14);
    }

    #[test]
    fn partial_trace_bell_is_maximally_mixed() {
        let bell = (basis_state(4, 0) + basis_state(4, 3)).scale(FRAC_1_SQRT_2);
        for side in [Side::Left, Side::Right] {
            let rho = partial_trace(&bell, Dims::new(2, 2), side).unwrap();
            let half = ComplexMatrix::identity(2, 2).scale(0.5);
            assert!(max_abs(&(rho - half)) < 1e-15);
        }
    }

    #[test]
    fn partial_trace_properties_random() {
        let mut r = rng(5);
        for (da, db) in [(2, 3), (4, 2), (3, 3)] {
            let dims = Dims::new(da, db);
            let psi = random_state(&mut r, dims.total());
            for side in [Side::Left, Side::Right] {
                let rho = partial_trace(&psi, dims, side).unwrap();
                assert!(hermitian_deviation(&rho) < 1e-14);
                assert!((rho.trace().re - 1.0).abs() < 1e-12);
                let eig = hermitian_eigendecomposition(&rho).unwrap();
                assert!(eig.eigenvalues[0] > -1e-10);
            }
        }
    }

    #[test]
    fn partial_trace_operator_matches_state_version() {
        let mut r = rng(8);
        let dims = Dims::new(3, 2);
        let psi = random_state(&mut r, 6);
        let proj = &psi * psi.adjoint();
        for side in [Side::Left, Side::Right] {
            let a = partial_trace(&psi, dims, side).unwrap();
            let b = partial_trace_operator(&proj, dims, side).unwrap();
            assert!(max_abs(&(a - b)) < 1e-14);
        }
    }

    #[test]
    fn partial_trace_dimension_mismatch() {
        let psi = basis_state(5, 0);
        assert!(matches!(
            partial_trace(&psi, Dims::new(2, 2), Side::Left),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn eigen_diagonal() {
        let m =
            ComplexMatrix::from_diagonal(&DVector::from_vec(vec![c(3., 0.), c(1., 0.), c(2., 0.)]));
        let e = hermitian_eigendecomposition(&m).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 2.0, 3.0]);
        for k in 0..3 {
            let col = e.eigenvectors.column(k).into_owned();
            assert!((col.norm() - 1.0).abs() < 1e-15);
        }
        assert!(max_abs(&(e.reconstruct() - m)) < 1e-14);
    }

    #[test]
    fn eigen_pauli_x() {
        let e = hermitian_eigendecomposition(&pauli::x()).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-15);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eigen_random_residual() {
        let mut r = rng(21);
        for _ in 0..10 {
            let m = random_hermitian(&mut r, 8);
            let e = hermitian_eigendecomposition(&m).unwrap();
            let v = &e.eigenvectors;
            let lam = ComplexMatrix::from_diagonal(&DVector::from_iterator(
                8,
                e.eigenvalues.iter().map(|&l| c(l, 0.)),
            ));
            let norm = m.norm();
            assert!(max_abs(&(&m * v - v * lam)) <= 1e-9 * norm);
            assert!(unitarity_deviation(v) <= 1e-10);
            assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eigen_rejects_non_hermitian() {
        let m = ComplexMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]);
        assert!(matches!(
            hermitian_eigendecomposition(&m),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn propagator_null_generator() {
        let u = unitary_propagator(&ComplexMatrix::zeros(3, 3), 2.5, 1.0).unwrap();
        assert!(max_abs(&(u - ComplexMatrix::identity(3, 3))) < 1e-15);
    }

    #[test]
    fn propagator_pauli_x_quarter_period() {
        let u = unitary_propagator(&pauli::x(), PI / 2.0, 1.0).unwrap();
        let expected = pauli::x().scale(1.0) * c(0., -1.);
        assert!(max_abs(&(u - expected)) < 1e-14);
    }

    #[test]
    fn propagator_unitary_and_group_law() {
        let mut r = rng(4);
        for n in [2, 5, 9] {
            let h = random_hermitian(&mut r, n);
            let p = Propagator::new(&h, 0.7).unwrap();
            let u1 = p.matrix(0.31);
            let u2 = p.matrix(1.13);
            assert!(unitarity_deviation(&u1) <= 1e-10);
            assert!(max_abs(&(&u1 * &u2 - p.matrix(1.44))) <= 1e-9);
            let psi = random_state(&mut r, n);
            assert!((p.apply(0.31, &psi) - &u1 * &psi).norm() < 1e-12);
        }
    }

    #[test]
    fn propagator_rejects_bad_hbar() {
        assert!(unitary_propagator(&pauli::z(), 1.0, 0.0).is_err());
        assert!(unitary_propagator(&pauli::z(), 1.0, -1.0).is_err());
    }
}
