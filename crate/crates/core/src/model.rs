//! Bipartite Hamiltonians, pointer bases and initial states.

use crate::error::{Error, Result};
use crate::linalg::random::{random_hermitian, random_state, random_unitary, rng};
use crate::linalg::{
    check_hermitian, check_normalized, columns, hermitian_deviation, inner, kron, max_abs,
    orthonormality_deviation, tensor_product, ComplexMatrix, Dims, StateVector, C64, NORM_TOL,
};

/// Optional split `H = H_A (x) I + I (x) H_B + H_int`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParts {
    pub h_a: ComplexMatrix,
    pub h_b: ComplexMatrix,
    pub h_int: ComplexMatrix,
}

/// A time-independent Hamiltonian on `A (x) B` together with `hbar`.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteModel {
    dims: Dims,
    hamiltonian: ComplexMatrix,
    parts: Option<ModelParts>,
    hbar: f64,
}

impl BipartiteModel {
    /// Model from an explicit total Hamiltonian; `hbar` defaults to 1.
    pub fn new(dims: Dims, hamiltonian: ComplexMatrix) -> Result<Self> {
        if dims.a == 0 || dims.b == 0 {
            return Err(Error::dims("zero-dimensional factor"));
        }
        if hamiltonian.shape() != (dims.total(), dims.total()) {
            return Err(Error::dims(format!(
                "Hamiltonian is {:?}, expected {}x{}",
                hamiltonian.shape(),
                dims.total(),
                dims.total()
            )));
        }
        check_hermitian(&hamiltonian)?;
        Ok(BipartiteModel {
            dims,
            hamiltonian,
            parts: None,
            hbar: 1.0,
        })
    }

    /// Model assembled from its separable and interaction parts.
    pub fn from_parts(parts: ModelParts) -> Result<Self> {
        check_hermitian(&parts.h_a)?;
        check_hermitian(&parts.h_b)?;
        check_hermitian(&parts.h_int)?;
        let dims = Dims::new(parts.h_a.nrows(), parts.h_b.nrows());
        if parts.h_int.shape() != (dims.total(), dims.total()) {
            return Err(Error::dims("interaction does not act on the product space"));
        }
        let ia = ComplexMatrix::identity(dims.a, dims.a);
        let ib = ComplexMatrix::identity(dims.b, dims.b);
        let h = kron(&parts.h_a, &ib) + kron(&ia, &parts.h_b) + &parts.h_int;
        let mut model = BipartiteModel::new(dims, h)?;
        model.parts = Some(parts);
        Ok(model)
    }

    pub fn with_hbar(mut self, hbar: f64) -> Result<Self> {
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "hbar must be positive, got {hbar}"
            )));
        }
        self.hbar = hbar;
        Ok(self)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    pub fn parts(&self) -> Option<&ModelParts> {
        self.parts.as_ref()
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// `<a|H|b>`.
    pub fn matrix_element(&self, a: &StateVector, b: &StateVector) -> C64 {
        inner(a, &(&self.hamiltonian * b))
    }

    /// `(phi_a (x) 1)^dagger H (phi_b (x) 1)`, the `dB x dB` block of `H`
    /// between two system states.
    pub fn environment_block(&self, phi_a: &StateVector, phi_b: &StateVector) -> ComplexMatrix {
        let (da, db) = (self.dims.a, self.dims.b);
        let mut out = ComplexMatrix::zeros(db, db);
        for ia in 0..da {
            let wa = phi_a[ia].conj();
            if wa == C64::new(0.0, 0.0) {
                continue;
            }
            for ja in 0..da {
                let w = wa * phi_b[ja];
                if w == C64::new(0.0, 0.0) {
                    continue;
                }
                let block = self.hamiltonian.view((ia * db, ja * db), (db, db));
                out += block * w;
            }
        }
        out
    }

    /// `(1 (x) Phi_a)^dagger H (1 (x) Phi_b)`, the `dA x dA` block of `H`
    /// between two environment states.
    pub fn system_block(&self, big_a: &StateVector, big_b: &StateVector) -> ComplexMatrix {
        let (da, db) = (self.dims.a, self.dims.b);
        let mut out = ComplexMatrix::zeros(da, da);
        for ia in 0..da {
            for ja in 0..da {
                let block = self.hamiltonian.view((ia * db, ja * db), (db, db));
                out[(ia, ja)] = big_a.dotc(&(block * big_b));
            }
        }
        out
    }
}

/// Orthonormal system states `phi_i` with conditional environment
/// Hamiltonians `H_Phi^(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointerBasis {
    states: Vec<StateVector>,
    conditional: Vec<ComplexMatrix>,
}

impl PointerBasis {
    pub fn new(states: Vec<StateVector>, conditional: Vec<ComplexMatrix>) -> Result<Self> {
        if states.is_empty() || states.len() != conditional.len() {
            return Err(Error::dims(
                "pointer basis needs one conditional Hamiltonian per state",
            ));
        }
        let da = states[0].len();
        if states.iter().any(|v| v.len() != da) || states.len() > da {
            return Err(Error::dims("pointer states differ in dimension"));
        }
        let dev = orthonormality_deviation(&states);
        if dev > NORM_TOL {
            return Err(Error::IncompleteBasis(format!(
                "pointer states not orthonormal (deviation {dev:e})"
            )));
        }
        let db = conditional[0].nrows();
        for h in &conditional {
            if h.shape() != (db, db) {
                return Err(Error::dims("conditional Hamiltonians differ in size"));
            }
            check_hermitian(h)?;
        }
        Ok(PointerBasis {
            states,
            conditional,
        })
    }

    /// Computational basis with the given conditional Hamiltonians.
    pub fn computational(conditional: Vec<ComplexMatrix>) -> Result<Self> {
        let n = conditional.len();
        let states = columns(&ComplexMatrix::identity(n, n));
        PointerBasis::new(states, conditional)
    }

    /// Haar-random pointer states with Gaussian-ensemble conditional
    /// Hamiltonians scaled by `strength`.
    pub fn random(dims: Dims, strength: f64, seed: u64) -> Self {
        let mut r = rng(seed);
        let states = columns(&random_unitary(&mut r, dims.a));
        let conditional = (0..dims.a)
            .map(|_| random_hermitian(&mut r, dims.b).scale(strength))
            .collect();
        PointerBasis {
            states,
            conditional,
        }
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn conditional(&self) -> &[ComplexMatrix] {
        &self.conditional
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.states[0].len(), self.conditional[0].nrows())
    }
}

/// `H = H_A (x) I + I (x) H_B`.
pub fn build_separable(h_a: &ComplexMatrix, h_b: &ComplexMatrix) -> Result<BipartiteModel> {
    let dims = Dims::new(h_a.nrows(), h_b.nrows());
    BipartiteModel::from_parts(ModelParts {
        h_a: h_a.clone(),
        h_b: h_b.clone(),
        h_int: ComplexMatrix::zeros(dims.total(), dims.total()),
    })
}

/// `H = sum_i |phi_i><phi_i| (x) H_Phi^(i)`, block diagonal in the pointer
/// basis so the stability condition holds exactly.
pub fn build_measurement(pointer: &PointerBasis) -> Result<BipartiteModel> {
    let dims = pointer.dims();
    if pointer.states.len() != dims.a {
        return Err(Error::IncompleteBasis(format!(
            "{} pointer states for a {}-dimensional system",
            pointer.states.len(),
            dims.a
        )));
    }
    let mut h = ComplexMatrix::zeros(dims.total(), dims.total());
    for (phi, hc) in pointer.states.iter().zip(&pointer.conditional) {
        h += kron(&(phi * phi.adjoint()), hc);
    }
    // Remove rounding asymmetry from the sum of outer products.
    let h = (&h + h.adjoint()).scale(0.5);
    BipartiteModel::new(dims, h)
}

/// Gaussian-ensemble `H_A`, `H_B` and `H_int = g * G` with `G` from the same
/// ensemble on the product space, drawn in that order from `seed`.
pub fn build_random(dims: Dims, interaction: f64, seed: u64) -> Result<BipartiteModel> {
    if dims.a < 2 || dims.b < 2 {
        return Err(Error::dims("random models need both dimensions >= 2"));
    }
    if !(interaction >= 0.0) || !interaction.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "interaction strength must be >= 0, got {interaction}"
        )));
    }
    let mut r = rng(seed);
    let h_a = random_hermitian(&mut r, dims.a);
    let h_b = random_hermitian(&mut r, dims.b);
    let h_int = random_hermitian(&mut r, dims.total()).scale(interaction);
    BipartiteModel::from_parts(ModelParts { h_a, h_b, h_int })
}

/// `max_{i != i', j, j'} |<phi_i Phi_j|H|phi_i' Phi_j'>|`.
///
/// `probes` defaults to the computational basis of the environment, which
/// bounds the violation over all environment states.
pub fn stability_violation(
    model: &BipartiteModel,
    basis: &[StateVector],
    probes: Option<&[StateVector]>,
) -> Result<f64> {
    let dims = model.dims();
    if basis.iter().any(|v| v.len() != dims.a) {
        return Err(Error::dims("system basis does not match dA"));
    }
    if let Some(p) = probes {
        if p.iter().any(|v| v.len() != dims.b) {
            return Err(Error::dims("probe states do not match dB"));
        }
    }
    let mut worst: f64 = 0.0;
    for (i, a) in basis.iter().enumerate() {
        for (k, b) in basis.iter().enumerate() {
            if i == k {
                continue;
            }
            let block = model.environment_block(a, b);
            let v = match probes {
                None => max_abs(&block),
                Some(ps) => {
                    let mut m: f64 = 0.0;
                    for x in ps {
                        let bx = x.adjoint() * &block;
                        for y in ps {
                            m = m.max((&bx * y)[(0, 0)].norm());
                        }
                    }
                    m
                }
            };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

/// Initial-state recipes.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// `phi (x) Phi`.
    Factorized {
        phi: StateVector,
        big_phi: StateVector,
    },
    /// `(phi_i + phi_j) (x) Phi / sqrt(2)` for two members of `basis`.
    PointerSuperposition {
        basis: Vec<StateVector>,
        i: usize,
        j: usize,
        big_phi: StateVector,
    },
    /// Haar-random total state.
    Random { dims: Dims, seed: u64 },
}

pub fn make_initial(spec: &InitialState) -> Result<StateVector> {
    match spec {
        InitialState::Factorized { phi, big_phi } => {
            check_normalized(phi)?;
            check_normalized(big_phi)?;
            tensor_product(phi, big_phi)
        }
        InitialState::PointerSuperposition {
            basis,
            i,
            j,
            big_phi,
        } => {
            if i == j {
                return Err(Error::InvalidArgument(
                    "pointer superposition needs two distinct states".into(),
                ));
            }
            let (a, b) = match (basis.get(*i), basis.get(*j)) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::InvalidArgument("pointer index out of range".into())),
            };
            check_normalized(a)?;
            check_normalized(b)?;
            check_normalized(big_phi)?;
            if inner(a, b).norm() > 1e-10 {
                return Err(Error::IncompleteBasis(
                    "pointer states are not orthogonal".into(),
                ));
            }
            let sum = (a + b).scale(std::f64::consts::FRAC_1_SQRT_2);
            tensor_product(&sum, big_phi)
        }
        InitialState::Random { dims, seed } => {
            if dims.total() == 0 {
                return Err(Error::dims("zero-dimensional factor"));
            }
            Ok(random_state(&mut rng(*seed), dims.total()))
        }
    }
}

/// Two-qubit family whose Schmidt coefficients meet once per half period.
///
/// `H = omega (e^{i theta}|00><11| + h.c.) + d_A Z (x) I + d_B I (x) Z
///      + g (e^{i chi}|00><01| + h.c.)`, started from `|00>`.
///
/// With `g = 0` the state stays in `span{|00>, |11>}`, the amplitude matrix
/// stays diagonal and the two coefficients cross exactly; every cross
/// element `<phi_j Phi_i|H|psi>` vanishes. The `g` term feeds the
/// off-diagonal amplitude `|01>`, which opens a gap and makes the branches
/// exchange their factor states instead. The seed draws `omega`, `theta`,
/// the detunings and `chi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingFamily {
    pub omega: f64,
    pub theta: f64,
    pub detuning_a: f64,
    pub detuning_b: f64,
    pub coupling_phase: f64,
}

impl CrossingFamily {
    pub fn from_seed(seed: u64) -> Self {
        use rand::Rng as _;
        let mut r = rng(seed);
        let tau = std::f64::consts::TAU;
        CrossingFamily {
            omega: r.random_range(0.8..1.2),
            theta: r.random_range(0.0..tau),
            detuning_a: r.random_range(-0.2..0.2),
            detuning_b: r.random_range(-0.2..0.2),
            coupling_phase: r.random_range(0.0..tau),
        }
    }

    pub fn model(&self, coupling: f64) -> Result<BipartiteModel> {
        let e = |k: usize| crate::linalg::basis_state(4, k);
        let outer = |a: usize, b: usize, z: C64| (e(a) * e(b).adjoint()) * z;
        let flip = outer(0, 3, C64::from_polar(self.omega, self.theta));
        let kick = outer(0, 1, C64::from_polar(coupling, self.coupling_phase));
        let z = crate::linalg::pauli::z();
        let id = crate::linalg::pauli::id();
        let h = &flip
            + flip.adjoint()
            + &kick
            + kick.adjoint()
            + kron(&z, &id).scale(self.detuning_a)
            + kron(&id, &z).scale(self.detuning_b);
        BipartiteModel::new(Dims::new(2, 2), h)
    }

    pub fn initial_state(&self) -> StateVector {
        crate::linalg::basis_state(4, 0)
    }

    /// `[0, pi / (2 omega)]` contains the first meeting of the coefficients.
    pub fn window(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 / self.omega
    }
}

/// Max-entry deviation of `H` from `H_A (x) I + I (x) H_B + H_int`.
pub fn decomposition_residual(model: &BipartiteModel) -> Option<f64> {
    let p = model.parts()?;
    let d = model.dims();
    let ia = ComplexMatrix::identity(d.a, d.a);
    let ib = ComplexMatrix::identity(d.b, d.b);
    let h = kron(&p.h_a, &ib) + kron(&ia, &p.h_b) + &p.h_int;
    Some(max_abs(&(h - model.hamiltonian())))
}

/// True when every invariant of the model holds at the crate's tolerances.
pub fn model_is_consistent(model: &BipartiteModel) -> bool {
    hermitian_deviation(model.hamiltonian()) <= 1e-12
        && decomposition_residual(model).is_none_or(|r| r <= 1e-12)
}
