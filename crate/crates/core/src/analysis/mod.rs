//! Derived quantities: deseparation rates, entropy, nested and memory
//! expansions of the environment, the observation map and branching ratios.

mod memory;
mod nested;
mod observe;
mod rate;

pub use memory::{branching_ratios, BranchingRatio, BranchingTable, MemoryBranch, MemoryExpansion};
pub use nested::{nested_schmidt, NestedBranch, NestedDecomposition};
pub use observe::{
    block_projectors, observe, orthogonal_overlaps, random_phase_overlaps, random_phase_study,
    relative_norms, unitary_mapping, ObservationScenario, PhaseStudyPoint, RelativeNorms,
    TripartiteDims,
};
pub use rate::{
    default_fit_window, deseparation_rate, deseparation_rate_superposition,
    product_deseparation_rate, quadratic_growth_fit, superposition_rate_check, SuperpositionRate,
};

use crate::error::{Error, Result};
use crate::linalg::{
    check_basis, check_normalized, partial_inner_left, Dims, StateVector, NORM_TOL,
};

/// Entries down to this value are read as rounding noise around zero.
const NEGATIVE_SLACK: f64 = 1e-14;

/// `S = -sum p ln p` in nats, skipping zero entries.
pub fn entanglement_entropy(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::InvalidArgument("empty distribution".into()));
    }
    if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < -NEGATIVE_SLACK) {
        return Err(Error::InvalidArgument(format!("invalid probability {x}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORM_TOL {
        return Err(Error::InvalidArgument(format!(
            "probabilities sum to {total}"
        )));
    }
    Ok(p.iter()
        .filter(|x| **x > 0.0)
        .map(|x| -x * x.ln())
        .sum::<f64>()
        .max(0.0))
}

/// Unnormalized relative states `Phi^(i) = <phi_i|psi>` for a complete
/// orthonormal basis of the left factor.
pub fn relative_decomposition(
    psi: &StateVector,
    basis: &[StateVector],
    dims: Dims,
) -> Result<Vec<StateVector>> {
    dims.check_state(psi)?;
    check_normalized(psi)?;
    check_basis(basis, dims.a)?;
    Ok(basis
        .iter()
        .map(|phi| partial_inner_left(phi, psi, dims))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random::{random_state, random_unitary, rng};
    use crate::linalg::{basis_state, c, columns, tensor_product};

    #[test]
    fn entropy_examples() {
        assert_eq!(entanglement_entropy(&[1.0]).unwrap(), 0.0);
        for d in [2usize, 3, 7] {
            let s = entanglement_entropy(&vec![1.0 / d as f64; d]).unwrap();
            assert!((s - (d as f64).ln()).abs() < 1e-14);
        }
        let s = entanglement_entropy(&[0.64, 0.36]).unwrap();
        let oracle = -(0.64f64.ln() * 0.64 + 0.36f64.ln() * 0.36);
        assert!((s - oracle).abs() < 1e-15);
        assert!((s - 0.6534).abs() < 1e-4);
        assert_eq!(entanglement_entropy(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn entropy_rejects_bad_input() {
        assert!(entanglement_entropy(&[]).is_err());
        assert!(entanglement_entropy(&[0.5, 0.4]).is_err());
        assert!(entanglement_entropy(&[1.1, -0.1]).is_err());
        assert!(entanglement_entropy(&[f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn relative_states_of_product() {
        let mut r = rng(1);
        let u = columns(&random_unitary(&mut r, 3));
        let big = random_state(&mut r, 2);
        let psi = tensor_product(&u[1], &big).unwrap();
        let rel = relative_decomposition(&psi, &u, Dims::new(3, 2)).unwrap();
        assert!((&rel[1] - &big).norm() < 1e-12);
        assert!(rel[0].norm() < 1e-12 && rel[2].norm() < 1e-12);
    }

    #[test]
    fn relative_states_of_bell() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = (basis_state(4, 0) + basis_state(4, 3)) * c(s, 0.0);
        let e = [basis_state(2, 0), basis_state(2, 1)];
        let rel = relative_decomposition(&psi, &e, Dims::new(2, 2)).unwrap();
        assert!((&rel[0] - basis_state(2, 0) * c(s, 0.0)).norm() < 1e-15);
        assert!((&rel[1] - basis_state(2, 1) * c(s, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn relative_states_reassemble() {
        for seed in 0..10 {
            let mut r = rng(seed);
            let dims = Dims::new(3, 4);
            let psi = random_state(&mut r, 12);
            let basis = columns(&random_unitary(&mut r, 3));
            let rel = relative_decomposition(&psi, &basis, dims).unwrap();
            let total: f64 = rel.iter().map(|v| v.norm_squared()).sum();
            assert!((total - 1.0).abs() < 1e-12);
            let mut back = StateVector::zeros(12);
            for (phi, v) in basis.iter().zip(&rel) {
                back += tensor_product(phi, v).unwrap();
            }
            assert!((back - &psi).norm() < 1e-12);
        }
    }

    #[test]
    fn relative_states_need_complete_basis() {
        let psi = random_state(&mut rng(3), 6);
        let e = [basis_state(3, 0), basis_state(3, 1)];
        assert!(matches!(
            relative_decomposition(&psi, &e, Dims::new(3, 2)),
            Err(Error::IncompleteBasis(_))
        ));
    }
}
