//! Exact Schrödinger evolution and branch-tracked Schmidt trajectories.

mod assignment;
mod events;
mod trajectory;

pub use assignment::max_weight_assignment;
pub use events::{
    detect_events, detect_events_with, Event, EventKind, EventLog, ExactOracle, ProbabilityOracle,
    DEFAULT_GAP_THRESHOLD,
};
pub use trajectory::{schmidt_trajectory, SchmidtTrajectory, PHASE_ALIGN_MIN_OVERLAP};

use crate::error::{Error, Result};
use crate::linalg::{check_normalized, Propagator, StateVector};
use crate::model::BipartiteModel;

/// Largest `max|lambda| dt / hbar` accepted by the default grid.
pub const DEFAULT_PHASE_STEP: f64 = 0.05;

/// `psi(t) = exp(-iHt/hbar) psi0` at each requested time (`psi0` at `t = 0`).
pub fn evolve_exact(
    model: &BipartiteModel,
    psi0: &StateVector,
    times: &[f64],
) -> Result<Vec<StateVector>> {
    model.dims().check_state(psi0)?;
    check_normalized(psi0)?;
    check_times(times)?;
    let prop = Propagator::new(model.hamiltonian(), model.hbar())?;
    Ok(times.iter().map(|&t| prop.apply(t, psi0)).collect())
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("non-finite time".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "times must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// `n` equally spaced times from `t0` to `t1` inclusive.
pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![t0],
        _ => (0..n)
            .map(|k| t0 + (t1 - t0) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Number of grid points on `[0, t_max]` so that `max|lambda| dt / hbar`
/// does not exceed [`DEFAULT_PHASE_STEP`]; never fewer than `min_points`.
pub fn default_grid_points(model: &BipartiteModel, t_max: f64, min_points: usize) -> Result<usize> {
    let prop = Propagator::new(model.hamiltonian(), model.hbar())?;
    let rate = prop.spectral_radius() / model.hbar();
    let steps = (rate * t_max / DEFAULT_PHASE_STEP).ceil() as usize;
    Ok((steps + 1).max(min_points).max(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random::{random_hermitian, random_state, rng};
    use crate::linalg::{basis_state, c, kron, pauli, ComplexMatrix, Dims};
    use crate::model::{build_random, build_separable};

    #[test]
    fn null_hamiltonian_is_static() {
        let m = build_separable(&ComplexMatrix::zeros(2, 2), &ComplexMatrix::zeros(2, 2)).unwrap();
        let psi0 = random_state(&mut rng(1), 4);
        for psi in evolve_exact(&m, &psi0, &[0.0, 1.0, 7.5]).unwrap() {
            assert!((psi - &psi0).norm() < 1e-15);
        }
    }

    #[test]
    fn two_qubit_xx_closed_form() {
        let m = BipartiteModel::new(Dims::new(2, 2), kron(&pauli::x(), &pauli::x())).unwrap();
        let times = uniform_grid(0.0, 3.0, 31);
        let states = evolve_exact(&m, &basis_state(4, 0), &times).unwrap();
        for (t, psi) in times.iter().zip(&states) {
            let expected = basis_state(4, 0).scale(t.cos()) + basis_state(4, 3) * c(0.0, -t.sin());
            assert!((psi - expected).norm() < 1e-13);
        }
    }

    #[test]
    fn norm_conserved_random_model() {
        let m = build_random(Dims::new(3, 4), 0.8, 3).unwrap();
        let psi0 = random_state(&mut rng(2), 12);
        let times = uniform_grid(0.0, 50.0, 1000);
        for psi in evolve_exact(&m, &psi0, &times).unwrap() {
            assert!((psi.norm() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn energy_conserved() {
        let mut r = rng(8);
        let dims = Dims::new(3, 3);
        let h = random_hermitian(&mut r, 9);
        let m = BipartiteModel::new(dims, h.clone()).unwrap();
        let psi0 = random_state(&mut r, 9);
        let e0 = crate::linalg::inner(&psi0, &(&h * &psi0)).re;
        for psi in evolve_exact(&m, &psi0, &uniform_grid(0.0, 20.0, 200)).unwrap() {
            let e = crate::linalg::inner(&psi, &(&h * &psi)).re;
            assert!((e - e0).abs() <= 1e-9 * e0.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = build_random(Dims::new(2, 2), 0.1, 1).unwrap();
        assert!(evolve_exact(&m, &basis_state(4, 0).scale(1.1), &[0.0]).is_err());
        assert!(evolve_exact(&m, &basis_state(4, 0), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn default_grid_resolves_phase() {
        let m = build_random(Dims::new(2, 3), 1.0, 9).unwrap();
        let n = default_grid_points(&m, 4.0, 2).unwrap();
        let prop = Propagator::new(m.hamiltonian(), 1.0).unwrap();
        let dt = 4.0 / (n - 1) as f64;
        assert!(prop.spectral_radius() * dt <= DEFAULT_PHASE_STEP + 1e-12);
    }
}
