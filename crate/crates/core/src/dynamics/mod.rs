//! Equations of motion for the Schmidt factors and their integration.

mod integrator;
mod rhs;

pub use integrator::{
    integrate_schmidt, BridgeWindow, IntegrationOutcome, IntegrationStats, IntegratorOptions,
    OnResonance, WindowKind,
};
pub use rhs::{
    effective_hamiltonian, reduced_density_flow, schmidt_rhs, schmidt_rhs_with, stable_branch_rhs,
    stable_branch_rhs_with, DiagonalTerm, RhsOptions, SchmidtDerivative, ALIGNMENT_TOL,
    DEFAULT_EPS_GAP,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::linalg::random::{random_hermitian, random_state, random_unitary, rng};
    use crate::linalg::{
        c, columns, inner, kron, max_abs, partial_trace, pauli, schmidt_decompose, tensor_product,
        ComplexMatrix, Dims, Propagator, SchmidtForm, Side, StateVector, C64,
    };
    use crate::model::{
        build_measurement, build_random, build_separable, BipartiteModel, PointerBasis,
    };
    use crate::propagation::{evolve_exact, uniform_grid};

    fn minus_i(hbar: f64) -> C64 {
        C64::new(0.0, -1.0 / hbar)
    }

    fn xx_state(t: f64) -> StateVector {
        let mut psi = StateVector::zeros(4);
        psi[0] = c(t.cos(), 0.0);
        psi[3] = c(0.0, -t.sin());
        psi
    }

    fn xx_model() -> BipartiteModel {
        BipartiteModel::new(Dims::new(2, 2), kron(&pauli::x(), &pauli::x())).unwrap()
    }

    fn random_form(dims: Dims, seed: u64) -> SchmidtForm {
        schmidt_decompose(&random_state(&mut rng(seed), dims.total()), dims).unwrap()
    }

    /// Form with system factors equal (up to phase) to the pointer states and
    /// random orthonormal environment factors.
    fn aligned_form(pointer: &PointerBasis, seed: u64) -> SchmidtForm {
        let dims = pointer.dims();
        let mut r = rng(seed);
        let envs = columns(&random_unitary(&mut r, dims.b));
        let weights = random_state(&mut r, dims.rank());
        let mut psi = StateVector::zeros(dims.total());
        for k in 0..dims.rank() {
            psi += tensor_product(&pointer.states()[k], &envs[k]).unwrap() * weights[k];
        }
        schmidt_decompose(&psi, dims).unwrap()
    }

    #[test]
    fn separable_product_keeps_probability() {
        let mut r = rng(1);
        let m =
            build_separable(&random_hermitian(&mut r, 2), &random_hermitian(&mut r, 3)).unwrap();
        let psi = tensor_product(&random_state(&mut r, 2), &random_state(&mut r, 3)).unwrap();
        let form = schmidt_decompose(&psi, m.dims()).unwrap();
        let d = schmidt_rhs(&form, &m).unwrap();
        assert!(d.d_sqrt_p.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn xx_coefficient_rate() {
        let m = xx_model();
        for &t in &[0.2, 0.5, 1.1] {
            let form = schmidt_decompose(&xx_state(t), m.dims()).unwrap();
            let d = schmidt_rhs(&form, &m).unwrap();
            // Branch carrying |00> has sqrt(p) = |cos t|.
            let k = if form.left()[0][0].norm() > 0.5 { 0 } else { 1 };
            let expect = -t.sin() * t.cos().signum();
            assert!((d.d_sqrt_p[k] - expect).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn equal_probabilities_rejected() {
        let m = xx_model();
        let form = schmidt_decompose(&xx_state(std::f64::consts::FRAC_PI_4), m.dims()).unwrap();
        assert!(matches!(
            schmidt_rhs(&form, &m),
            Err(Error::DegenerateSpectrum { .. })
        ));
        // The density flow has no such restriction.
        assert!(reduced_density_flow(&form, &m, Side::Right).is_ok());
    }

    #[test]
    fn normalization_and_schroedinger_consistency() {
        for (seed, (a, b)) in [(2, 3), (3, 3), (4, 2), (3, 5), (5, 3)]
            .into_iter()
            .enumerate()
        {
            let dims = Dims::new(a, b);
            let m = build_random(dims, 0.7, seed as u64).unwrap();
            let form = random_form(dims, 100 + seed as u64);
            let d = schmidt_rhs(&form, &m).unwrap();
            assert!(d.normalization_rate(&form).abs() < 1e-10);
            let psi = form.reconstruct();
            let exact = (m.hamiltonian() * &psi) * minus_i(m.hbar());
            let err = (d.state_derivative(&form) - &exact).norm() / exact.norm();
            assert!(err < 1e-8, "dims {a}x{b}: {err:e}");
        }
    }

    #[test]
    fn hbar_scales_rates() {
        let dims = Dims::new(3, 3);
        let m = build_random(dims, 0.5, 9).unwrap();
        let m2 = m.clone().with_hbar(2.0).unwrap();
        let form = random_form(dims, 10);
        let d1 = schmidt_rhs(&form, &m).unwrap();
        let d2 = schmidt_rhs(&form, &m2).unwrap();
        assert!((d1.d_sqrt_p[0] - 2.0 * d2.d_sqrt_p[0]).abs() < 1e-12);
        let psi = form.reconstruct();
        let exact = (m2.hamiltonian() * &psi) * minus_i(2.0);
        assert!((d2.state_derivative(&form) - exact).norm() < 1e-10);
    }

    #[test]
    fn printed_diagonal_breaks_reconstruction() {
        let dims = Dims::new(3, 3);
        let m = build_random(dims, 0.7, 11).unwrap();
        let form = random_form(dims, 12);
        let opts = RhsOptions {
            diagonal: DiagonalTerm::Printed,
            ..RhsOptions::default()
        };
        let d = schmidt_rhs_with(&form, &m, &opts).unwrap();
        let psi = form.reconstruct();
        let exact = (m.hamiltonian() * &psi) * minus_i(1.0);
        assert!((d.state_derivative(&form) - &exact).norm() / exact.norm() > 1e-3);

        // At p = 1 the two readings coincide.
        let prod = tensor_product(
            &random_state(&mut rng(13), 3),
            &random_state(&mut rng(14), 3),
        )
        .unwrap();
        let pf = schmidt_decompose(&prod, dims).unwrap();
        let a = schmidt_rhs_with(&pf, &m, &opts).unwrap();
        let b = schmidt_rhs(&pf, &m).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn factorized_limit_matches_effective_hamiltonian() {
        for (a, b) in [(3, 3), (2, 4), (4, 2)] {
            let dims = Dims::new(a, b);
            let m = build_random(dims, 0.8, (a * 10 + b) as u64).unwrap();
            let mut r = rng(77);
            let prod = tensor_product(&random_state(&mut r, a), &random_state(&mut r, b)).unwrap();
            let form = schmidt_decompose(&prod, dims).unwrap();
            let d = schmidt_rhs(&form, &m).unwrap();
            let heff = effective_hamiltonian(&m, &form.right()[0]).unwrap();
            let expect = (&heff * &form.left()[0]) * minus_i(1.0);
            assert!((&d.d_left[0] - expect).norm() < 1e-10, "{a}x{b}");
        }
    }

    #[test]
    fn density_flow_matches_commutator() {
        for (seed, (a, b)) in [(3, 3), (2, 4), (4, 3)].into_iter().enumerate() {
            let dims = Dims::new(a, b);
            let m = build_random(dims, 0.6, 20 + seed as u64).unwrap();
            let form = random_form(dims, 30 + seed as u64);
            let psi = form.reconstruct();
            let rho = &psi * psi.adjoint();
            let comm = m.hamiltonian() * &rho - &rho * m.hamiltonian();
            for side in [Side::Left, Side::Right] {
                let traced = crate::linalg::partial_trace_operator(&comm, dims, side).unwrap();
                let flow = reduced_density_flow(&form, &m, side).unwrap();
                assert!(max_abs(&(&flow - &traced)) < 1e-10, "{side:?}");
                // i hbar drho/dt is anti-Hermitian and traceless.
                assert!(max_abs(&(&flow + flow.adjoint())) < 1e-12);
                assert!(flow.trace().norm() < 1e-12);
            }
        }
    }

    #[test]
    fn density_flow_separable_and_stationary() {
        let mut r = rng(40);
        let hb = random_hermitian(&mut r, 3);
        let m = build_separable(&random_hermitian(&mut r, 2), &hb).unwrap();
        let form = random_form(m.dims(), 41);
        let rho = partial_trace(&form.reconstruct(), m.dims(), Side::Right).unwrap();
        let flow = reduced_density_flow(&form, &m, Side::Right).unwrap();
        assert!(max_abs(&(&flow - (&hb * &rho - &rho * &hb))) < 1e-12);

        let eig = crate::linalg::hermitian_eigendecomposition(m.hamiltonian()).unwrap();
        let v = eig.eigenvectors.column(2).into_owned();
        let form = schmidt_decompose(&v, m.dims()).unwrap();
        for side in [Side::Left, Side::Right] {
            assert!(max_abs(&reduced_density_flow(&form, &m, side).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn density_flow_matches_finite_difference() {
        let dims = Dims::new(3, 3);
        let m = build_random(dims, 0.5, 50).unwrap();
        let psi0 = random_state(&mut rng(51), 9);
        let prop = Propagator::new(m.hamiltonian(), 1.0).unwrap();
        let (t, dt) = (0.4, 1e-4);
        let rho_at = |s: f64| partial_trace(&prop.apply(s, &psi0), dims, Side::Right).unwrap();
        let fd = (rho_at(t + dt) - rho_at(t - dt)) / C64::new(2.0 * dt, 0.0);
        let form = schmidt_decompose(&prop.apply(t, &psi0), dims).unwrap();
        let flow = reduced_density_flow(&form, &m, Side::Right).unwrap() * minus_i(1.0);
        assert!(max_abs(&(flow - fd)) < 1e-6);
    }

    #[test]
    fn effective_hamiltonian_examples() {
        let mut r = rng(60);
        let (a, b) = (random_hermitian(&mut r, 2), random_hermitian(&mut r, 3));
        let big = random_state(&mut r, 3);
        let eb = inner(&big, &(&b * &big));
        let prod = BipartiteModel::new(Dims::new(2, 3), kron(&a, &b)).unwrap();
        let h = effective_hamiltonian(&prod, &big).unwrap();
        assert!(max_abs(&(h - &a * eb)) < 1e-12);

        let sep = build_separable(&a, &b).unwrap();
        let h = effective_hamiltonian(&sep, &big).unwrap();
        let expect = &a + ComplexMatrix::identity(2, 2) * eb;
        assert!(max_abs(&(&h - expect)) < 1e-12);

        let rm = build_random(Dims::new(3, 4), 1.0, 61).unwrap();
        let h = effective_hamiltonian(&rm, &random_state(&mut r, 4)).unwrap();
        assert!(max_abs(&(&h - h.adjoint())) < 1e-12);

        assert!(matches!(
            effective_hamiltonian(&rm, &(random_state(&mut r, 4) * C64::new(2.0, 0.0))),
            Err(Error::NotNormalized { .. })
        ));
        assert!(effective_hamiltonian(&rm, &random_state(&mut r, 3)).is_err());
    }

    #[test]
    fn stable_branches_keep_probability_and_match_full_rhs() {
        for (seed, (a, b)) in [(3, 3), (2, 4), (4, 2), (3, 5)].into_iter().enumerate() {
            let pointer = PointerBasis::random(Dims::new(a, b), 1.0, 70 + seed as u64);
            let m = build_measurement(&pointer).unwrap();
            let form = aligned_form(&pointer, 80 + seed as u64);
            let stable = stable_branch_rhs(&form, &pointer, &m).unwrap();
            assert!(stable.d_sqrt_p.iter().all(|x| x.abs() <= 1e-10));
            let full = schmidt_rhs(&form, &m).unwrap();
            let diff = stable.max_abs_diff(&full);
            assert!(diff < 1e-8, "{a}x{b}: {diff:e}");
        }
    }

    #[test]
    fn printed_stable_reduction_disagrees() {
        let pointer = PointerBasis::random(Dims::new(3, 3), 1.0, 90);
        let m = build_measurement(&pointer).unwrap();
        let form = aligned_form(&pointer, 91);
        let opts = RhsOptions {
            diagonal: DiagonalTerm::Printed,
            ..RhsOptions::default()
        };
        let printed = stable_branch_rhs_with(&form, &pointer, &m, &opts).unwrap();
        let full = schmidt_rhs(&form, &m).unwrap();
        assert!(printed.max_abs_diff(&full) > 1e-3);
    }

    #[test]
    fn common_conditional_hamiltonian_rotates_environment_only() {
        let hb = random_hermitian(&mut rng(95), 3);
        let pointer = PointerBasis::computational(vec![hb.clone(); 3]).unwrap();
        let m = build_measurement(&pointer).unwrap();
        let form = aligned_form(&pointer, 96);
        let d = stable_branch_rhs(&form, &pointer, &m).unwrap();
        for i in 0..3 {
            let big = &form.right()[i];
            let e = inner(big, &(&hb * big));
            let expect = (&hb * big - big * e) * minus_i(1.0);
            assert!((&d.d_right[i] - expect).norm() < 1e-12);
            // The energy shift sits on phi, so the product follows H exactly.
            let full =
                (&d.d_left[i] * big.transpose()) + (&form.left()[i] * d.d_right[i].transpose());
            let want = (&form.left()[i] * (&hb * big).transpose()) * minus_i(1.0);
            assert!(max_abs(&(full - want)) < 1e-12);
        }
    }

    #[test]
    fn unaligned_form_is_rejected() {
        let pointer = PointerBasis::computational(vec![pauli::z(), pauli::x()]).unwrap();
        let m = build_measurement(&pointer).unwrap();
        let form = random_form(Dims::new(2, 2), 97);
        assert!(matches!(
            stable_branch_rhs(&form, &pointer, &m),
            Err(Error::NotAligned { .. })
        ));
    }

    fn fidelities(m: &BipartiteModel, psi0: &StateVector, out: &IntegrationOutcome) -> Vec<f64> {
        let t0 = out.trajectory.times[0];
        let prop = Propagator::new(m.hamiltonian(), m.hbar()).unwrap();
        out.trajectory
            .forms
            .iter()
            .zip(&out.trajectory.times)
            .map(|(f, &t)| inner(&f.reconstruct(), &prop.apply(t - t0, psi0)).norm())
            .collect()
    }

    #[test]
    fn integrator_factorized_separable() {
        let mut r = rng(100);
        let (ha, hb) = (random_hermitian(&mut r, 2), random_hermitian(&mut r, 3));
        let m = build_separable(&ha, &hb).unwrap();
        let (phi, big) = (random_state(&mut r, 2), random_state(&mut r, 3));
        let psi0 = tensor_product(&phi, &big).unwrap();
        let form0 = schmidt_decompose(&psi0, m.dims()).unwrap();
        let times = uniform_grid(0.0, 2.0, 21);
        let out = integrate_schmidt(&m, &form0, &times, &IntegratorOptions::default()).unwrap();
        assert!(out.windows.is_empty());
        let heff = effective_hamiltonian(&m, &form0.right()[0]).unwrap();
        let prop_a = Propagator::new(&heff, 1.0).unwrap();
        for (k, f) in out.trajectory.forms.iter().enumerate() {
            assert!((f.probabilities()[0] - 1.0).abs() < 1e-9);
            let want = prop_a.apply(times[k], &form0.left()[0]);
            assert!(inner(&want, &f.left()[0]).norm() > 1.0 - 1e-9);
        }
        assert!(fidelities(&m, &psi0, &out).iter().all(|&f| f > 1.0 - 1e-9));
    }

    #[test]
    fn integrator_xx_tracks_closed_form() {
        let m = xx_model();
        let form0 = schmidt_decompose(&xx_state(0.1), m.dims()).unwrap();
        let times = uniform_grid(0.1, 1.4, 131);
        let out = integrate_schmidt(&m, &form0, &times, &IntegratorOptions::default()).unwrap();
        assert_eq!(out.trajectory.len(), times.len());
        let p = out.trajectory.probability_series(0);
        for (t, pk) in times.iter().zip(&p) {
            assert!((pk - t.cos().powi(2)).abs() < 1e-8, "t={t}: {pk}");
        }
    }

    #[test]
    fn integrator_branches_out_of_product_state() {
        let m = xx_model();
        let form0 = schmidt_decompose(&xx_state(0.0), m.dims()).unwrap();
        let times = uniform_grid(0.0, 2.0, 81);
        let out = integrate_schmidt(&m, &form0, &times, &IntegratorOptions::default()).unwrap();
        assert_eq!(out.trajectory.len(), times.len());
        // Birth at t = 0 and the return of branch 0 to zero at pi/2.
        assert_eq!(out.windows.len(), 2);
        assert!(out.windows.iter().all(|w| w.kind == WindowKind::Occupation));
        assert!(out.windows[1].contains(std::f64::consts::FRAC_PI_2));
        let p = out.trajectory.probability_series(0);
        for (t, pk) in times.iter().zip(&p) {
            assert!((pk - t.cos().powi(2)).abs() < 1e-8, "t={t}: {pk}");
        }
    }

    #[test]
    fn integrator_random_model_fidelity() {
        let dims = Dims::new(3, 3);
        let m = build_random(dims, 1.0, 110).unwrap();
        let psi0 = random_state(&mut rng(111), 9);
        let form0 = schmidt_decompose(&psi0, dims).unwrap();
        let times = uniform_grid(0.0, 1.0, 21);
        let out = integrate_schmidt(&m, &form0, &times, &IntegratorOptions::default()).unwrap();
        let exact = evolve_exact(&m, &psi0, &times).unwrap();
        for (f, e) in out.trajectory.forms.iter().zip(&exact) {
            assert!(inner(&f.reconstruct(), e).norm() >= 1.0 - 1e-6);
        }
    }

    #[test]
    fn narrow_resonance_halts_or_bridges() {
        let fam = crate::model::CrossingFamily::from_seed(3);
        let m = fam.model(1e-8).unwrap();
        let psi_start = Propagator::new(m.hamiltonian(), 1.0)
            .unwrap()
            .apply(0.1, &fam.initial_state());
        let form0 = schmidt_decompose(&psi_start, m.dims()).unwrap();
        let times = uniform_grid(0.1, fam.window() * 1.5, 61);

        let halt = IntegratorOptions {
            on_resonance: OnResonance::Halt,
            ..IntegratorOptions::default()
        };
        let out = integrate_schmidt(&m, &form0, &times, &halt).unwrap();
        let t = out.halted_at.expect("gap closes below eps_gap");
        assert!(out.trajectory.len() < times.len());
        assert_eq!(out.trajectory.events.len(), 1);
        assert!(t > 0.1 && t < 0.1 + fam.window());

        let out = integrate_schmidt(&m, &form0, &times, &IntegratorOptions::default()).unwrap();
        assert!(!out.windows.is_empty());
        assert_eq!(out.windows.len(), out.trajectory.events.len());
        assert_eq!(out.trajectory.len(), times.len());
        assert!(fidelities(&m, &psi_start, &out)
            .iter()
            .all(|&f| f > 1.0 - 1e-6));
    }

    #[test]
    fn integrator_rejects_bad_input() {
        let m = xx_model();
        let form0 = schmidt_decompose(&xx_state(0.1), m.dims()).unwrap();
        let bad = IntegratorOptions {
            min_step: 1.0,
            max_step: 0.5,
            ..IntegratorOptions::default()
        };
        assert!(integrate_schmidt(&m, &form0, &[0.0, 1.0], &bad).is_err());
        assert!(integrate_schmidt(&m, &form0, &[1.0, 0.0], &IntegratorOptions::default()).is_err());
        let deg = schmidt_decompose(&xx_state(std::f64::consts::FRAC_PI_4), m.dims()).unwrap();
        assert!(matches!(
            integrate_schmidt(&m, &deg, &[0.0, 1.0], &IntegratorOptions::default()),
            Err(Error::DegenerateSpectrum { .. })
        ));
    }
}
