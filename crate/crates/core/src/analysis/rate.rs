use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    check_basis, check_hermitian, check_normalized, inner, partial_inner_left, schmidt_decompose,
    tensor_product, ComplexMatrix, Propagator, StateVector, C64, EPS_RANK,
};
use crate::model::{build_measurement, BipartiteModel, PointerBasis};

/// `A = sum_{j != i, j' != i} |<phi_j Phi_j'|H|phi_i Phi_i>|^2`, the
/// second-order rate at which `phi_i (x) Phi_i` entangles.
pub fn deseparation_rate(
    model: &BipartiteModel,
    phi_basis: &[StateVector],
    big_basis: &[StateVector],
    i: usize,
) -> Result<f64> {
    let dims = model.dims();
    check_basis(phi_basis, dims.a)?;
    check_basis(big_basis, dims.b)?;
    if i >= dims.a.min(dims.b) {
        return Err(Error::InvalidArgument(format!(
            "target index {i} outside both bases"
        )));
    }
    let v = model.hamiltonian() * tensor_product(&phi_basis[i], &big_basis[i])?;
    let mut a = 0.0;
    for (j, phi) in phi_basis.iter().enumerate() {
        if j == i {
            continue;
        }
        let x = partial_inner_left(phi, &v, dims);
        for (k, big) in big_basis.iter().enumerate() {
            if k != i {
                a += inner(big, &x).norm_sqr();
            }
        }
    }
    Ok(a)
}

/// The same rate through projectors: `|| (P_perp (x) P_perp) H (phi (x) Phi) ||^2`
/// with `P_perp` the complement of the factor state on each side.
pub fn product_deseparation_rate(
    model: &BipartiteModel,
    phi: &StateVector,
    big_phi: &StateVector,
) -> Result<f64> {
    let dims = model.dims();
    check_normalized(phi)?;
    check_normalized(big_phi)?;
    let v = model.hamiltonian() * tensor_product(phi, big_phi)?;
    let pa = ComplexMatrix::identity(dims.a, dims.a) - phi * phi.adjoint();
    let pb = ComplexMatrix::identity(dims.b, dims.b) - big_phi * big_phi.adjoint();
    let w = crate::linalg::kron(&pa, &pb) * v;
    Ok(w.norm_squared())
}

/// `|| P_perp (H_i - H_j) Phi ||^2 / 2` with `P_perp = 1 - |Phi><Phi|`,
/// evaluated exactly in this form.
pub fn deseparation_rate_superposition(
    h_i: &ComplexMatrix,
    h_j: &ComplexMatrix,
    big_phi: &StateVector,
) -> Result<f64> {
    check_hermitian(h_i)?;
    check_hermitian(h_j)?;
    if h_i.shape() != h_j.shape() || h_i.nrows() != big_phi.len() {
        return Err(Error::dims(
            "conditional Hamiltonians and state differ in size",
        ));
    }
    check_normalized(big_phi)?;
    let v = (h_i - h_j) * big_phi;
    let perp = &v - big_phi * inner(big_phi, &v);
    Ok(perp.norm_squared() / 2.0)
}

/// Least-squares coefficient `a` of `1 - p_max(t) ~ a t^2 + b t^3 + c t^4`
/// on `n_points` equally spaced times in `(0, t_max]`, from exact evolution
/// of a product state. `1 - p_max` is summed from the minor probabilities so
/// it keeps full relative precision.
pub fn quadratic_growth_fit(
    model: &BipartiteModel,
    psi0: &StateVector,
    t_max: f64,
    n_points: usize,
) -> Result<f64> {
    let dims = model.dims();
    dims.check_state(psi0)?;
    check_normalized(psi0)?;
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidArgument("t_max must be > 0".into()));
    }
    if n_points < 3 {
        return Err(Error::InvalidArgument("need at least 3 fit points".into()));
    }
    let p0 = schmidt_decompose(psi0, dims)?.probabilities();
    if p0.iter().skip(1).sum::<f64>() > EPS_RANK {
        return Err(Error::InvalidArgument(
            "initial state is not a product state".into(),
        ));
    }
    let prop = Propagator::new(model.hamiltonian(), model.hbar())?;
    let mut design = DMatrix::<f64>::zeros(n_points, 3);
    let mut rhs = DVector::<f64>::zeros(n_points);
    for k in 0..n_points {
        let tau = (k + 1) as f64 / n_points as f64;
        let psi = prop.apply(tau * t_max, psi0);
        let psi = psi.unscale(psi.norm());
        let p = schmidt_decompose(&psi, dims)?.probabilities();
        rhs[k] = p.iter().skip(1).sum();
        for (col, pow) in [2, 3, 4].into_iter().enumerate() {
            design[(k, col)] = tau.powi(pow);
        }
    }
    let coef = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::InvalidArgument(format!("growth fit failed: {e}")))?;
    Ok(coef[0] / (t_max * t_max))
}

/// Printed superposition form next to the rate of the same physical setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionRate {
    /// `|| P_perp (H_i - H_j) Phi ||^2 / 2`.
    pub printed: f64,
    /// Product-state rate of `(phi_0 + phi_1)/sqrt(2) (x) Phi` under
    /// `|0><0| (x) H_i + |1><1| (x) H_j`.
    pub direct: f64,
    /// `hbar^2` times the growth-fit coefficient for the same state.
    pub growth: f64,
    /// `printed / growth`, absent when the growth vanishes.
    pub ratio: Option<f64>,
}

/// Evaluate the printed superposition form and both independent values of
/// the rate for `psi = (phi_0 + phi_1) Phi / sqrt(2)` under the two-pointer
/// measurement Hamiltonian built from `h_i`, `h_j`.
pub fn superposition_rate_check(
    h_i: &ComplexMatrix,
    h_j: &ComplexMatrix,
    big_phi: &StateVector,
    hbar: f64,
) -> Result<SuperpositionRate> {
    let printed = deseparation_rate_superposition(h_i, h_j, big_phi)?;
    let pointer = PointerBasis::computational(vec![h_i.clone(), h_j.clone()])?;
    let model = build_measurement(&pointer)?.with_hbar(hbar)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let phi = StateVector::from_vec(vec![C64::new(s, 0.0), C64::new(s, 0.0)]);
    let direct = product_deseparation_rate(&model, &phi, big_phi)?;
    let psi0 = tensor_product(&phi, big_phi)?;
    let t_max = default_fit_window(&model)?;
    let growth = quadratic_growth_fit(&model, &psi0, t_max, 12)? * hbar * hbar;
    let ratio = (growth > 1e-12).then(|| printed / growth);
    Ok(SuperpositionRate {
        printed,
        direct,
        growth,
        ratio,
    })
}

/// Fit window used by callers that do not pick their own: `0.01 hbar / ||H||`.
pub fn default_fit_window(model: &BipartiteModel) -> Result<f64> {
    let norm = Propagator::new(model.hamiltonian(), model.hbar())?.spectral_radius();
    Ok(if norm > 0.0 {
        0.01 * model.hbar() / norm
    } else {
        1.0
    })
}
