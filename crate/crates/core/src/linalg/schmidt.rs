use std::cmp::Ordering;

use super::svd::jacobi_svd;
use super::{
    amplitude_matrix, check_normalized, orthonormality_deviation, tensor_product, Dims,
    StateVector, C64, EPS_DEG, EPS_RANK,
};
use crate::error::{Error, Result};

/// One instant's Schmidt decomposition `psi = sum_i sqrt(p_i) phi_i (x) Phi_i`.
///
/// The form always carries `min(dA, dB)` branches, including unoccupied ones
/// (`p_i = 0`) whose factor states complete the orthonormal sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtForm {
    dims: Dims,
    coeffs: Vec<f64>,
    left: Vec<StateVector>,
    right: Vec<StateVector>,
}

impl SchmidtForm {
    /// Assemble a form from raw parts. Only shapes are checked; use
    /// [`SchmidtForm::validate`] for the orthonormality and normalization
    /// invariants.
    pub fn from_parts(
        dims: Dims,
        coeffs: Vec<f64>,
        left: Vec<StateVector>,
        right: Vec<StateVector>,
    ) -> Result<Self> {
        let r = dims.rank();
        if coeffs.len() != r || left.len() != r || right.len() != r {
            return Err(Error::dims(format!(
                "expected {r} branches, got {}/{}/{}",
                coeffs.len(),
                left.len(),
                right.len()
            )));
        }
        if left.iter().any(|v| v.len() != dims.a) || right.iter().any(|v| v.len() != dims.b) {
            return Err(Error::dims("factor state length does not match dims"));
        }
        Ok(SchmidtForm {
            dims,
            coeffs,
            left,
            right,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn branch_count(&self) -> usize {
        self.coeffs.len()
    }

    /// `sqrt(p_i)` per branch.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.coeffs.iter().map(|s| s * s).collect()
    }

    /// `phi_i`.
    pub fn left(&self) -> &[StateVector] {
        &self.left
    }

    /// `Phi_i`.
    pub fn right(&self) -> &[StateVector] {
        &self.right
    }

    /// Number of branches with `p_i > EPS_RANK`.
    pub fn rank(&self) -> usize {
        self.coeffs.iter().filter(|s| *s * *s > EPS_RANK).count()
    }

    pub fn reconstruct(&self) -> StateVector {
        let mut psi = StateVector::zeros(self.dims.total());
        let db = self.dims.b;
        for ((s, phi), big) in self.coeffs.iter().zip(&self.left).zip(&self.right) {
            if *s == 0.0 {
                continue;
            }
            for ia in 0..self.dims.a {
                let w = phi[ia] * *s;
                for ib in 0..db {
                    psi[ia * db + ib] += w * big[ib];
                }
            }
        }
        psi
    }

    /// `phi_i (x) Phi_i`.
    pub fn product_state(&self, i: usize) -> StateVector {
        tensor_product(&self.left[i], &self.right[i]).expect("non-empty factors")
    }

    /// Pairs of branches whose probabilities differ by less than `EPS_DEG`.
    pub fn degenerate_pairs(&self) -> Vec<(usize, usize)> {
        let p = self.probabilities();
        let mut out = Vec::new();
        for i in 0..p.len() {
            for j in (i + 1)..p.len() {
                if (p[i] - p[j]).abs() < EPS_DEG {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Smallest `|p_i - p_j|` over pairs of occupied branches.
    pub fn min_gap(&self) -> Option<(usize, usize, f64)> {
        let p = self.probabilities();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..p.len() {
            for j in (i + 1)..p.len() {
                if p[i] <= EPS_RANK || p[j] <= EPS_RANK {
                    continue;
                }
                let g = (p[i] - p[j]).abs();
                if best.is_none_or(|b| g < b.2) {
                    best = Some((i, j, g));
                }
            }
        }
        best
    }

    /// Check the form's invariants at tolerance `tol`, optionally against a
    /// source state.
    pub fn validate(&self, tol: f64, source: Option<&StateVector>) -> Result<()> {
        let total: f64 = self.probabilities().iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::NotNormalized { norm: total.sqrt() });
        }
        if self.coeffs.iter().any(|s| *s < 0.0) {
            return Err(Error::InvalidArgument(
                "negative Schmidt coefficient".into(),
            ));
        }
        if self.coeffs.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "coefficients not sorted descending".into(),
            ));
        }
        let dl = orthonormality_deviation(&self.left);
        let dr = orthonormality_deviation(&self.right);
        if dl > tol || dr > tol {
            return Err(Error::IncompleteBasis(format!(
                "factor states not orthonormal (left {dl:e}, right {dr:e})"
            )));
        }
        if let Some(psi) = source {
            let err = (self.reconstruct() - psi).norm();
            if err > tol {
                return Err(Error::InvalidArgument(format!(
                    "reconstruction error {err:e} exceeds {tol:e}"
                )));
            }
        }
        Ok(())
    }

    /// Flip negative coefficients into their left factor and sort branches by
    /// descending probability. Returns the permutation applied: entry `k` is
    /// the old index of the branch now at position `k`.
    pub fn canonicalize(&mut self) -> Vec<usize> {
        for (s, phi) in self.coeffs.iter_mut().zip(self.left.iter_mut()) {
            if *s < 0.0 {
                *s = -*s;
                *phi = -phi.clone();
            }
        }
        let order = sort_order(&self.coeffs, &self.left);
        self.permute(&order);
        order
    }

    fn permute(&mut self, order: &[usize]) {
        self.coeffs = order.iter().map(|&k| self.coeffs[k]).collect();
        self.left = order.iter().map(|&k| self.left[k].clone()).collect();
        self.right = order.iter().map(|&k| self.right[k].clone()).collect();
    }

    /// Multiply `phi_i` by `phase` and `Phi_i` by its conjugate; the branch
    /// term is unchanged.
    pub fn rephase(&mut self, i: usize, phase: C64) {
        self.left[i] *= phase;
        self.right[i] *= phase.conj();
    }
}

/// Descending by coefficient; within runs of near-equal probabilities
/// (`|p_i - p_j| < EPS_DEG`) descending lexicographic on the `phi` amplitudes.
fn sort_order(coeffs: &[f64], left: &[StateVector]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..coeffs.len()).collect();
    order.sort_by(|&a, &b| coeffs[b].total_cmp(&coeffs[a]).then(a.cmp(&b)));
    let p: Vec<f64> = order.iter().map(|&k| coeffs[k] * coeffs[k]).collect();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && (p[end - 1] - p[end]).abs() < EPS_DEG {
            end += 1;
        }
        order[start..end].sort_by(|&a, &b| lex_cmp(&left[b], &left[a]));
        start = end;
    }
    order
}

fn lex_cmp(a: &StateVector, b: &StateVector) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let o = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

/// Rotate the joint phase so the largest-magnitude amplitude of `phi` is real
/// positive (first such index on ties).
fn fix_gauge(phi: &mut StateVector, big_phi: &mut StateVector) {
    let max = phi.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let k = phi
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-12))
        .expect("max is attained");
    let phase = phi[k] / phi[k].norm();
    *phi *= phase.conj();
    *big_phi *= phase;
}

/// Schmidt decomposition of a normalized bipartite state.
///
/// Coefficients are real, non-negative and sorted descending; each pair
/// `(phi_i, Phi_i)` is gauge-fixed so that the largest amplitude of `phi_i`
/// is real positive.
pub fn schmidt_decompose(psi: &StateVector, dims: Dims) -> Result<SchmidtForm> {
    dims.check_state(psi)?;
    check_normalized(psi)?;
    let m = amplitude_matrix(psi, dims)?;
    let svd = jacobi_svd(&m);
    let r = dims.rank();
    let mut left = Vec::with_capacity(r);
    let mut right = Vec::with_capacity(r);
    for k in 0..r {
        let mut phi = svd.u.column(k).into_owned();
        let mut big = svd.v.column(k).map(|z| z.conj());
        fix_gauge(&mut phi, &mut big);
        left.push(phi);
        right.push(big);
    }
    let mut form = SchmidtForm {
        dims,
        coeffs: svd.singular_values.clone(),
        left,
        right,
    };
    let order = sort_order(&form.coeffs, &form.left);
    form.permute(&order);
    Ok(form)
}
