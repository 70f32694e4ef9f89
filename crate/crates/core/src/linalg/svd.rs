//! One-sided (Hestenes) Jacobi SVD for small dense complex matrices.
//!
//! Column pairs are rotated until mutually orthogonal; the column norms are
//! then the singular values. This keeps small singular values accurate
//! relative to their own size, which matters for nearly unentangled states.

use super::{inner, ComplexMatrix, StateVector, C64};

const MAX_SWEEPS: usize = 80;

/// Thin SVD `M = U diag(s) V^dagger` with `k = min(rows, cols)` triplets.
#[derive(Debug, Clone)]
pub struct Svd {
    /// Descending, non-negative.
    pub singular_values: Vec<f64>,
    /// `rows x k`, orthonormal columns.
    pub u: ComplexMatrix,
    /// `cols x k`, orthonormal columns.
    pub v: ComplexMatrix,
}

pub fn jacobi_svd(m: &ComplexMatrix) -> Svd {
    let (rows, cols) = m.shape();
    if rows < cols {
        let t = jacobi_svd_tall(&m.adjoint());
        return Svd {
            singular_values: t.singular_values,
            u: t.v,
            v: t.u,
        };
    }
    jacobi_svd_tall(m)
}

fn jacobi_svd_tall(m: &ComplexMatrix) -> Svd {
    let (rows, cols) = m.shape();
    let mut w = m.clone();
    let mut v = ComplexMatrix::identity(cols, cols);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma: C64 = w.column(p).dotc(&w.column(q));
                let g = gamma.norm();
                if g == 0.0 || g <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate(&mut w, p, q, cs, sn, phase);
                rotate(&mut v, p, q, cs, sn, phase);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..cols).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let scale = norms.iter().cloned().fold(0.0, f64::max);
    let mut us: Vec<StateVector> = Vec::with_capacity(cols);
    for &j in &order {
        let candidate = if norms[j] > f64::MIN_POSITIVE && norms[j] > 1e-300 * scale {
            Some(w.column(j).into_owned() / C64::new(norms[j], 0.0))
        } else {
            None
        };
        us.push(orthonormal_extension(&us, rows, candidate));
    }
    let vs: Vec<StateVector> = order.iter().map(|&j| v.column(j).into_owned()).collect();
    Svd {
        singular_values: order.iter().map(|&j| norms[j]).collect(),
        u: ComplexMatrix::from_columns(&us),
        v: ComplexMatrix::from_columns(&vs),
    }
}

/// Columns `(p, q) <- (c a_p - s a_q', s a_p + c a_q')` with `a_q' = conj(phase) a_q`.
fn rotate(m: &mut ComplexMatrix, p: usize, q: usize, cs: f64, sn: f64, phase: C64) {
    let pc = phase.conj();
    for r in 0..m.nrows() {
        let ap = m[(r, p)];
        let aq = m[(r, q)] * pc;
        m[(r, p)] = ap * cs - aq * sn;
        m[(r, q)] = ap * sn + aq * cs;
    }
}

/// A unit vector orthogonal to `existing`, close to `candidate` when one is
/// given and numerically usable, otherwise the first computational basis
/// vector with a usable orthogonal residual.
pub(crate) fn orthonormal_extension(
    existing: &[StateVector],
    dim: usize,
    candidate: Option<StateVector>,
) -> StateVector {
    let project_out = |mut x: StateVector| {
        for _ in 0..2 {
            for q in existing {
                let proj = inner(q, &x);
                x -= q * proj;
            }
        }
        x
    };
    if let Some(c) = candidate {
        let x = project_out(c);
        let n = x.norm();
        if n > 0.5 {
            return x / C64::new(n, 0.0);
        }
    }
    let mut best: Option<(f64, StateVector)> = None;
    for k in 0..dim {
        let x = project_out(super::basis_state(dim, k));
        let n = x.norm();
        if n > 0.5 {
            return x / C64::new(n, 0.0);
        }
        if best.as_ref().is_none_or(|(bn, _)| n > *bn) {
            best = Some((n, x));
        }
    }
    let (n, x) = best.expect("dimension must be positive");
    x / C64::new(n, 0.0)
}
