use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    check_normalized, inner, partial_inner_left, partial_inner_right, ComplexMatrix, SchmidtForm,
    Side, StateVector, C64, EPS_RANK,
};
use crate::model::{BipartiteModel, PointerBasis};

/// Default resonance guard on `|p_i - p_j|`.
pub const DEFAULT_EPS_GAP: f64 = 1e-6;

/// Minimum `|<pointer|phi_i>|` for a branch to count as aligned.
pub const ALIGNMENT_TOL: f64 = 1e-8;

/// Which gauge term sits on the diagonal of the `phi` equation.
///
/// `Consistent` uses `Re<phi_i Phi_i|H|psi> / sqrt(p_i)`, the only choice for
/// which the reconstructed state obeys the Schrödinger equation. `Printed`
/// multiplies by `sqrt(p_i)` instead; it agrees with `Consistent` only for
/// `p_i = 1` and is kept for comparison. In the stable-branch reduction
/// `Printed` also restores the `(H^(i) - H^(j))` ordering and the `p_i`
/// factor on the diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalTerm {
    #[default]
    Consistent,
    Printed,
}

/// Knobs shared by the right-hand sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhsOptions {
    pub eps_gap: f64,
    pub diagonal: DiagonalTerm,
}

impl Default for RhsOptions {
    fn default() -> Self {
        RhsOptions {
            eps_gap: DEFAULT_EPS_GAP,
            diagonal: DiagonalTerm::Consistent,
        }
    }
}

/// Time derivatives of `sqrt(p_i)`, `phi_i` and `Phi_i`, branch by branch.
#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtDerivative {
    pub d_sqrt_p: Vec<f64>,
    pub d_left: Vec<StateVector>,
    pub d_right: Vec<StateVector>,
}

impl SchmidtDerivative {
    /// `sum_i 2 sqrt(p_i) d sqrt(p_i)/dt`, zero when the norm is conserved.
    pub fn normalization_rate(&self, form: &SchmidtForm) -> f64 {
        form.coeffs()
            .iter()
            .zip(&self.d_sqrt_p)
            .map(|(s, d)| 2.0 * s * d)
            .sum()
    }

    /// `d/dt sum_i sqrt(p_i) phi_i (x) Phi_i` by the product rule.
    pub fn state_derivative(&self, form: &SchmidtForm) -> StateVector {
        let dims = form.dims();
        let mut out = StateVector::zeros(dims.total());
        for i in 0..form.branch_count() {
            let s = form.coeffs()[i];
            let (phi, big) = (&form.left()[i], &form.right()[i]);
            let (dphi, dbig) = (&self.d_left[i], &self.d_right[i]);
            for ia in 0..dims.a {
                for ib in 0..dims.b {
                    out[ia * dims.b + ib] += phi[ia] * big[ib] * self.d_sqrt_p[i]
                        + (dphi[ia] * big[ib] + phi[ia] * dbig[ib]) * s;
                }
            }
        }
        out
    }

    /// Largest componentwise difference to another derivative.
    pub fn max_abs_diff(&self, other: &SchmidtDerivative) -> f64 {
        let mut m: f64 = 0.0;
        for (a, b) in self.d_sqrt_p.iter().zip(&other.d_sqrt_p) {
            m = m.max((a - b).abs());
        }
        for (a, b) in self
            .d_left
            .iter()
            .zip(&other.d_left)
            .chain(self.d_right.iter().zip(&other.d_right))
        {
            m = m.max((a - b).iter().fold(0.0, |acc: f64, z| acc.max(z.norm())));
        }
        m
    }
}

fn occupied(s: f64) -> bool {
    s * s > EPS_RANK
}

fn check_form(form: &SchmidtForm, model: &BipartiteModel) -> Result<()> {
    if form.dims() != model.dims() {
        return Err(Error::dims(format!(
            "form is {:?}, model is {:?}",
            form.dims(),
            model.dims()
        )));
    }
    Ok(())
}

fn check_gaps(form: &SchmidtForm, eps_gap: f64) -> Result<()> {
    match form.min_gap() {
        Some((a, b, gap)) if gap < eps_gap => Err(Error::DegenerateSpectrum { a, b, gap }),
        _ => Ok(()),
    }
}

/// `-i/hbar` times each vector.
fn to_rate(v: Vec<StateVector>, hbar: f64) -> Vec<StateVector> {
    let f = C64::new(0.0, -1.0 / hbar);
    v.into_iter().map(|x| x * f).collect()
}

/// Right-hand side of the Schmidt equations of motion with default options.
pub fn schmidt_rhs(form: &SchmidtForm, model: &BipartiteModel) -> Result<SchmidtDerivative> {
    schmidt_rhs_with(form, model, &RhsOptions::default())
}

/// Right-hand side of the Schmidt equations of motion.
///
/// With `h_jl = <phi_j Phi_l|H|psi>`:
///
/// ```text
/// hbar d sqrt(p_i) = Im h_ii
/// i hbar dPhi_i = sum_{j != i} (s_i h_ij - s_j conj(h_ji)) / (p_i - p_j) Phi_j
/// i hbar dphi_i = sum_{j != i} (s_i h_ji - s_j conj(h_ij)) / (p_i - p_j) phi_j
///                 + Re h_ii / s_i phi_i
/// ```
///
/// When one factor space is larger than the number of branches, the part of
/// `<phi_i|H|psi>` (or `<Phi_i|H|psi>`) outside the span of the branch
/// states adds `P_perp <.|H|psi> / s_i`, the `p_j = 0` limit of the sums.
/// Unoccupied branches keep their coefficient equation and their rotation
/// against occupied ones, which preserves orthonormality; the diagonal gauge
/// term and rotations among unoccupied branches are zero.
pub fn schmidt_rhs_with(
    form: &SchmidtForm,
    model: &BipartiteModel,
    opts: &RhsOptions,
) -> Result<SchmidtDerivative> {
    check_form(form, model)?;
    check_gaps(form, opts.eps_gap)?;
    let dims = form.dims();
    let r = form.branch_count();
    let s = form.coeffs();
    let p = form.probabilities();
    let (phi, big) = (form.left(), form.right());
    let hpsi = model.hamiltonian() * form.reconstruct();

    let x: Vec<StateVector> = phi
        .iter()
        .map(|v| partial_inner_left(v, &hpsi, dims))
        .collect();
    let h: Vec<Vec<C64>> = x
        .iter()
        .map(|xj| big.iter().map(|bl| inner(bl, xj)).collect())
        .collect();

    let hbar = model.hbar();
    let d_sqrt_p: Vec<f64> = (0..r).map(|i| h[i][i].im / hbar).collect();

    let mut d_right = Vec::with_capacity(r);
    let mut d_left = Vec::with_capacity(r);
    for i in 0..r {
        let occ_i = occupied(s[i]);
        let mut dr = StateVector::zeros(dims.b);
        let mut dl = StateVector::zeros(dims.a);
        for j in 0..r {
            if j == i || (!occ_i && !occupied(s[j])) {
                continue;
            }
            let den = p[i] - p[j];
            let nr = h[i][j] * s[i] - h[j][i].conj() * s[j];
            let nl = h[j][i] * s[i] - h[i][j].conj() * s[j];
            dr += &big[j] * (nr / den);
            dl += &phi[j] * (nl / den);
        }
        if occ_i {
            let diag = match opts.diagonal {
                DiagonalTerm::Consistent => h[i][i].re / s[i],
                DiagonalTerm::Printed => h[i][i].re * s[i],
            };
            dl += &phi[i] * C64::new(diag, 0.0);
            if dims.b > r {
                let mut perp = x[i].clone();
                for l in 0..r {
                    perp -= &big[l] * h[i][l];
                }
                dr += perp / C64::new(s[i], 0.0);
            }
            if dims.a > r {
                let mut perp = partial_inner_right(&big[i], &hpsi, dims);
                for l in 0..r {
                    perp -= &phi[l] * h[l][i];
                }
                dl += perp / C64::new(s[i], 0.0);
            }
        }
        d_right.push(dr);
        d_left.push(dl);
    }
    Ok(SchmidtDerivative {
        d_sqrt_p,
        d_left: to_rate(d_left, hbar),
        d_right: to_rate(d_right, hbar),
    })
}

/// `i hbar drho/dt` for the reduced density matrix of one side.
///
/// Written through the Schmidt factors as
/// `sum_k s_k (|<phi_k|H|psi>><Phi_k| - h.c.)` for the environment and the
/// mirror expression for the system; no probability differences appear, so
/// the result is regular at resonances.
pub fn reduced_density_flow(
    form: &SchmidtForm,
    model: &BipartiteModel,
    side: Side,
) -> Result<ComplexMatrix> {
    check_form(form, model)?;
    let dims = form.dims();
    let hpsi = model.hamiltonian() * form.reconstruct();
    let n = match side {
        Side::Left => dims.a,
        Side::Right => dims.b,
    };
    let mut out = ComplexMatrix::zeros(n, n);
    for k in 0..form.branch_count() {
        let s = form.coeffs()[k];
        if s == 0.0 {
            continue;
        }
        let (v, own) = match side {
            Side::Right => (
                partial_inner_left(&form.left()[k], &hpsi, dims),
                &form.right()[k],
            ),
            Side::Left => (
                partial_inner_right(&form.right()[k], &hpsi, dims),
                &form.left()[k],
            ),
        };
        let term = &v * own.adjoint() * C64::new(s, 0.0);
        out += &term - term.adjoint();
    }
    Ok(out)
}

/// `H_phi^(i) = <Phi_i|H|Phi_i>`, the system Hamiltonian conditioned on one
/// environment state. Includes the environment energy as a scalar shift.
pub fn effective_hamiltonian(
    model: &BipartiteModel,
    big_phi: &StateVector,
) -> Result<ComplexMatrix> {
    if big_phi.len() != model.dims().b {
        return Err(Error::dims(format!(
            "environment state has length {}, expected {}",
            big_phi.len(),
            model.dims().b
        )));
    }
    check_normalized(big_phi)?;
    Ok(model.system_block(big_phi, big_phi))
}

/// Index of the pointer state each occupied branch coincides with.
fn align(form: &SchmidtForm, pointer: &PointerBasis) -> Result<Vec<Option<usize>>> {
    let mut out = Vec::with_capacity(form.branch_count());
    for (i, (s, phi)) in form.coeffs().iter().zip(form.left()).enumerate() {
        if !occupied(*s) {
            out.push(None);
            continue;
        }
        let (k, ov) = pointer
            .states()
            .iter()
            .map(|ps| inner(ps, phi).norm())
            .enumerate()
            .fold(
                (0, 0.0),
                |best, (k, o)| if o > best.1 { (k, o) } else { best },
            );
        if ov < 1.0 - ALIGNMENT_TOL {
            return Err(Error::NotAligned {
                branch: i,
                overlap: ov,
            });
        }
        out.push(Some(k));
    }
    Ok(out)
}

/// Stable-branch reduction with default options.
pub fn stable_branch_rhs(
    form: &SchmidtForm,
    pointer: &PointerBasis,
    model: &BipartiteModel,
) -> Result<SchmidtDerivative> {
    stable_branch_rhs_with(form, pointer, model, &RhsOptions::default())
}

/// Equations of motion for a form whose system factors are pointer states of
/// a measurement-type Hamiltonian `sum_k |phi_k><phi_k| (x) H^(k)`.
///
/// ```text
/// hbar d sqrt(p_i) = s_i Im <Phi_i|H^(i)|Phi_i>
/// i hbar dPhi_i = sum_{j != i} [<Phi_j|H^(i)|Phi_i>
///                  - p_j / (p_i - p_j) <Phi_j|H^(j) - H^(i)|Phi_i>] Phi_j
///                 + P_perp H^(i) Phi_i
/// i hbar dphi_i = sum_{j != i} sqrt(p_i p_j) / (p_i - p_j)
///                  <Phi_i|H^(j) - H^(i)|Phi_j> phi_j
///                 + <Phi_i|H^(i)|Phi_i> phi_i
/// ```
///
/// An unoccupied branch `i` needs no pointer alignment: its `Phi_i` turns
/// with `<Phi_j|H^(j)|Phi_i>` towards each occupied `j`, and its `phi_i` is
/// at rest.
pub fn stable_branch_rhs_with(
    form: &SchmidtForm,
    pointer: &PointerBasis,
    model: &BipartiteModel,
    opts: &RhsOptions,
) -> Result<SchmidtDerivative> {
    check_form(form, model)?;
    if pointer.dims() != model.dims() {
        return Err(Error::dims("pointer basis does not match the model"));
    }
    check_gaps(form, opts.eps_gap)?;
    let which = align(form, pointer)?;
    let r = form.branch_count();
    let s = form.coeffs();
    let p = form.probabilities();
    let (phi, big) = (form.left(), form.right());
    let hc: Vec<Option<&ComplexMatrix>> = which
        .iter()
        .map(|k| k.map(|k| &pointer.conditional()[k]))
        .collect();
    let elem = |hm: &ComplexMatrix, a: &StateVector, b: &StateVector| inner(a, &(hm * b));

    let mut d_sqrt_p = vec![0.0; r];
    let mut d_right = Vec::with_capacity(r);
    let mut d_left = Vec::with_capacity(r);
    for i in 0..r {
        let mut dr = StateVector::zeros(form.dims().b);
        let mut dl = StateVector::zeros(form.dims().a);
        match hc[i] {
            Some(hi) => {
                let hphi = hi * &big[i];
                let e_ii = inner(&big[i], &hphi);
                d_sqrt_p[i] = s[i] * e_ii.im / model.hbar();
                // Every component of H^(i) Phi_i except along Phi_i itself.
                dr += &hphi - &big[i] * e_ii;
                for j in 0..r {
                    let Some(hj) = hc[j] else { continue };
                    if j == i {
                        continue;
                    }
                    let den = p[i] - p[j];
                    let diff = elem(hj, &big[j], &big[i]) - elem(hi, &big[j], &big[i]);
                    dr -= &big[j] * (diff * (p[j] / den));
                    let cross = match opts.diagonal {
                        DiagonalTerm::Consistent => {
                            elem(hj, &big[i], &big[j]) - elem(hi, &big[i], &big[j])
                        }
                        DiagonalTerm::Printed => {
                            elem(hi, &big[i], &big[j]) - elem(hj, &big[i], &big[j])
                        }
                    };
                    dl += &phi[j] * (cross * ((p[i] * p[j]).sqrt() / den));
                }
                let diag = match opts.diagonal {
                    DiagonalTerm::Consistent => e_ii.re,
                    DiagonalTerm::Printed => p[i] * e_ii.re,
                };
                dl += &phi[i] * C64::new(diag, 0.0);
            }
            None => {
                for j in 0..r {
                    if let Some(hj) = hc[j] {
                        dr += &big[j] * elem(hj, &big[j], &big[i]);
                    }
                }
            }
        }
        d_right.push(dr);
        d_left.push(dl);
    }
    let hbar = model.hbar();
    Ok(SchmidtDerivative {
        d_sqrt_p,
        d_left: to_rate(d_left, hbar),
        d_right: to_rate(d_right, hbar),
    })
}
