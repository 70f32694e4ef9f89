use serde::{Deserialize, Serialize};

use super::memory::MemoryExpansion;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::linalg::random::{derive_seed, random_phase, random_unitary, rng, Rng};
use crate::linalg::{
    basis_state, c, check_normalized, hermitian_deviation, inner, max_abs, partial_inner_left,
    schmidt_decompose, tensor_product, unitarity_deviation, ComplexMatrix, Dims, StateVector, C64,
};

/// Tolerance on projector and unitarity checks of the observation map.
const OPERATOR_TOL: f64 = 1e-12;

/// Observer (x) subsystem (1) (x) subsystem (2), in that tensor order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripartiteDims {
    pub observer: usize,
    pub first: usize,
    pub second: usize,
}

impl TripartiteDims {
    pub fn total(&self) -> usize {
        self.observer * self.first * self.second
    }

    /// Observer against the joint environment `(1)(2)`.
    pub fn observer_cut(&self) -> Dims {
        Dims::new(self.observer, self.first * self.second)
    }
}

fn check_projector_family(ps: &[ComplexMatrix], dim: usize) -> Result<()> {
    if ps.is_empty() {
        return Err(Error::InvalidArgument("empty projector family".into()));
    }
    let mut sum = ComplexMatrix::zeros(dim, dim);
    for (n, p) in ps.iter().enumerate() {
        if p.shape() != (dim, dim) {
            return Err(Error::dims(format!("projector {n} is not {dim}x{dim}")));
        }
        if hermitian_deviation(p) > OPERATOR_TOL {
            return Err(Error::InvalidArgument(format!(
                "projector {n} is not Hermitian"
            )));
        }
        for (k, q) in ps.iter().enumerate() {
            let want = if k == n {
                p.clone()
            } else {
                ComplexMatrix::zeros(dim, dim)
            };
            if max_abs(&(p * q - want)) > OPERATOR_TOL {
                return Err(Error::InvalidArgument(format!(
                    "projectors {n} and {k} violate P_n P_k = delta P_n"
                )));
            }
        }
        sum += p;
    }
    let dev = max_abs(&(sum - ComplexMatrix::identity(dim, dim)));
    if dev > OPERATOR_TOL {
        return Err(Error::InvalidArgument(format!(
            "projectors do not resolve the identity (deviation {dev:e})"
        )));
    }
    Ok(())
}

fn check_unitary_family(us: &[ComplexMatrix], dim: usize, what: &str) -> Result<()> {
    for (n, u) in us.iter().enumerate() {
        if u.shape() != (dim, dim) {
            return Err(Error::dims(format!("{what} {n} is not {dim}x{dim}")));
        }
        let deviation = unitarity_deviation(u);
        if deviation > OPERATOR_TOL {
            return Err(Error::NotUnitary { deviation });
        }
    }
    Ok(())
}

/// Apply `sum_n shift_n (x) P_n (x) kick_n`. Without kicks subsystem (2)
/// is left alone.
pub fn observe(
    psi: &StateVector,
    dims: TripartiteDims,
    projectors: &[ComplexMatrix],
    shifts: &[ComplexMatrix],
    kicks: Option<&[ComplexMatrix]>,
) -> Result<StateVector> {
    if psi.len() != dims.total() || dims.total() == 0 {
        return Err(Error::dims(format!(
            "state of length {} does not match {}x{}x{}",
            psi.len(),
            dims.observer,
            dims.first,
            dims.second
        )));
    }
    check_projector_family(projectors, dims.first)?;
    if shifts.len() != projectors.len() {
        return Err(Error::dims(format!(
            "{} observer shifts for {} projectors",
            shifts.len(),
            projectors.len()
        )));
    }
    check_unitary_family(shifts, dims.observer, "observer shift")?;
    if let Some(k) = kicks {
        if k.len() != projectors.len() {
            return Err(Error::dims(format!(
                "{} kicks for {} projectors",
                k.len(),
                projectors.len()
            )));
        }
        check_unitary_family(k, dims.second, "kick")?;
    }
    let mut out = StateVector::zeros(psi.len());
    for (n, (p, u)) in projectors.iter().zip(shifts).enumerate() {
        out += apply_product(u, p, kicks.map(|k| &k[n]), psi, dims);
    }
    Ok(out)
}

/// `(u (x) p (x) k) psi` without forming the Kronecker product.
fn apply_product(
    u: &ComplexMatrix,
    p: &ComplexMatrix,
    k: Option<&ComplexMatrix>,
    psi: &StateVector,
    dims: TripartiteDims,
) -> StateVector {
    let (df, ds) = (dims.first, dims.second);
    let block = df * ds;
    // Each observer slice is a df x ds amplitude matrix X_o -> P X_o K^T.
    let slices: Vec<ComplexMatrix> = (0..dims.observer)
        .map(|o| {
            let x = ComplexMatrix::from_fn(df, ds, |f, s| psi[o * block + f * ds + s]);
            let y = p * x;
            match k {
                Some(k) => y * k.transpose(),
                None => y,
            }
        })
        .collect();
    let mut out = StateVector::zeros(psi.len());
    for o in 0..dims.observer {
        for (op, y) in slices.iter().enumerate() {
            let w = u[(o, op)];
            if w == C64::new(0.0, 0.0) {
                continue;
            }
            for f in 0..df {
                for s in 0..ds {
                    out[o * block + f * ds + s] += w * y[(f, s)];
                }
            }
        }
    }
    out
}

/// Projectors onto consecutive coordinate blocks of the given sizes.
pub fn block_projectors(blocks: &[usize]) -> Vec<ComplexMatrix> {
    let dim: usize = blocks.iter().sum();
    let mut start = 0;
    blocks
        .iter()
        .map(|&b| {
            let p = ComplexMatrix::from_fn(dim, dim, |r, col| {
                if r == col && r >= start && r < start + b {
                    c(1.0, 0.0)
                } else {
                    c(0.0, 0.0)
                }
            });
            start += b;
            p
        })
        .collect()
}

/// A unitary taking the unit vector `from` to the unit vector `to`: a
/// Householder reflection times a global phase.
pub fn unitary_mapping(from: &StateVector, to: &StateVector) -> Result<ComplexMatrix> {
    if from.len() != to.len() {
        return Err(Error::dims("unitary_mapping: length mismatch"));
    }
    check_normalized(from)?;
    check_normalized(to)?;
    let n = from.len();
    let ov = inner(from, to);
    let phase = if ov.norm() > 0.0 {
        ov / ov.norm()
    } else {
        c(1.0, 0.0)
    };
    // <phase*from|to> is real and non-negative, so a reflection suffices.
    let v = from * phase - to;
    let vn = v.norm_squared();
    let reflect = if vn < 1e-30 {
        ComplexMatrix::identity(n, n)
    } else {
        ComplexMatrix::identity(n, n) - (&v * v.adjoint()) * c(2.0 / vn, 0.0)
    };
    Ok(reflect * phase)
}

/// Squared norms of the relative states `Phi^(in)` of one branch: the
/// exact value from the actual overlaps and the random-phase approximation
/// `p_i sum_{alpha m} q |c_nm|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeNorms {
    pub exact: Vec<f64>,
    pub approx: Vec<f64>,
}

impl RelativeNorms {
    pub fn differences(&self) -> Vec<f64> {
        self.exact
            .iter()
            .zip(&self.approx)
            .map(|(a, b)| a - b)
            .collect()
    }

    pub fn max_abs_difference(&self) -> f64 {
        self.differences().iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    pub fn mean_abs_difference(&self) -> f64 {
        let d = self.differences();
        d.iter().map(|x| x.abs()).sum::<f64>() / d.len() as f64
    }
}

/// `overlaps[n][(alpha', alpha)] = <chi2_{i alpha' n}|chi2_{i alpha n}>`.
pub fn relative_norms(
    mem: &MemoryExpansion,
    i: usize,
    p_i: f64,
    overlaps: &[ComplexMatrix],
) -> Result<RelativeNorms> {
    let Some(branch) = mem.branches().get(i) else {
        return Err(Error::InvalidArgument(format!("no branch {i}")));
    };
    let k = branch.q.len();
    if overlaps.len() != mem.memory_count() {
        return Err(Error::dims(format!(
            "{} overlap matrices for {} memory values",
            overlaps.len(),
            mem.memory_count()
        )));
    }
    if let Some(n) = overlaps.iter().position(|g| g.shape() != (k, k)) {
        return Err(Error::dims(format!("overlap matrix {n} is not {k}x{k}")));
    }
    let approx = mem.memory_weights(i).into_iter().map(|w| p_i * w).collect();
    let exact = (0..mem.memory_count())
        .map(|n| {
            let range = mem.block_range(n);
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..k {
                for ap in 0..k {
                    let amp: C64 = range
                        .clone()
                        .map(|m| branch.c[a][m] * branch.c[ap][m].conj())
                        .sum();
                    acc += amp * overlaps[n][(ap, a)] * (branch.q[a] * branch.q[ap]).sqrt();
                }
            }
            p_i * acc.re
        })
        .collect();
    Ok(RelativeNorms { exact, approx })
}

/// Overlaps of mutually orthogonal `chi2_{alpha n}`.
pub fn orthogonal_overlaps(alphas: usize, memory_count: usize) -> Vec<ComplexMatrix> {
    vec![ComplexMatrix::identity(alphas, alphas); memory_count]
}

/// Unit-magnitude overlaps with independent uniform phases:
/// `<chi_{alpha' n}|chi_{alpha n}> = exp(i(theta_{alpha n} - theta_{alpha' n}))`.
pub fn random_phase_overlaps(
    r: &mut Rng,
    alphas: usize,
    memory_count: usize,
) -> Vec<ComplexMatrix> {
    (0..memory_count)
        .map(|_| {
            let z: Vec<C64> = (0..alphas).map(|_| random_phase(r)).collect();
            ComplexMatrix::from_fn(alphas, alphas, |ap, a| z[a] * z[ap].conj())
        })
        .collect()
}

/// Sample statistics of the random-phase approximation error at one size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseStudyPoint {
    pub alpha_count: usize,
    pub resamples: usize,
    /// Sample mean over resamples of the mean over `n` of `|exact - approx|`.
    pub mean_error: f64,
    pub std_error: f64,
}

/// For each `K` in `sizes`: two memory blocks of size `K`, `K` equally
/// weighted terms whose coefficient vectors are orthonormal Haar columns,
/// and random-phase unit overlaps, resampled `resamples` times.
pub fn random_phase_study(
    sizes: &[usize],
    resamples: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<PhaseStudyPoint>> {
    if resamples == 0 {
        return Err(Error::InvalidArgument("need at least one resample".into()));
    }
    let mut out = Vec::with_capacity(sizes.len());
    for &k in sizes {
        if k == 0 {
            return Err(Error::InvalidArgument("alpha count must be > 0".into()));
        }
        let base = derive_seed(seed, k as u64);
        let errors = map_indexed(exec, resamples, |s| -> Result<f64> {
            let mut r = rng(derive_seed(base, s as u64));
            let u = random_unitary(&mut r, 2 * k);
            let branch = super::memory::MemoryBranch {
                q: vec![1.0 / k as f64; k],
                c: (0..k).map(|a| u.column(a).into_owned()).collect(),
            };
            let mem = MemoryExpansion::new(vec![k, k], vec![branch])?;
            let g = random_phase_overlaps(&mut r, k, 2);
            Ok(relative_norms(&mem, 0, 1.0, &g)?.mean_abs_difference())
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        let mean = errors.iter().sum::<f64>() / resamples as f64;
        let var =
            errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (resamples.max(2) - 1) as f64;
        out.push(PhaseStudyPoint {
            alpha_count: k,
            resamples,
            mean_error: mean,
            std_error: (var / resamples as f64).sqrt(),
        });
    }
    Ok(out)
}

/// A complete observation: branch weights `p_i`, a memory expansion of
/// subsystem (1), orthogonal `chi2_{i alpha} = e_{i A + alpha}` on (2), and
/// an observer that starts in `phi_i = e_{i N}` and is shifted to
/// `phi_{in}` by the memory value `n`.
///
/// With `observer_overlap = 0` the `phi_{in}` are distinct basis vectors.
/// Otherwise `phi_{in} ~ e_{iN+n} + eps e_{iN+(n+1)%N}` within each block.
#[derive(Debug, Clone)]
pub struct ObservationScenario {
    pub dims: TripartiteDims,
    pub p: Vec<f64>,
    pub memory: MemoryExpansion,
    /// `[i][n]`.
    pub observer_states: Vec<Vec<StateVector>>,
    /// Diagonal phase kicks on (2), one per memory value.
    pub kicks: Vec<ComplexMatrix>,
    pub pre: StateVector,
    pub post: StateVector,
    /// `<phi_in|psi_post>`, `[i][n]`.
    pub relative: Vec<Vec<StateVector>>,
    /// `sqrt(p_i) sum_{alpha m} sqrt(q) c_nm chi1_nm (x) kick_n chi2_{i alpha}`.
    pub predicted: Vec<Vec<StateVector>>,
}

impl ObservationScenario {
    pub fn build(
        p: Vec<f64>,
        memory: MemoryExpansion,
        observer_overlap: f64,
        seed: u64,
    ) -> Result<Self> {
        let branches = memory.branches().len();
        if p.len() != branches {
            return Err(Error::dims(format!(
                "{} branch weights for {branches} memory branches",
                p.len()
            )));
        }
        if p.iter().any(|x| !(*x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(
                "branch weights must form a distribution".into(),
            ));
        }
        if !(observer_overlap >= 0.0) || !observer_overlap.is_finite() {
            return Err(Error::InvalidArgument(
                "observer overlap must be >= 0".into(),
            ));
        }
        let n_mem = memory.memory_count();
        let width = memory
            .branches()
            .iter()
            .map(|b| b.q.len())
            .max()
            .unwrap_or(1);
        let dims = TripartiteDims {
            observer: branches * n_mem,
            first: memory.dim(),
            second: branches * width,
        };

        let block_targets: Vec<StateVector> = (0..n_mem)
            .map(|n| {
                let mut v = basis_state(n_mem, n);
                v[(n + 1) % n_mem] += c(observer_overlap, 0.0);
                v.unscale(v.norm())
            })
            .collect();
        let mut shifts = Vec::with_capacity(n_mem);
        for target in &block_targets {
            let r = unitary_mapping(&basis_state(n_mem, 0), target)?;
            let mut u = ComplexMatrix::zeros(dims.observer, dims.observer);
            for i in 0..branches {
                u.view_mut((i * n_mem, i * n_mem), (n_mem, n_mem))
                    .copy_from(&r);
            }
            shifts.push(u);
        }
        let observer_states: Vec<Vec<StateVector>> = (0..branches)
            .map(|i| {
                shifts
                    .iter()
                    .map(|u| u * basis_state(dims.observer, i * n_mem))
                    .collect()
            })
            .collect();

        let mut r = rng(seed);
        let kicks: Vec<ComplexMatrix> = (0..n_mem)
            .map(|_| {
                let d: Vec<C64> = (0..dims.second).map(|_| random_phase(&mut r)).collect();
                ComplexMatrix::from_diagonal(&StateVector::from_vec(d))
            })
            .collect();

        let chi2 = |i: usize, a: usize| basis_state(dims.second, i * width + a);
        let env = |i: usize, kick: Option<&ComplexMatrix>, n: Option<usize>| -> StateVector {
            let b = &memory.branches()[i];
            let mut v = StateVector::zeros(dims.first * dims.second);
            for (a, q) in b.q.iter().enumerate() {
                let first = match n {
                    Some(n) => {
                        let mut x = StateVector::zeros(dims.first);
                        for k in memory.block_range(n) {
                            x[k] = b.c[a][k];
                        }
                        x
                    }
                    None => memory.chi(i, a),
                };
                let second = kick.map_or_else(|| chi2(i, a), |k| k * chi2(i, a));
                v += tensor_product(&first, &second).expect("non-empty") * c(q.sqrt(), 0.0);
            }
            v
        };

        let mut pre = StateVector::zeros(dims.total());
        for (i, pi) in p.iter().enumerate().take(branches) {
            let ready = basis_state(dims.observer, i * n_mem);
            pre += tensor_product(&ready, &env(i, None, None))? * c(pi.sqrt(), 0.0);
        }
        let post = observe(&pre, dims, &memory.projectors(), &shifts, Some(&kicks))?;
        let cut = dims.observer_cut();
        let relative = observer_states
            .iter()
            .map(|row| {
                row.iter()
                    .map(|phi| partial_inner_left(phi, &post, cut))
                    .collect()
            })
            .collect();
        let predicted = (0..branches)
            .map(|i| {
                (0..n_mem)
                    .map(|n| env(i, Some(&kicks[n]), Some(n)) * c(p[i].sqrt(), 0.0))
                    .collect()
            })
            .collect();

        Ok(ObservationScenario {
            dims,
            p,
            memory,
            observer_states,
            kicks,
            pre,
            post,
            relative,
            predicted,
        })
    }

    /// `||Phi^(in)||^2`, `[i][n]`.
    pub fn weights(&self) -> Vec<Vec<f64>> {
        self.relative
            .iter()
            .map(|row| row.iter().map(|v| v.norm_squared()).collect())
            .collect()
    }

    /// `Phi_in = Phi^(in) / ||Phi^(in)||`; `None` for empty relative states.
    pub fn normalized(&self) -> Vec<Vec<Option<StateVector>>> {
        self.relative
            .iter()
            .map(|row| {
                row.iter()
                    .map(|v| {
                        let n = v.norm();
                        (n > 1e-14).then(|| v.unscale(n))
                    })
                    .collect()
            })
            .collect()
    }

    /// Largest `|<Phi^(in)|Phi^(i'n')>|` over distinct pairs.
    pub fn max_cross_overlap(&self) -> f64 {
        let flat: Vec<&StateVector> = self.relative.iter().flatten().collect();
        let mut worst: f64 = 0.0;
        for (a, x) in flat.iter().enumerate() {
            for y in &flat[a + 1..] {
                worst = worst.max(inner(x, y).norm());
            }
        }
        worst
    }

    /// Largest distance between the relative states and the closed form.
    pub fn max_prediction_error(&self) -> f64 {
        self.relative
            .iter()
            .flatten()
            .zip(self.predicted.iter().flatten())
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    /// Overlaps `<kick_n chi2_{i alpha'}|kick_n chi2_{i alpha}>` of the
    /// actual states, in the layout [`relative_norms`] takes.
    pub fn overlaps(&self, i: usize) -> Vec<ComplexMatrix> {
        let k = self.memory.branches()[i].q.len();
        let width = self.dims.second / self.p.len();
        self.kicks
            .iter()
            .map(|kick| {
                let v: Vec<StateVector> = (0..k)
                    .map(|a| kick * basis_state(self.dims.second, i * width + a))
                    .collect();
                ComplexMatrix::from_fn(k, k, |ap, a| inner(&v[ap], &v[a]))
            })
            .collect()
    }

    /// Largest deviation between the observer-cut Schmidt weights of the
    /// final state and the sorted `||Phi^(in)||^2`.
    pub fn schmidt_weight_error(&self) -> Result<f64> {
        let form = schmidt_decompose(&self.post, self.dims.observer_cut())?;
        let mut w: Vec<f64> = self.weights().into_iter().flatten().collect();
        w.sort_by(|a, b| b.total_cmp(a));
        let p = form.probabilities();
        let mut worst: f64 = 0.0;
        for (k, wk) in w.iter().enumerate() {
            worst = worst.max((p.get(k).copied().unwrap_or(0.0) - wk).abs());
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random::random_state;

    fn dims() -> TripartiteDims {
        TripartiteDims {
            observer: 2,
            first: 3,
            second: 2,
        }
    }

    fn shifts() -> Vec<ComplexMatrix> {
        let e0 = basis_state(2, 0);
        vec![
            ComplexMatrix::identity(2, 2),
            unitary_mapping(&e0, &basis_state(2, 1)).unwrap(),
        ]
    }

    #[test]
    fn unitary_mapping_hits_target() {
        let mut r = rng(1);
        for n in [1usize, 2, 5] {
            let a = random_state(&mut r, n);
            let b = random_state(&mut r, n);
            let u = unitary_mapping(&a, &b).unwrap();
            assert!(unitarity_deviation(&u) < 1e-13);
            assert!((&u * &a - &b).norm() < 1e-13);
        }
        let a = random_state(&mut r, 3);
        let u = unitary_mapping(&a, &(&a * c(0.0, 1.0))).unwrap();
        assert!((&u * &a - &a * c(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn single_memory_value_gives_product() {
        let ps = block_projectors(&[2, 1]);
        let chi = basis_state(3, 2);
        let rest = random_state(&mut rng(2), 2);
        let ready = basis_state(2, 0);
        let pre = tensor_product(&tensor_product(&ready, &chi).unwrap(), &rest).unwrap();
        let post = observe(&pre, dims(), &ps, &shifts(), None).unwrap();
        let want =
            tensor_product(&tensor_product(&basis_state(2, 1), &chi).unwrap(), &rest).unwrap();
        assert!((post - want).norm() < 1e-14);
    }

    #[test]
    fn superposition_becomes_correlated_sum() {
        let ps = block_projectors(&[2, 1]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let chi = (basis_state(3, 0) + basis_state(3, 2)) * c(s, 0.0);
        let rest = basis_state(2, 1);
        let ready = basis_state(2, 0);
        let pre = tensor_product(&tensor_product(&ready, &chi).unwrap(), &rest).unwrap();
        let post = observe(&pre, dims(), &ps, &shifts(), None).unwrap();
        let part = |obs: usize, mem: usize| {
            tensor_product(
                &tensor_product(&basis_state(2, obs), &basis_state(3, mem)).unwrap(),
                &rest,
            )
            .unwrap()
        };
        let want = (part(0, 0) + part(1, 2)) * c(s, 0.0);
        assert!((&post - want).norm() < 1e-14);
        // The memory record on (1) is untouched.
        let rho_before =
            crate::linalg::partial_trace(&pre, Dims::new(2, 6), crate::linalg::Side::Right)
                .unwrap();
        let rho_after =
            crate::linalg::partial_trace(&post, Dims::new(2, 6), crate::linalg::Side::Right)
                .unwrap();
        let diag = |m: &ComplexMatrix| (0..6).map(|k| m[(k, k)].re).collect::<Vec<_>>();
        for (a, b) in diag(&rho_before).iter().zip(diag(&rho_after)) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn observe_is_unitary() {
        let mut r = rng(3);
        let ps = block_projectors(&[1, 2]);
        let kicks = vec![random_unitary(&mut r, 2), random_unitary(&mut r, 2)];
        let sh = vec![random_unitary(&mut r, 2), random_unitary(&mut r, 2)];
        for _ in 0..10 {
            let a = random_state(&mut r, 12);
            let b = random_state(&mut r, 12);
            let oa = observe(&a, dims(), &ps, &sh, Some(&kicks)).unwrap();
            let ob = observe(&b, dims(), &ps, &sh, Some(&kicks)).unwrap();
            assert!((oa.norm() - 1.0).abs() < 1e-12);
            assert!((inner(&oa, &ob) - inner(&a, &b)).norm() < 1e-12);
        }
    }

    #[test]
    fn factorwise_application_matches_kronecker() {
        let mut r = rng(13);
        let d = TripartiteDims {
            observer: 3,
            first: 2,
            second: 4,
        };
        let u = random_unitary(&mut r, 3);
        let p = block_projectors(&[1, 1])[1].clone();
        let k = random_unitary(&mut r, 4);
        let psi = random_state(&mut r, d.total());
        let want = crate::linalg::kron(&crate::linalg::kron(&u, &p), &k) * &psi;
        assert!((apply_product(&u, &p, Some(&k), &psi, d) - want).norm() < 1e-13);
    }

    #[test]
    fn observe_rejects_bad_operators() {
        let psi = random_state(&mut rng(4), 12);
        let incomplete = vec![
            block_projectors(&[1, 2])[0].clone(),
            ComplexMatrix::zeros(3, 3),
        ];
        assert!(observe(&psi, dims(), &incomplete, &shifts(), None).is_err());
        let overlapping = vec![
            ComplexMatrix::identity(3, 3),
            block_projectors(&[1, 2])[0].clone(),
        ];
        assert!(observe(&psi, dims(), &overlapping, &shifts(), None).is_err());
        let bad_shift = vec![
            ComplexMatrix::identity(2, 2),
            ComplexMatrix::identity(2, 2) * c(2.0, 0.0),
        ];
        assert!(matches!(
            observe(&psi, dims(), &block_projectors(&[1, 2]), &bad_shift, None),
            Err(Error::NotUnitary { .. })
        ));
    }

    #[test]
    fn single_term_norms_agree() {
        let mem = MemoryExpansion::random(&[2, 1], &[1], false, 5).unwrap();
        let g = random_phase_overlaps(&mut rng(6), 1, 2);
        let rn = relative_norms(&mem, 0, 0.7, &g).unwrap();
        assert!(rn.max_abs_difference() < 1e-15);
    }

    #[test]
    fn orthogonal_norms_agree() {
        let mem = MemoryExpansion::random(&[2, 3], &[4, 3], false, 7).unwrap();
        for i in 0..2 {
            let k = mem.branches()[i].q.len();
            let rn = relative_norms(&mem, i, 0.5, &orthogonal_overlaps(k, 2)).unwrap();
            assert!(rn.max_abs_difference() < 1e-12);
        }
        assert!(relative_norms(&mem, 0, 0.5, &orthogonal_overlaps(2, 2)).is_err());
    }

    #[test]
    fn scenario_matches_closed_form() {
        let mem = MemoryExpansion::random(&[2, 1, 2], &[2, 3], false, 8).unwrap();
        let sc = ObservationScenario::build(vec![0.3, 0.7], mem, 0.0, 9).unwrap();
        assert!((sc.post.norm() - 1.0).abs() < 1e-12);
        assert!(sc.max_prediction_error() < 1e-12);
        assert!(sc.max_cross_overlap() < 1e-10);
        for row in sc.normalized() {
            for v in row.into_iter().flatten() {
                assert!((v.norm() - 1.0).abs() < 1e-10);
            }
        }
        assert!(sc.schmidt_weight_error().unwrap() < 1e-10);
        for i in 0..2 {
            let rn = relative_norms(&sc.memory, i, sc.p[i], &sc.overlaps(i)).unwrap();
            for (n, w) in sc.weights()[i].iter().enumerate() {
                assert!((rn.exact[n] - w).abs() < 1e-12);
                assert!((rn.approx[n] - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn near_orthogonal_observer_states() {
        let mem = MemoryExpansion::random(&[1, 1], &[1, 1], false, 10).unwrap();
        let sc = ObservationScenario::build(vec![0.5, 0.5], mem, 0.05, 11).unwrap();
        assert!((sc.post.norm() - 1.0).abs() < 1e-12);
        let o = inner(&sc.observer_states[0][0], &sc.observer_states[0][1]).norm();
        assert!(o > 0.0 && o < 0.1);
        assert!(sc.max_prediction_error() > 0.0);
    }

    #[test]
    fn random_phase_error_shrinks() {
        let pts = random_phase_study(&[2, 4, 8, 16], 200, 12, Execution::Parallel).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].mean_error < w[0].mean_error, "{pts:?}");
        }
        let seq = random_phase_study(&[2, 4], 20, 12, Execution::Sequential).unwrap();
        let par = random_phase_study(&[2, 4], 20, 12, Execution::Parallel).unwrap();
        assert_eq!(seq, par);
    }
}
