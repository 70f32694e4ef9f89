//! Seeded random states and matrices.
//!
//! All draws go through [`Rng`] (ChaCha8 keyed by a `u64` seed) and the
//! standard-normal sampler of `rand_distr`, consumed in a fixed order, so a
//! seed identifies the same numbers on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{inner, ComplexMatrix, StateVector, C64};

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Complex Gaussian with independent real and imaginary parts of variance `var / 2` each.
pub fn complex_normal(r: &mut Rng, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re = normal(r) * s;
    let im = normal(r) * s;
    C64::new(re, im)
}

/// Haar-random normalized state (normalized complex Gaussian vector).
pub fn random_state(r: &mut Rng, dim: usize) -> StateVector {
    let v = StateVector::from_fn(dim, |_, _| complex_normal(r, 1.0));
    let n = v.norm();
    v / C64::new(n, 0.0)
}

/// Gaussian Hermitian ensemble.
///
/// Entries are drawn row by row over the upper triangle: the diagonal entry
/// `H[i,i] ~ N(0, 1)`, then for `j > i` the real and imaginary parts of
/// `H[i,j]` are independent `N(0, 1/2)`; `H[j,i]` is the conjugate.
pub fn random_hermitian(r: &mut Rng, n: usize) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = C64::new(normal(r), 0.0);
        for j in (i + 1)..n {
            let z = complex_normal(r, 1.0);
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    h
}

/// Haar-random unitary: Gram-Schmidt (two passes) on Gaussian columns.
pub fn random_unitary(r: &mut Rng, n: usize) -> ComplexMatrix {
    let mut cols: Vec<StateVector> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v = StateVector::from_fn(n, |_, _| complex_normal(r, 1.0));
        for _ in 0..2 {
            for q in &cols {
                let proj = inner(q, &v);
                v -= q * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / C64::new(norm, 0.0));
        }
    }
    ComplexMatrix::from_columns(&cols)
}

/// Uniform phase `e^{i theta}`, `theta ~ U[0, 2 pi)`.
pub fn random_phase(r: &mut Rng) -> C64 {
    use rand::Rng as _;
    let theta: f64 = r.random::<f64>() * std::f64::consts::TAU;
    C64::from_polar(1.0, theta)
}

/// Independent child seed for work item `index` of a run seeded with `base`
/// (splitmix64 finalizer over the pair).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
