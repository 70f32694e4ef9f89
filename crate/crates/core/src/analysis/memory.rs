use std::ops::Range;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::nested::NestedDecomposition;
use crate::error::{Error, Result};
use crate::linalg::random::{random_state, random_unitary, rng};
use crate::linalg::{basis_state, c, ComplexMatrix, StateVector, C64};

/// Weights and memory coefficients of one outer branch:
/// `chi1_ia = sum_nm c^(ia)_nm chi1_nm` with weight `q_ia`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBranch {
    pub q: Vec<f64>,
    /// `c[alpha]`, laid out block by block over subsystem (1).
    pub c: Vec<StateVector>,
}

/// Subsystem (1) as a direct sum of memory blocks. Block `n` holds the
/// states `chi1_nm`, `m < blocks[n]`, which are computational basis vectors;
/// `P_n` projects onto the block.
///
/// The `chi1_ia` of one branch need not be orthogonal.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryExpansion {
    blocks: Vec<usize>,
    branches: Vec<MemoryBranch>,
}

const WEIGHT_TOL: f64 = 1e-10;

impl MemoryExpansion {
    pub fn new(blocks: Vec<usize>, branches: Vec<MemoryBranch>) -> Result<Self> {
        if blocks.is_empty() || blocks.contains(&0) {
            return Err(Error::InvalidArgument(
                "memory blocks must be non-empty".into(),
            ));
        }
        let d1: usize = blocks.iter().sum();
        for (i, br) in branches.iter().enumerate() {
            if br.q.is_empty() || br.q.len() != br.c.len() {
                return Err(Error::dims(format!(
                    "branch {i}: {} weights for {} coefficient vectors",
                    br.q.len(),
                    br.c.len()
                )));
            }
            if br.c.iter().any(|v| v.len() != d1) {
                return Err(Error::dims(format!(
                    "branch {i}: coefficient vectors must have length {d1}"
                )));
            }
            if br.q.iter().any(|q| !(*q >= 0.0)) {
                return Err(Error::InvalidArgument(format!(
                    "branch {i}: negative weight"
                )));
            }
            let total: f64 = br.q.iter().sum();
            if (total - 1.0).abs() > WEIGHT_TOL {
                return Err(Error::InvalidArgument(format!(
                    "branch {i}: weights sum to {total}"
                )));
            }
            for (a, v) in br.c.iter().enumerate() {
                let n2 = v.norm_squared();
                if (n2 - 1.0).abs() > WEIGHT_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "branch {i}, alpha {a}: coefficient vector has norm {}",
                        n2.sqrt()
                    )));
                }
            }
        }
        Ok(MemoryExpansion { blocks, branches })
    }

    /// Memory coefficients read off a nested expansion: the components of
    /// each `chi1_ia` in the block basis.
    pub fn from_nested(nested: &NestedDecomposition, blocks: Vec<usize>) -> Result<Self> {
        if blocks.iter().sum::<usize>() != nested.d1 {
            return Err(Error::dims(format!(
                "blocks cover {} states, subsystem (1) has {}",
                blocks.iter().sum::<usize>(),
                nested.d1
            )));
        }
        let branches = nested
            .branches
            .iter()
            .map(|(_, b)| MemoryBranch {
                q: b.weights(),
                c: b.first.clone(),
            })
            .collect();
        MemoryExpansion::new(blocks, branches)
    }

    /// Random expansion: one branch per entry of `alphas`, with that many
    /// terms. Weights are normalized uniform draws; coefficient vectors are
    /// Haar-random columns when `orthonormal` (requires `alpha <= d1`) and
    /// independent random states otherwise.
    pub fn random(
        blocks: &[usize],
        alphas: &[usize],
        orthonormal: bool,
        seed: u64,
    ) -> Result<Self> {
        let d1: usize = blocks.iter().sum();
        let mut r = rng(seed);
        let mut branches = Vec::with_capacity(alphas.len());
        for &k in alphas {
            if k == 0 || (orthonormal && k > d1) {
                return Err(Error::InvalidArgument(format!(
                    "cannot draw {k} memory terms in dimension {d1}"
                )));
            }
            let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let q = raw.iter().map(|x| x / total).collect();
            let c = if orthonormal {
                let u = random_unitary(&mut r, d1);
                (0..k).map(|a| u.column(a).into_owned()).collect()
            } else {
                (0..k).map(|_| random_state(&mut r, d1)).collect()
            };
            branches.push(MemoryBranch { q, c });
        }
        MemoryExpansion::new(blocks.to_vec(), branches)
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn branches(&self) -> &[MemoryBranch] {
        &self.branches
    }

    /// Dimension of subsystem (1).
    pub fn dim(&self) -> usize {
        self.blocks.iter().sum()
    }

    pub fn memory_count(&self) -> usize {
        self.blocks.len()
    }

    /// Indices of block `n`.
    pub fn block_range(&self, n: usize) -> Range<usize> {
        let start: usize = self.blocks[..n].iter().sum();
        start..start + self.blocks[n]
    }

    /// `chi1_nm`.
    pub fn memory_state(&self, n: usize, m: usize) -> StateVector {
        basis_state(self.dim(), self.block_range(n).start + m)
    }

    /// `c^(ia)_nm`.
    pub fn coefficient(&self, i: usize, alpha: usize, n: usize, m: usize) -> C64 {
        self.branches[i].c[alpha][self.block_range(n).start + m]
    }

    /// `chi1_ia = sum_nm c_nm chi1_nm`.
    pub fn chi(&self, i: usize, alpha: usize) -> StateVector {
        let mut v = StateVector::zeros(self.dim());
        for n in 0..self.memory_count() {
            for m in 0..self.blocks[n] {
                v += self.memory_state(n, m) * self.coefficient(i, alpha, n, m);
            }
        }
        v
    }

    /// `P_n = sum_m |chi1_nm><chi1_nm|`.
    pub fn projector(&self, n: usize) -> ComplexMatrix {
        let mut p = ComplexMatrix::zeros(self.dim(), self.dim());
        for m in 0..self.blocks[n] {
            let v = self.memory_state(n, m);
            p += &v * v.adjoint();
        }
        p
    }

    pub fn projectors(&self) -> Vec<ComplexMatrix> {
        (0..self.memory_count())
            .map(|n| self.projector(n))
            .collect()
    }

    /// `rho_i = sum_alpha q_ia |chi1_ia><chi1_ia|`.
    pub fn conditional_density(&self, i: usize) -> ComplexMatrix {
        let mut rho = ComplexMatrix::zeros(self.dim(), self.dim());
        for (alpha, q) in self.branches[i].q.iter().enumerate() {
            let v = self.chi(i, alpha);
            rho += (&v * v.adjoint()) * c(*q, 0.0);
        }
        rho
    }

    /// `S_i = -sum_alpha q_ia ln q_ia`.
    pub fn entropy(&self, i: usize) -> Result<f64> {
        super::entanglement_entropy(&self.branches[i].q)
    }

    /// `sum_{alpha m} q_ia |c^(ia)_nm|^2` for every `n`.
    pub fn memory_weights(&self, i: usize) -> Vec<f64> {
        let br = &self.branches[i];
        (0..self.memory_count())
            .map(|n| {
                let range = self.block_range(n);
                br.q.iter()
                    .zip(&br.c)
                    .map(|(q, v)| q * range.clone().map(|k| v[k].norm_sqr()).sum::<f64>())
                    .sum()
            })
            .collect()
    }
}

/// One entry of a branching-ratio table; `None` marks a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchingRatio {
    pub n: usize,
    pub n_prime: usize,
    pub left: Option<f64>,
    pub right: Option<f64>,
}

/// Both sides of the branching-ratio identity for one outer branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingTable {
    /// `sum_{alpha m} q |c_nm|^2` per memory value.
    pub left_weights: Vec<f64>,
    /// `tr[P_n rho_i]` per memory value.
    pub right_weights: Vec<f64>,
    /// All ordered pairs `n != n'`.
    pub ratios: Vec<BranchingRatio>,
}

impl BranchingTable {
    /// Largest `|left - right|` over defined ratios and over the weights.
    pub fn max_discrepancy(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, b) in self.left_weights.iter().zip(&self.right_weights) {
            worst = worst.max((a - b).abs());
        }
        for r in &self.ratios {
            if let (Some(a), Some(b)) = (r.left, r.right) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    pub fn ratio(&self, n: usize, n_prime: usize) -> Option<&BranchingRatio> {
        self.ratios
            .iter()
            .find(|r| r.n == n && r.n_prime == n_prime)
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

/// Branching ratios between memory values of branch `i`, once from the
/// weighted coefficient sums and once from projector traces against the
/// conditional density matrix.
pub fn branching_ratios(mem: &MemoryExpansion, i: usize) -> Result<BranchingTable> {
    if i >= mem.branches().len() {
        return Err(Error::InvalidArgument(format!("no branch {i}")));
    }
    let left_weights = mem.memory_weights(i);
    let rho = mem.conditional_density(i);
    let right_weights: Vec<f64> = (0..mem.memory_count())
        .map(|n| (mem.projector(n) * &rho).trace().re)
        .collect();
    let mut ratios = Vec::new();
    for n in 0..mem.memory_count() {
        for np in 0..mem.memory_count() {
            if n != np {
                ratios.push(BranchingRatio {
                    n,
                    n_prime: np,
                    left: ratio(left_weights[n], left_weights[np]),
                    right: ratio(right_weights[n], right_weights[np]),
                });
            }
        }
    }
    Ok(BranchingTable {
        left_weights,
        right_weights,
        ratios,
    })
}
