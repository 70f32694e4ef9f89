use crate::error::{Error, Result};
use crate::linalg::{
    check_normalized, orthonormality_deviation, schmidt_decompose, tensor_product, Dims,
    SchmidtForm, StateVector, EPS_RANK,
};

/// `Phi_i = sum_alpha sqrt(q_ia) chi1_ia (x) chi2_ia` for one branch, over an
/// environment split as `d1 x d2`. Only terms with `q > EPS_RANK` are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedBranch {
    pub coeffs: Vec<f64>,
    pub first: Vec<StateVector>,
    pub second: Vec<StateVector>,
}

impl NestedBranch {
    /// `q_ia`.
    pub fn weights(&self) -> Vec<f64> {
        self.coeffs.iter().map(|s| s * s).collect()
    }

    pub fn reconstruct(&self) -> StateVector {
        let d = self.first[0].len() * self.second[0].len();
        let mut out = StateVector::zeros(d);
        for ((s, a), b) in self.coeffs.iter().zip(&self.first).zip(&self.second) {
            out += tensor_product(a, b).expect("non-empty factors") * crate::linalg::c(*s, 0.0);
        }
        out
    }

    /// `-sum_alpha q ln q`.
    pub fn entropy(&self) -> f64 {
        super::entanglement_entropy(&self.weights()).unwrap_or(f64::NAN)
    }
}

/// Schmidt expansion of an environment state across a further `d1 x d2`
/// split.
pub fn nested_schmidt(big_phi: &StateVector, d1: usize, d2: usize) -> Result<NestedBranch> {
    if d1 == 0 || d2 == 0 || d1 * d2 != big_phi.len() {
        return Err(Error::dims(format!(
            "environment of dimension {} does not split as {d1} x {d2}",
            big_phi.len()
        )));
    }
    check_normalized(big_phi)?;
    let form = schmidt_decompose(big_phi, Dims::new(d1, d2))?;
    let keep: Vec<usize> = (0..form.branch_count())
        .filter(|&k| form.coeffs()[k].powi(2) > EPS_RANK)
        .collect();
    Ok(NestedBranch {
        coeffs: keep.iter().map(|&k| form.coeffs()[k]).collect(),
        first: keep.iter().map(|&k| form.left()[k].clone()).collect(),
        second: keep.iter().map(|&k| form.right()[k].clone()).collect(),
    })
}

/// Nested expansion of every occupied branch of a Schmidt form.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedDecomposition {
    pub d1: usize,
    pub d2: usize,
    /// Outer branch index and its nested expansion.
    pub branches: Vec<(usize, NestedBranch)>,
}

impl NestedDecomposition {
    pub fn from_form(form: &SchmidtForm, d1: usize, d2: usize) -> Result<Self> {
        let mut branches = Vec::new();
        for (i, (s, big)) in form.coeffs().iter().zip(form.right()).enumerate() {
            if s * s > EPS_RANK {
                branches.push((i, nested_schmidt(big, d1, d2)?));
            }
        }
        Ok(NestedDecomposition { d1, d2, branches })
    }

    /// Largest violation of the weight sum, factor orthonormality and
    /// reconstruction of the given environment states.
    pub fn residual(&self, form: &SchmidtForm) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, b) in &self.branches {
            worst = worst.max((b.weights().iter().sum::<f64>() - 1.0).abs());
            worst = worst.max(orthonormality_deviation(&b.first));
            worst = worst.max(orthonormality_deviation(&b.second));
            worst = worst.max((b.reconstruct() - &form.right()[*i]).norm());
        }
        worst
    }
}
