//! Numerical laboratory for bipartite pure-state dynamics.
//!
//! The crate evolves a total state under a time-independent Hamiltonian,
//! follows its Schmidt decomposition `psi = sum_i sqrt(p_i) phi_i (x) Phi_i`
//! through time, integrates the nonlinear equations of motion obeyed by the
//! Schmidt coefficients and factor states directly, and evaluates derived
//! quantities such as the deseparation rate, nested memory expansions and
//! branching ratios.
//!
//! Module map:
//!
//! * [`linalg`]: dense complex kernels, Schmidt decomposition, partial traces,
//!   spectral propagators.
//! * [`model`]: bipartite Hamiltonians, pointer bases, initial states.
//! * [`propagation`]: exact evolution, branch-tracked Schmidt trajectories,
//!   event detection.
//! * [`dynamics`]: right-hand sides of the Schmidt equations of motion and a
//!   resonance-aware adaptive integrator.
//! * [`analysis`]: deseparation rates, entropy, nested/memory expansions,
//!   observation maps, branching ratios.
//! * [`scenario`]: config-driven runs, sweeps and comparisons with
//!   deterministic artifacts.
//! * [`exec`]: data-parallel helpers (rayon behind the `parallel` feature).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod model;
pub mod propagation;
pub mod scenario;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, Dims, SchmidtForm, Side, StateVector, C64};

pub use nalgebra;
pub use num_complex;
