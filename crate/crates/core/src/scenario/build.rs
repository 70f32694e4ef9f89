use super::config::{
    matrix, vector, FactorSpec, InitialSpec, ModelSpec, PointerKind, ScenarioConfig,
};
use crate::error::{Error, Result};
use crate::linalg::random::{derive_seed, random_hermitian, random_state, rng};
use crate::linalg::{basis_state, columns, Dims, StateVector};
use crate::model::{
    build_measurement, build_random, build_separable, make_initial, BipartiteModel, CrossingFamily,
    InitialState, PointerBasis,
};

/// Child-seed slots of a run seed.
pub(crate) mod slot {
    pub const MODEL: u64 = 0;
    pub const INITIAL: u64 = 1;
    pub const LEFT_FACTOR: u64 = 2;
    pub const RIGHT_FACTOR: u64 = 3;
    /// Analyses use `ANALYSIS + k` for the `k`-th analysis kind.
    pub const ANALYSIS: u64 = 16;
}

/// Everything a run needs besides the time grid.
#[derive(Debug, Clone)]
pub struct Setup {
    pub model: BipartiteModel,
    /// Present for measurement models.
    pub pointer: Option<PointerBasis>,
    pub psi0: StateVector,
}

pub fn build_setup(cfg: &ScenarioConfig) -> Result<Setup> {
    let (model, pointer) = build_model(cfg)?;
    let model = model
        .with_hbar(cfg.hbar)
        .map_err(|e| Error::config("hbar", e.to_string()))?;
    let psi0 = build_initial(cfg, pointer.as_ref())?;
    Ok(Setup {
        model,
        pointer,
        psi0,
    })
}

fn model_seed(cfg: &ScenarioConfig, explicit: Option<u64>) -> u64 {
    explicit.unwrap_or_else(|| derive_seed(cfg.seed, slot::MODEL))
}

fn build_model(cfg: &ScenarioConfig) -> Result<(BipartiteModel, Option<PointerBasis>)> {
    let wrap = |e: Error| Error::config("model", e.to_string());
    match &cfg.model {
        ModelSpec::Separable {
            dims,
            h_a,
            h_b,
            seed,
        } => {
            let mut r = rng(model_seed(cfg, *seed));
            let a = h_a
                .as_ref()
                .map_or_else(|| random_hermitian(&mut r, dims[0]), matrix);
            let b = h_b
                .as_ref()
                .map_or_else(|| random_hermitian(&mut r, dims[1]), matrix);
            Ok((build_separable(&a, &b).map_err(wrap)?, None))
        }
        ModelSpec::Measurement {
            dims,
            strength,
            pointers,
            seed,
        } => {
            let d = Dims::new(dims[0], dims[1]);
            let s = model_seed(cfg, *seed);
            let pointer = match pointers {
                PointerKind::Random => PointerBasis::random(d, *strength, s),
                PointerKind::Computational => {
                    let mut r = rng(s);
                    let cond = (0..d.a)
                        .map(|_| random_hermitian(&mut r, d.b).scale(*strength))
                        .collect();
                    PointerBasis::computational(cond).map_err(wrap)?
                }
            };
            let model = build_measurement(&pointer).map_err(wrap)?;
            Ok((model, Some(pointer)))
        }
        ModelSpec::Random {
            dims,
            strength,
            seed,
        } => {
            let d = Dims::new(dims[0], dims[1]);
            Ok((
                build_random(d, *strength, model_seed(cfg, *seed)).map_err(wrap)?,
                None,
            ))
        }
        ModelSpec::ExplicitMatrix { dims, hamiltonian } => {
            let d = Dims::new(dims[0], dims[1]);
            let model = BipartiteModel::new(d, matrix(hamiltonian))
                .map_err(|e| Error::config("model.hamiltonian", e.to_string()))?;
            Ok((model, None))
        }
        ModelSpec::Crossing { coupling, seed } => {
            let family = CrossingFamily::from_seed(model_seed(cfg, *seed));
            Ok((family.model(*coupling).map_err(wrap)?, None))
        }
    }
}

fn factor(cfg: &ScenarioConfig, spec: &FactorSpec, dim: usize, slot: u64) -> StateVector {
    match spec {
        FactorSpec::Basis(k) => basis_state(dim, *k),
        FactorSpec::Amplitudes(v) => {
            let v = vector(v);
            v.unscale(v.norm())
        }
        FactorSpec::Named(_) => random_state(&mut rng(derive_seed(cfg.seed, slot)), dim),
    }
}

fn build_initial(cfg: &ScenarioConfig, pointer: Option<&PointerBasis>) -> Result<StateVector> {
    let [a, b] = cfg.model.dims();
    let spec = match &cfg.initial {
        InitialSpec::Product { left, right } => InitialState::Factorized {
            phi: factor(cfg, left, a, slot::LEFT_FACTOR),
            big_phi: factor(cfg, right, b, slot::RIGHT_FACTOR),
        },
        InitialSpec::PointerSuperposition { i, j, right } => InitialState::PointerSuperposition {
            basis: pointer.map_or_else(
                || columns(&crate::linalg::ComplexMatrix::identity(a, a)),
                |p| p.states().to_vec(),
            ),
            i: *i,
            j: *j,
            big_phi: factor(cfg, right, b, slot::RIGHT_FACTOR),
        },
        InitialSpec::Random { seed } => InitialState::Random {
            dims: Dims::new(a, b),
            seed: seed.unwrap_or_else(|| derive_seed(cfg.seed, slot::INITIAL)),
        },
        InitialSpec::Amplitudes { amplitudes } => {
            let v = vector(amplitudes);
            return Ok(v.unscale(v.norm()));
        }
    };
    make_initial(&spec).map_err(|e| Error::config("initial", e.to_string()))
}
