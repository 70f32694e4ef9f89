use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dynamics::IntegratorOptions;
use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_deviation, ComplexMatrix, StateVector, C64, HERMITIAN_TOL};
use crate::propagation::DEFAULT_GAP_THRESHOLD;

/// Largest total Hilbert-space dimension a config may request.
pub const MAX_TOTAL_DIM: usize = 4096;

/// A complex number written either as a bare real or as `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexSpec {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexSpec {
    pub fn value(self) -> C64 {
        match self {
            ComplexSpec::Real(x) => c(x, 0.0),
            ComplexSpec::Pair([re, im]) => c(re, im),
        }
    }
}

/// Row-major matrix of complex entries.
pub type MatrixSpec = Vec<Vec<ComplexSpec>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointerKind {
    /// Haar-random pointer states.
    #[default]
    Random,
    Computational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `H_A (x) I + I (x) H_B`; missing blocks are drawn from the seed.
    Separable {
        dims: [usize; 2],
        #[serde(default)]
        h_a: Option<MatrixSpec>,
        #[serde(default)]
        h_b: Option<MatrixSpec>,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// `sum_i |phi_i><phi_i| (x) strength * G_i`.
    Measurement {
        dims: [usize; 2],
        #[serde(default = "one")]
        strength: f64,
        #[serde(default)]
        pointers: PointerKind,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Random local terms plus `strength` times a random interaction.
    Random {
        dims: [usize; 2],
        strength: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    ExplicitMatrix {
        dims: [usize; 2],
        hamiltonian: MatrixSpec,
    },
    /// Two-qubit family with a tunable coupling between the crossing
    /// Schmidt coefficients.
    Crossing {
        coupling: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Separable { .. } => "separable",
            ModelSpec::Measurement { .. } => "measurement",
            ModelSpec::Random { .. } => "random",
            ModelSpec::ExplicitMatrix { .. } => "explicit-matrix",
            ModelSpec::Crossing { .. } => "crossing",
        }
    }

    pub fn dims(&self) -> [usize; 2] {
        match self {
            ModelSpec::Separable { dims, .. }
            | ModelSpec::Measurement { dims, .. }
            | ModelSpec::Random { dims, .. }
            | ModelSpec::ExplicitMatrix { dims, .. } => *dims,
            ModelSpec::Crossing { .. } => [2, 2],
        }
    }
}

/// One factor of a product state: a basis index, explicit amplitudes
/// (normalized on load) or `"random"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FactorSpec {
    Basis(usize),
    Amplitudes(Vec<ComplexSpec>),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Product {
        left: FactorSpec,
        right: FactorSpec,
    },
    /// `(phi_i + phi_j) (x) right / sqrt(2)` over the model's pointer states
    /// (the computational basis for other kinds).
    PointerSuperposition {
        i: usize,
        j: usize,
        right: FactorSpec,
    },
    /// Haar-random total state.
    Random {
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Total-state amplitudes, normalized on load.
    Amplitudes {
        amplitudes: Vec<ComplexSpec>,
    },
}

impl InitialSpec {
    pub fn is_product(&self) -> bool {
        matches!(
            self,
            InitialSpec::Product { .. } | InitialSpec::PointerSuperposition { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t_max: f64,
    /// Number of intervals; the grid has `steps + 1` points.
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsMode {
    /// Spectral propagation of the total state, decomposed at every step.
    #[default]
    Exact,
    /// Integration of the Schmidt equations of motion.
    Schmidt,
    /// Both, with a per-step comparison.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisKind {
    DeseparationRate,
    SuperpositionRate,
    Entropy,
    Stability,
    Nested,
    BranchingRatios,
    RandomPhaseNorms,
    Observation,
}

impl AnalysisKind {
    pub fn name(self) -> &'static str {
        match self {
            AnalysisKind::DeseparationRate => "deseparation_rate",
            AnalysisKind::SuperpositionRate => "superposition_rate",
            AnalysisKind::Entropy => "entropy",
            AnalysisKind::Stability => "stability",
            AnalysisKind::Nested => "nested",
            AnalysisKind::BranchingRatios => "branching_ratios",
            AnalysisKind::RandomPhaseNorms => "random_phase_norms",
            AnalysisKind::Observation => "observation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    /// Points in the short-time growth fit.
    pub fit_points: usize,
    /// `[d1, d2]` split of the environment for the nested expansion.
    pub environment_split: Option<[usize; 2]>,
    /// Block sizes of the memory register.
    pub memory_blocks: Vec<usize>,
    /// Terms per branch of random memory expansions, cycled over branches.
    pub memory_alphas: Vec<usize>,
    /// Random memory expansions checked by `branching_ratios`.
    pub expansions: usize,
    pub phase_sizes: Vec<usize>,
    pub phase_resamples: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            fit_points: 12,
            environment_split: None,
            memory_blocks: vec![2, 2],
            memory_alphas: vec![2, 3],
            expansions: 100,
            phase_sizes: vec![2, 4, 8, 16],
            phase_resamples: 200,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_gap_threshold() -> f64 {
    DEFAULT_GAP_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub hbar: f64,
    pub model: ModelSpec,
    pub initial: InitialSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub dynamics: DynamicsMode,
    #[serde(default)]
    pub integrator: IntegratorOptions,
    /// Gap below which a local minimum of `|p_a - p_b|` is logged.
    #[serde(default = "default_gap_threshold")]
    pub gap_threshold: f64,
    #[serde(default)]
    pub analyses: Vec<AnalysisKind>,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    /// Output directory, relative to the output root; defaults to `name`.
    #[serde(default)]
    pub output: Option<String>,
}

impl ScenarioConfig {
    /// Parse and validate JSON text. Schema errors carry the field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(path_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(value).map_err(path_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Output directory name below the root.
    pub fn output_name(&self) -> &str {
        self.output.as_deref().unwrap_or(&self.name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|ch| ch.is_ascii_alphanumeric() || "-_.".contains(ch))
            || self.name.starts_with('.')
        {
            return Err(Error::config(
                "name",
                "use letters, digits, '-', '_' and '.' (not leading)",
            ));
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::config("hbar", "must be a positive number"));
        }
        self.validate_model()?;
        self.validate_initial()?;
        if !(self.time.t_max > 0.0 && self.time.t_max.is_finite()) {
            return Err(Error::config("time.t_max", "must be > 0"));
        }
        if self.time.steps < 2 {
            return Err(Error::config("time.steps", "must be >= 2"));
        }
        self.integrator
            .validate()
            .map_err(|e| Error::config("integrator", e.to_string()))?;
        if !(self.gap_threshold > 0.0 && self.gap_threshold.is_finite()) {
            return Err(Error::config("gap_threshold", "must be > 0"));
        }
        self.validate_analyses()?;
        if let Some(out) = &self.output {
            let p = std::path::Path::new(out);
            let clean = p
                .components()
                .all(|c| matches!(c, std::path::Component::Normal(_)));
            if out.is_empty() || !clean {
                return Err(Error::config(
                    "output",
                    "must be a relative path without '..'",
                ));
            }
        }
        Ok(())
    }

    fn validate_model(&self) -> Result<()> {
        let [a, b] = self.model.dims();
        if a == 0 || b == 0 {
            return Err(Error::config("model.dims", "dimensions must be >= 1"));
        }
        if a.saturating_mul(b) > MAX_TOTAL_DIM {
            return Err(Error::config(
                "model.dims",
                format!("total dimension above {MAX_TOTAL_DIM}"),
            ));
        }
        let strength_ok = |s: f64| s >= 0.0 && s.is_finite();
        match &self.model {
            ModelSpec::Separable { h_a, h_b, .. } => {
                if let Some(m) = h_a {
                    check_matrix(m, a, "model.h_a")?;
                }
                if let Some(m) = h_b {
                    check_matrix(m, b, "model.h_b")?;
                }
            }
            ModelSpec::Measurement { strength, .. } => {
                if !strength_ok(*strength) {
                    return Err(Error::config("model.strength", "must be >= 0"));
                }
            }
            ModelSpec::Random { strength, .. } => {
                if a < 2 || b < 2 {
                    return Err(Error::config("model.dims", "random models need dims >= 2"));
                }
                if !strength_ok(*strength) {
                    return Err(Error::config("model.strength", "must be >= 0"));
                }
            }
            ModelSpec::ExplicitMatrix { hamiltonian, .. } => {
                check_matrix(hamiltonian, a * b, "model.hamiltonian")?;
            }
            ModelSpec::Crossing { coupling, .. } => {
                if !strength_ok(*coupling) {
                    return Err(Error::config("model.coupling", "must be >= 0"));
                }
            }
        }
        Ok(())
    }

    fn validate_initial(&self) -> Result<()> {
        let [a, b] = self.model.dims();
        match &self.initial {
            InitialSpec::Product { left, right } => {
                check_factor(left, a, "initial.left")?;
                check_factor(right, b, "initial.right")?;
            }
            InitialSpec::PointerSuperposition { i, j, right } => {
                if *i >= a {
                    return Err(Error::config("initial.i", format!("must be < {a}")));
                }
                if *j >= a || j == i {
                    return Err(Error::config(
                        "initial.j",
                        format!("must be < {a} and differ from i"),
                    ));
                }
                check_factor(right, b, "initial.right")?;
            }
            InitialSpec::Random { .. } => {}
            InitialSpec::Amplitudes { amplitudes } => {
                check_vector(amplitudes, a * b, "initial.amplitudes")?;
            }
        }
        Ok(())
    }

    fn validate_analyses(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        let [_, b] = self.model.dims();
        for (k, kind) in self.analyses.iter().enumerate() {
            let path = format!("analyses[{k}]");
            if !seen.insert(*kind) {
                return Err(Error::config(
                    path,
                    format!("`{}` listed twice", kind.name()),
                ));
            }
            match kind {
                AnalysisKind::DeseparationRate if !self.initial.is_product() => {
                    return Err(Error::config(
                        path,
                        "deseparation_rate needs a product initial state",
                    ));
                }
                AnalysisKind::SuperpositionRate | AnalysisKind::Stability => {
                    let ModelSpec::Measurement { dims, .. } = self.model else {
                        return Err(Error::config(
                            path,
                            format!("`{}` needs a measurement model", kind.name()),
                        ));
                    };
                    if dims[0] < 2 {
                        return Err(Error::config(path, "needs at least two pointer states"));
                    }
                }
                AnalysisKind::Nested => match self.analysis.environment_split {
                    Some([d1, d2]) if d1 >= 1 && d2 >= 1 && d1 * d2 == b => {}
                    _ => {
                        return Err(Error::config(
                            "analysis.environment_split",
                            format!("nested analysis needs [d1, d2] with d1 * d2 = {b}"),
                        ))
                    }
                },
                _ => {}
            }
        }
        let o = &self.analysis;
        if o.fit_points < 3 {
            return Err(Error::config("analysis.fit_points", "must be >= 3"));
        }
        if o.memory_blocks.is_empty() || o.memory_blocks.contains(&0) {
            return Err(Error::config(
                "analysis.memory_blocks",
                "need non-empty blocks",
            ));
        }
        if o.memory_alphas.is_empty() || o.memory_alphas.contains(&0) {
            return Err(Error::config("analysis.memory_alphas", "need counts >= 1"));
        }
        if o.phase_sizes.is_empty() || o.phase_sizes.contains(&0) {
            return Err(Error::config("analysis.phase_sizes", "need sizes >= 1"));
        }
        if o.phase_resamples == 0 {
            return Err(Error::config("analysis.phase_resamples", "must be >= 1"));
        }
        Ok(())
    }
}

fn path_error(e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = e.path().to_string();
    let inner = e.into_inner();
    let path = if path == "." {
        "<root>".to_string()
    } else {
        path
    };
    Error::config(path, inner.to_string())
}

fn check_matrix(m: &MatrixSpec, n: usize, path: &str) -> Result<()> {
    if m.len() != n || m.iter().any(|row| row.len() != n) {
        return Err(Error::config(path, format!("must be {n}x{n}")));
    }
    let mat = matrix(m);
    if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::config(path, "non-finite entry"));
    }
    let dev = hermitian_deviation(&mat);
    if dev > HERMITIAN_TOL {
        return Err(Error::config(
            path,
            format!("not Hermitian (deviation {dev:e})"),
        ));
    }
    Ok(())
}

fn check_vector(v: &[ComplexSpec], n: usize, path: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::config(
            path,
            format!("needs {n} amplitudes, got {}", v.len()),
        ));
    }
    let norm = vector(v).norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::config(
            path,
            "amplitudes must be finite and not all zero",
        ));
    }
    Ok(())
}

fn check_factor(f: &FactorSpec, n: usize, path: &str) -> Result<()> {
    match f {
        FactorSpec::Basis(k) if *k >= n => {
            Err(Error::config(path, format!("basis index must be < {n}")))
        }
        FactorSpec::Basis(_) => Ok(()),
        FactorSpec::Amplitudes(v) => check_vector(v, n, path),
        FactorSpec::Named(s) if s == "random" => Ok(()),
        FactorSpec::Named(s) => Err(Error::config(
            path,
            format!("unknown factor `{s}` (use an index, amplitudes or \"random\")"),
        )),
    }
}

pub(crate) fn matrix(m: &MatrixSpec) -> ComplexMatrix {
    let n = m.len();
    ComplexMatrix::from_fn(n, n, |r, col| m[r][col].value())
}

/// Amplitudes as given (not normalized).
pub(crate) fn vector(v: &[ComplexSpec]) -> StateVector {
    StateVector::from_iterator(v.len(), v.iter().map(|z| z.value()))
}
