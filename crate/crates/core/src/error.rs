use thiserror::Error;

/// Errors raised by the numerical kernels and the scenario runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("state is not normalized (norm = {norm})")]
    NotNormalized { norm: f64 },

    #[error("matrix is not Hermitian (max |M - M^dagger| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not unitary (max |U^dagger U - I| = {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("basis is not orthonormal and complete: {0}")]
    IncompleteBasis(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate Schmidt spectrum: |p[{a}] - p[{b}]| = {gap:e}")]
    DegenerateSpectrum { a: usize, b: usize, gap: f64 },

    #[error("form is not aligned with the pointer basis (branch {branch}, overlap {overlap})")]
    NotAligned { branch: usize, overlap: f64 },

    #[error("step size underflow at t = {t} (h = {step:e}){}", pair.map(|(a, b)| format!(", branches ({a}, {b})")).unwrap_or_default())]
    StepUnderflow {
        t: f64,
        step: f64,
        pair: Option<(usize, usize)>,
    },

    #[error("probability resonance at t = {t}: |p[{a}] - p[{b}]| = {gap:e}")]
    Resonance {
        t: f64,
        a: usize,
        b: usize,
        gap: f64,
    },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerics rather than of the input description.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateSpectrum { .. }
                | Error::StepUnderflow { .. }
                | Error::Resonance { .. }
                | Error::NotAligned { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
