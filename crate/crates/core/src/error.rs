use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the pipeline. Each variant names the stage that
/// produced it so the CLI can map it to an exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("Matsubara resonance: v_{k} = {v} is within tolerance of omega_c = {omega_c}")]
    MatsubaraResonance { k: usize, v: f64, omega_c: f64 },

    #[error("quadrature did not converge: estimated error {achieved:e} exceeds {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("unknown model preset `{0}` (expected triad-bent, triad-linear or fmo)")]
    UnknownPreset(String),

    #[error("hierarchy has {states} states, above the configured cap of {cap}")]
    DimensionOverflow { states: usize, cap: usize },

    #[error("inconsistent bath configuration: {0}")]
    BathConfig(String),

    #[error("truncation divergence at t = {time}: |Psi| = {norm:e} exceeds {limit:e}")]
    Divergence { time: f64, norm: f64, limit: f64 },

    #[error("positivity violated at t = {time}: minimum eigenvalue {min_eigenvalue:e}")]
    Positivity { time: f64, min_eigenvalue: f64 },

    #[error("initial state has weight {weight:e} outside the projection subspace")]
    InitialStateLeakage { weight: f64 },

    #[error("invalid subspace: {0}")]
    Subspace(String),

    #[error("zero propagator: the largest singular value is 0")]
    ZeroMatrix,

    #[error("matrix is not unitary: deviation {deviation:e}")]
    NotUnitary { deviation: f64 },

    #[error("register size mismatch: {0}")]
    RegisterMismatch(String),

    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    QubitIndex { index: usize, n_qubits: usize },

    #[error("error band is undefined for a vanishing exact population")]
    UndefinedBand,

    #[error("no shots recorded")]
    ZeroShots,

    #[error("rate fit failed: {0}")]
    Fit(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the command-line front end:
    /// 2 for configuration problems, 3 for numerical divergence,
    /// 4 for I/O failures and 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::UnknownPreset(_) | Error::Parse(_) | Error::Subspace(_) => 2,
            Error::Divergence { .. } | Error::Positivity { .. } | Error::Quadrature { .. } => 3,
            Error::Io { .. } => 4,
            _ => 1,
        }
    }
}
