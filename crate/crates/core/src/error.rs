use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid frequency bounds [{min}, {max}]: need 0 < min < max")]
    InvalidBounds { min: f64, max: f64 },

    #[error("invalid node count {0}: need at least 2")]
    InvalidCount(usize),

    #[error("invalid frequency {0}: must be positive")]
    InvalidFrequency(f64),

    #[error("degenerate Wronskian at omega = {omega} (|W| = {magnitude:e})")]
    DegenerateWronskian { omega: f64, magnitude: f64 },

    #[error("Green's function failed at omega_q = {omega}, pair ({i}, {j}): {source}")]
    GreensAt {
        omega: f64,
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("environment kind {0} does not support this operation")]
    UnsupportedEnvironment(&'static str),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("tabulated data covers [{table_min}, {table_max}] but grid spans [{grid_min}, {grid_max}]")]
    Coverage {
        table_min: f64,
        table_max: f64,
        grid_min: f64,
        grid_max: f64,
    },

    #[error("emitter {0} position is not present in the Green's table")]
    MissingPosition(usize),

    #[error("overlap matrix at omega = {omega} has eigenvalue {eigenvalue:e} below -{tolerance:e}")]
    IndefiniteOverlap {
        omega: f64,
        eigenvalue: f64,
        tolerance: f64,
    },

    #[error("Im G at omega = {omega} is not positive semidefinite: eigenvalue {eigenvalue:e}")]
    NonPassive { omega: f64, eigenvalue: f64 },

    #[error("emitter {emitter} has vanishing self-coupling at omega = {omega}")]
    VanishingSelfCoupling { emitter: usize, omega: f64 },

    #[error("invalid initial state: {0}")]
    InvalidKind(String),

    #[error("time step {dt} exceeds the stability guard {limit}")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("observer failed at t = {t}: {message}")]
    Observer { t: f64, message: String },

    #[error("operation needs N = {expected} emitters, got {got}")]
    WrongN { expected: usize, got: usize },

    #[error("profile shape mismatch: {0}")]
    ProfileMismatch(String),

    #[error("two-photon population {0:e} is below the conditional floor")]
    EmptyTwoPhotonSector(f64),

    #[error("dense oracle too large: N*Q = {0} exceeds 64")]
    TooLarge(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 1 for bad input, 2 for numerical failures, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Csv(_) => 3,
            Error::Config(_)
            | Error::Json(_)
            | Error::Parse { .. }
            | Error::Coverage { .. }
            | Error::MissingPosition(_)
            | Error::InvalidKind(_)
            | Error::InvalidBounds { .. }
            | Error::InvalidCount(_)
            | Error::InvalidFrequency(_)
            | Error::StepTooLarge { .. }
            | Error::WrongN { .. }
            | Error::UnsupportedEnvironment(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
