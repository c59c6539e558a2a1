use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("window pair is not constant-overlap-add (max deviation {deviation:.3e})")]
    NotCola { deviation: f64 },

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("matrix is not Hermitian (max asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("covariance is singular or not positive definite")]
    Singular,

    #[error("numerical breakdown: g^H Phi^-1 g = {0:.3e}")]
    Breakdown(f64),

    #[error("projection annihilates the steering vector (|Psi g| = {0:.3e})")]
    Annihilated(f64),

    #[error("distortion {delta:.4} >= 1 makes the bound vacuous")]
    VacuousBound { delta: f64 },

    #[error("non-positive output power {0:.3e}")]
    NonPositivePower(f64),

    #[error("invalid spectrum: {0}")]
    Spectrum(String),

    #[error("all candidate outputs are NaN at frame {frame}, bin {bin}")]
    AllNan { frame: usize, bin: usize },

    #[error("sample rate {found} Hz does not match expected {expected} Hz")]
    SampleRate { expected: u32, found: u32 },

    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),

    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),
}
