use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Variants are grouped by how a caller should react: bad input
/// (`Validation`, `Range`, `Io`, `Parse`), numerical failure (`Numeric`,
/// `NonConvergence`, `Unreachable`) and too little data (`InsufficientData`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error(
        "wavelength {wavelength_nm} nm outside the range of `{material}` [{min_nm}, {max_nm}] nm"
    )]
    Range {
        material: String,
        wavelength_nm: f64,
        min_nm: f64,
        max_nm: f64,
    },

    #[error("numeric error in layer {layer}: {reason}")]
    Numeric { layer: usize, reason: String },

    #[error("no convergence after {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },

    #[error("threshold {threshold} is never reached: {detail}")]
    Unreachable { threshold: f64, detail: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("at grid point (gap {gap_nm} nm, wavelength {wavelength_nm} nm): {source}")]
    AtGridPoint {
        gap_nm: f64,
        wavelength_nm: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Coarse classification used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Validation(_) | Error::Range { .. } | Error::Parse(_) | Error::Io(_) => {
                ErrorKind::Input
            }
            Error::Numeric { .. } | Error::NonConvergence { .. } | Error::Unreachable { .. } => {
                ErrorKind::Numeric
            }
            Error::InsufficientData(_) => ErrorKind::InsufficientData,
            Error::AtGridPoint { source, .. } => source.kind(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numeric,
    InsufficientData,
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
