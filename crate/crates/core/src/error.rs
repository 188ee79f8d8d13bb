use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("kernel {0} has no derivative formulas")]
    UnsupportedKernel(String),
    #[error("x = {x} is outside the interior of the support")]
    OutOfSupport { x: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("no closed-form embedding for target {target} with kernel {kernel}")]
    UnsupportedPair { target: String, kernel: String },
    #[error("divergent parameter: {0}")]
    DivergentParameter(String),
    #[error("no truncation order up to {k_max} reaches tolerance {tol:e} (lambda = {lambda})")]
    TruncationFailure { lambda: f64, tol: f64, k_max: usize },
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("FSSD requires at least one test location")]
    NoLocations,
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("missing cell at row {row}, column {column}")]
    MissingCell { row: usize, column: usize },
    #[error("dates are not strictly increasing at row {row}")]
    NonMonotoneDates { row: usize },
    #[error("panel has {len} rows, needs at least {needed}")]
    PanelTooShort { len: usize, needed: usize },
    #[error("covariance matrix is singular even after ridge regularization")]
    SingularCovariance,
    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by the numbers themselves rather than by
    /// malformed input or I/O.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DivergentParameter(_)
                | Error::TruncationFailure { .. }
                | Error::SingularCovariance
                | Error::OutOfSupport { .. }
                | Error::Infeasible(_)
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be positive and finite",
        })
    }
}

pub(crate) fn nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be nonnegative and finite",
        })
    }
}

pub(crate) fn finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite",
        })
    }
}
