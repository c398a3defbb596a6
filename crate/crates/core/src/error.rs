use thiserror::Error;

/// Errors raised by the geometry kernel, the solvers and the diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vector is not a future timelike point (<v,v> = {inner:e}, v0 = {v0:e})")]
    NotTimelike { inner: f64, v0: f64 },

    #[error("frame is degenerate: rank {rank} < {m}")]
    DegenerateFrame { rank: usize, m: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("initial data support does not fit in the box: {0}")]
    SupportTooLarge(String),

    #[error("heat step ds = {ds:e} exceeds the explicit stability bound {bound:e}")]
    StabilityViolation { ds: f64, bound: f64 },

    #[error("heat flow did not converge within {levels} levels (sup gradient {sup_gradient:e} > {eps_stop:e})")]
    NoConvergence {
        levels: usize,
        sup_gradient: f64,
        eps_stop: f64,
    },

    #[error("gauge rotation is not orthogonal (|UU^T - I| = {deviation:e})")]
    NotOrthogonal { deviation: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("s-tail bound {bound:e} exceeds tolerance {tolerance:e}")]
    TailTooLarge { bound: f64, tolerance: f64 },

    #[error("cone leaves the periodic box: {0}")]
    ConeOutsideBox(String),

    #[error("vector field is singular: {0}")]
    SingularField(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: String, source: Box<Error> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::NotTimelike { .. }
                | Error::NoConvergence { .. }
                | Error::TailTooLarge { .. }
                | Error::StabilityViolation { .. }
                | Error::DegenerateFrame { .. }
        )
    }

    /// The underlying error, with pipeline stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn at_stage(stage: &str) -> impl FnOnce(Error) -> Error + '_ {
        move |e| Error::Stage { stage: stage.to_string(), source: Box::new(e) }
    }

    pub(crate) fn validation(key: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
