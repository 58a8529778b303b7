use thiserror::Error;

/// Errors raised while building or solving an immersed NSCH problem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("level set has no interior inside the ambient domain")]
    EmptyDomain,

    #[error("level-set gradient vanishes at ({x:e}, {y:e})")]
    SingularGeometry { x: f64, y: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite integrand in element {element} ({what})")]
    NonFinite { element: usize, what: &'static str },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("Newton iteration did not converge: {0}")]
    NewtonFailure(String),

    #[error("time step halved {halvings} times without convergence at t = {time:e}")]
    TooManyHalvings { halvings: u32, time: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
