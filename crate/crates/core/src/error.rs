use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("pole of {function} at {at}")]
    Pole { function: &'static str, at: String },

    #[error("argument outside the domain of {function}: {detail}")]
    Domain { function: &'static str, detail: String },

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    #[error("{what} did not reach tolerance {tol:e} within {limit} terms")]
    NonConvergence {
        what: &'static str,
        limit: u64,
        tol: f64,
    },

    #[error("quadrature step halving disagreed by {diff:e} (limit {limit:e})")]
    QuadratureFailure { diff: f64, limit: f64 },

    #[error("{what}: computed {computed} but independent check gave {expected}")]
    Verification {
        what: String,
        computed: f64,
        expected: f64,
    },

    #[error("degenerate {0}")]
    Degenerate(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn domain(function: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            function,
            detail: detail.into(),
        }
    }
}
