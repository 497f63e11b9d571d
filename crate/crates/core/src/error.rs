use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two atoms sit on top of each other, so the dipolar coupling diverges.
    #[error("singular geometry: zero separation between atoms {0} and {1}")]
    SingularGeometry(usize, usize),

    #[error(
        "step size underflow at t = {time:.6e} (step {step:.3e}); closest pair separation {}",
        min_separation.map(|r| format!("{r:.3e}")).unwrap_or_else(|| "unknown".into())
    )]
    Stiffness {
        time: f64,
        step: f64,
        min_separation: Option<f64>,
    },

    #[error("norm drift {drift:.3e} exceeds the allowed 1e-9")]
    NormDrift { drift: f64 },

    #[error("curve support: {0}")]
    CurveSupport(String),

    #[error("quadrature did not converge: estimated error {error:.3e} after {intervals} intervals")]
    Quadrature { error: f64, intervals: usize },

    #[error("evolution failed for configuration {config_index} at detuning {detuning}: {source}")]
    EnsembleMember {
        config_index: usize,
        detuning: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
