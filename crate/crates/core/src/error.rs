use thiserror::Error;

use crate::poly::PolyError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NlwError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("parameter xi_{index} = {value} lies outside [{lo}, {hi}]")]
    ParameterDomain { index: usize, value: f64, lo: f64, hi: f64 },
    #[error("cap error: {0}")]
    Cap(String),
    #[error("resonant term {key} (divisor {divisor:e} below threshold {threshold:e})")]
    ResonantTerm { key: String, divisor: f64, threshold: f64 },
    #[error("resonance in the order-2 step at {key} (divisor {divisor:e} below threshold {threshold:e})")]
    Order2Resonance { key: String, divisor: f64, threshold: f64 },
    #[error("no convergence after {sweeps} sweeps, residual {residual:e}")]
    Convergence { sweeps: usize, residual: f64 },
    #[error("flow integration failed: {0}")]
    Flow(String),
    #[error("non-finite state at t = {t_last_finite}")]
    Blowup { t_last_finite: f64 },
    #[error("invalid configuration at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for NlwError {
    fn from(e: std::io::Error) -> Self {
        NlwError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, NlwError>;
