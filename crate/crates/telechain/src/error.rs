use thiserror::Error;

use crate::dense::DenseError;
use crate::gate::GateError;
use crate::observable::ObservableError;
use crate::pauli::PauliError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error("unknown state label {0:?}")]
    Label(String),
    #[error("logical input not normalized (|α|²+|β|² = {0})")]
    Normalization(f64),
    #[error("logical slots: {0}")]
    LogicalSlots(String),
    #[error("site {site} out of range 1..={num_sites}")]
    SiteRange { site: usize, num_sites: usize },
    #[error("{num_sites} sites exceed the dense statevector limit of {limit}")]
    TooLarge { num_sites: usize, limit: usize },
    #[error("outcome {outcome} of {id} is impossible (probability {probability:e}){}", fmt_prefix(.prefix))]
    ImpossibleOutcome { id: String, outcome: u8, probability: f64, prefix: String },
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("{0}")]
    Usage(String),
}

fn fmt_prefix(prefix: &str) -> String {
    if prefix.is_empty() {
        String::new()
    } else {
        format!(" after outcomes {prefix}")
    }
}

impl Error {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema { path: path.into(), message: message.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
