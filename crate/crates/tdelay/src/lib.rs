//! Time-delay embedding toolkit: delay-coordinate reconstruction of scalar
//! time series, local-constant (nearest-history) prediction with its error
//! statistics, fractal dimension estimators, false-nearest-neighbor delay
//! length selection, and exhaustive rank checks over finite orbit pairs.
//!
//! Everything is deterministic given explicit seeds; see [`rng`] for the
//! generator contract.

pub mod cli;
pub mod dimension;
pub mod embed;
pub mod experiments;
pub mod fnn;
pub mod io;
pub mod linalg;
pub mod orbitcomb;
pub mod predict;
pub mod rng;
pub mod systems;

use std::fmt;

#[derive(Debug)]
pub enum Error {
    /// Arguments violate an operation's preconditions.
    InvalidInput(String),
    /// An orbit left the admissible region; carries the iterate index.
    Divergence { step: usize },
    /// A prediction query ball contained no usable neighbor.
    NoNeighbors,
    /// A query ball carries zero measure mass.
    NoMass,
    /// Too few usable scales for a slope fit.
    InsufficientScales,
    /// A stated hypothesis of a check does not hold for the given data.
    Precondition(String),
    Config(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Divergence { step } => write!(f, "orbit diverged at iterate {step}"),
            Error::NoNeighbors => write!(f, "no neighbors within the query radius"),
            Error::NoMass => write!(f, "query ball has zero measure mass"),
            Error::InsufficientScales => write!(f, "fewer than two usable scales"),
            Error::Precondition(msg) => write!(f, "precondition violated: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
