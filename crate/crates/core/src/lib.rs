//! Recover the hidden vertex correspondence between two correlated
//! Erdos-Renyi graphs.
//!
//! Both observed graphs are independent edge subsamples of a common parent
//! graph, one of them with its vertices relabeled by an unknown permutation.
//! The matcher assigns each vertex a short sign vector ("signature") built
//! from degree statistics that survive the subsampling noise, and matches
//! vertices whose signatures agree on enough coordinates.
//!
//! Module map:
//! - [`graph`]: bit-parallel graph storage and vertex sets.
//! - [`binom`]: binomial CDF and the quantile cutoffs behind the first
//!   signature stage.
//! - [`model`]: the correlated random-graph generator and permutations.
//! - [`matcher`]: the multistage matching algorithm, a simplified single-pass
//!   variant, and the parameter recipes.
//! - [`diagnostics`]: empirical measurements of the set overlaps the
//!   algorithm's correctness rests on.

pub mod binom;
pub mod diagnostics;
pub mod graph;
pub mod matcher;
pub mod model;

use std::fmt;
use std::io;

/// Crate-wide error type. `InvalidInput` covers contract violations detected
/// at API boundaries; `Io`/`Parse` cover instance (de)serialization.
#[derive(Debug)]
pub enum Error {
    InvalidInput(String),
    Io(io::Error),
    Parse(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
