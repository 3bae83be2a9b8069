//! Library behind the `nlc` binary. Every subcommand is a plain function
//! writing to a caller-supplied sink, so tests can drive it in-process.
//!
//! # Exit codes
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success: certified (`synthesize`), unsat (`verify`), region certified (`roa`) |
//! | 1 | not certified: iteration or time cap reached, or a delta-sat witness was found |
//! | 2 | usage error: bad arguments, invalid config, malformed system or checkpoint file |
//! | 3 | i/o error: a file could not be read or written |
//! | 4 | learner stuck: the training risk became non-finite |
//! | 5 | falsifier budget exhausted, or a box shrank to the width floor undecided |
//! | 6 | no region-of-attraction level could be certified |
//! | 7 | numerical failure: LQR initialisation, non-finite simulation state |

use std::path::PathBuf;

use neural_lyapunov::cegis::CegisError;
use neural_lyapunov::falsifier::FalsifierError;
use neural_lyapunov::roa::RoaError;
use thiserror::Error;

pub mod cli;
pub mod commands;
pub mod compare;
pub mod config;

pub use cli::{run, Cli};
pub use compare::{compare_roa, RoaComparison, RoaOptions};
pub use config::{ResolvedRun, RunConfig};

pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const NOT_CERTIFIED: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const LEARNER_STUCK: u8 = 4;
    pub const BUDGET: u8 = 5;
    pub const ROA_FAILED: u8 = 6;
    pub const NUMERICAL: u8 = 7;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Cegis(#[from] CegisError),
    #[error(transparent)]
    Falsifier(#[from] FalsifierError),
    #[error(transparent)]
    Roa(#[from] RoaError),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => exit::USAGE,
            CliError::Io { .. } => exit::IO,
            CliError::Cegis(e) => match e {
                CegisError::InvalidConfig(_) | CegisError::Checkpoint(_) | CegisError::System(_) => exit::USAGE,
                CegisError::Io { .. } => exit::IO,
                CegisError::FalsifierBudget { .. } => exit::BUDGET,
                CegisError::Falsifier(f) => falsifier_code(f),
                _ => exit::NUMERICAL,
            },
            CliError::Falsifier(f) => falsifier_code(f),
            CliError::Roa(e) => match e {
                RoaError::CannotCertify { .. } => exit::ROA_FAILED,
                RoaError::Falsifier(f) => falsifier_code(f),
                RoaError::InvalidArgument(_) => exit::USAGE,
                _ => exit::NUMERICAL,
            },
            CliError::Numerical(_) => exit::NUMERICAL,
        }
    }
}

fn falsifier_code(e: &FalsifierError) -> u8 {
    match e {
        FalsifierError::BudgetExhausted { .. } | FalsifierError::Inconclusive(_) => exit::BUDGET,
        FalsifierError::InvalidProblem(_) => exit::USAGE,
        _ => exit::NUMERICAL,
    }
}

pub(crate) fn io_error(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
