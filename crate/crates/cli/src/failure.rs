//! Errors carrying the process exit code they map to.

use std::fmt;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_STAGE: u8 = 3;
pub const EXIT_EXTERNAL: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: EXIT_CONFIG, error: error.into() }
    }

    pub fn stage(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: EXIT_STAGE, error: error.into() }
    }

    pub fn external(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: EXIT_EXTERNAL, error: error.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T> = Result<T, Failure>;

/// Attaches an exit code to any error convertible to `anyhow::Error`.
pub trait Classify<T> {
    fn or_config(self) -> CliResult<T>;
    fn or_stage(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_config(self) -> CliResult<T> {
        self.map_err(Failure::config)
    }

    fn or_stage(self) -> CliResult<T> {
        self.map_err(Failure::stage)
    }
}
