//! Experiment harness around `netspan-core`: declarative TOML configs, the
//! design/verify/run/sweep pipelines, parallel Monte Carlo execution, and
//! CSV artifacts with reproducibility headers.

pub mod config;
pub mod formats;
pub mod runner;

use std::fmt;

/// Stable process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    VerificationFailed = 1,
    Infeasible = 2,
    Divergence = 3,
    Internal = 70,
    ConfigError = 64,
}

/// Harness-level error with its exit-code mapping.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("verification failed")]
    VerificationFailed,
    #[error(transparent)]
    Core(netspan_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => ExitCode::ConfigError as i32,
            CliError::VerificationFailed => ExitCode::VerificationFailed as i32,
            CliError::Core(netspan_core::Error::Infeasible { .. }) => ExitCode::Infeasible as i32,
            CliError::Core(netspan_core::Error::Divergence { .. }) => ExitCode::Divergence as i32,
            CliError::Core(netspan_core::Error::Config(_)) => ExitCode::ConfigError as i32,
            CliError::Io { .. } | CliError::Core(_) => ExitCode::Internal as i32,
        }
    }
}

impl From<netspan_core::Error> for CliError {
    fn from(e: netspan_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn io_err<P: fmt::Display>(path: P) -> impl FnOnce(std::io::Error) -> CliError {
    move |source| CliError::Io {
        path: path.to_string(),
        source,
    }
}

/// FNV-1a hash of the raw config bytes, printed in output headers.
pub fn config_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Tool version stamped into output headers.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
