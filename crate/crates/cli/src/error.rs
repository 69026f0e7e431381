use std::process::ExitCode;
use thiserror::Error;

/// Top-level failure classes, mapped one-to-one onto exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad scenario file, incompatible body/field combination, bad flag.
    #[error("{0}")]
    Config(String),
    /// The computation itself failed (integrator breakdown, singular
    /// inertia, no section crossings within the horizon).
    #[error("{0}")]
    Numerical(String),
    /// A self-check assertion did not hold.
    #[error("{0}")]
    SelfCheck(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(1),
            CliError::Numerical(_) => ExitCode::from(2),
            CliError::SelfCheck(_) => ExitCode::from(3),
        }
    }

    pub fn numerical(err: impl std::fmt::Display) -> Self {
        CliError::Numerical(err.to_string())
    }
}
