use thiserror::Error;

/// Failures of the closed-form kinematics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum KinematicsError {
    #[error("target lies outside the reachable workspace")]
    Unreachable,
    #[error("configuration is singular")]
    Singular,
    #[error("configuration is degenerate (angle undefined)")]
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("could not parse config: {0}")]
    Parse(String),
    #[error("could not read config `{path}`: {reason}")]
    Read { path: String, reason: String },
}

impl ConfigError {
    pub(crate) fn invalid(key: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key,
            reason: reason.into(),
        }
    }
}

/// Faults raised while stepping the simulator. Any of these terminates the episode.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("numerical divergence in {0}")]
    NumericalDiverged(&'static str),
    #[error("kinematics fault: {0}")]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("weight shape mismatch: {0}")]
    WeightShapeMismatch(String),
    #[error("policy produced a non-finite output")]
    NonFiniteOutput,
    #[error("malformed weights file: {0}")]
    Format(String),
    #[error("weights checksum mismatch (expected {expected}, found {found})")]
    Checksum { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-wide error for the orchestration layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("invalid episode: {0}")]
    Episode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
