use std::fmt;

/// Which bellow of the antagonistic pair a quantity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Actuator {
    /// Expands as the payload position grows.
    First,
    /// Contracts as the payload position grows.
    Second,
}

impl fmt::Display for Actuator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actuator::First => f.write_str("actuator 1"),
            Actuator::Second => f.write_str("actuator 2"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("position x = {x:e} m is outside the admissible range of {actuator} (contraction {contraction:e} m, margin {margin:e} m)")]
    ActuatorDomain {
        actuator: Actuator,
        x: f64,
        contraction: f64,
        margin: f64,
    },

    #[error("{quantity} = {value:e} is out of range, expected {expected}")]
    OutOfRange {
        quantity: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("{}", format_parse_error(*line, key, message))]
    Parse {
        line: Option<usize>,
        key: String,
        message: String,
    },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("unknown sweep parameter `{0}`")]
    UnknownParameter(String),

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Simulation(Box<crate::simulation::SimulationError>),
}

impl From<crate::simulation::SimulationError> for Error {
    fn from(e: crate::simulation::SimulationError) -> Self {
        Error::Simulation(Box::new(e))
    }
}

fn format_parse_error(line: Option<usize>, key: &str, message: &str) -> String {
    match (line, key.is_empty()) {
        (Some(line), false) => format!("line {line}, key `{key}`: {message}"),
        (Some(line), true) => format!("line {line}: {message}"),
        (None, false) => format!("key `{key}`: {message}"),
        (None, true) => message.to_string(),
    }
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
