//! Simulation harness: scenario construction, experiment orchestration, and
//! CSV/SVG artifact emission for the detection-scheduling library.

pub mod artifacts;
pub mod config;
pub mod csvout;
pub mod plot;
pub mod runner;
pub mod scenario;

/// Harness-level error split by exit code: configuration problems (exit 2)
/// versus runtime contract violations (exit 3).
#[derive(Debug)]
pub enum SimError {
    Config(String),
    Runtime(String),
}

impl std::fmt::Display for SimError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SimError::Config(msg) => write!(f, "config error: {msg}"),
            SimError::Runtime(msg) => write!(f, "runtime error: {msg}"),
        }
    }
}

impl std::error::Error for SimError {}

impl From<adsched_core::Error> for SimError {
    fn from(err: adsched_core::Error) -> Self {
        SimError::Runtime(err.to_string())
    }
}

impl From<std::io::Error> for SimError {
    fn from(err: std::io::Error) -> Self {
        SimError::Runtime(format!("io: {err}"))
    }
}
