//! Crate-wide error type.

use thiserror::Error;

use crate::SensorId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{context}: dimension mismatch (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("covariance matrix must be symmetric positive semidefinite")]
    BadCovariance,

    #[error("noise bound must be nonnegative")]
    NegativeBound,

    #[error("truncated-noise rejection stalled after {attempts} attempts")]
    NoiseRejectionStall { attempts: u64 },

    #[error("sensor {sensor}: observable rank {rank} != indicator weight {weight}")]
    IndicatorRankMismatch {
        sensor: SensorId,
        rank: usize,
        weight: usize,
    },

    #[error("sensor {sensor}: steady-state gain computation diverged")]
    DivergedGain { sensor: SensorId },

    #[error("sensor {sensor}: joint neighborhood system is not observable")]
    JointObservability { sensor: SensorId },

    #[error("consensus weight {value} outside (0, {max})")]
    BadConsensusWeight { value: f64, max: f64 },

    #[error("sensor {sensor}: missing estimate from neighbor {neighbor}")]
    MissingNeighborEstimate {
        sensor: SensorId,
        neighbor: SensorId,
    },

    #[error("zero indicator vector spans no subspace")]
    UndefinedSubspace,

    #[error("cannot split {count} ids into {m} nonempty subsets")]
    InfeasiblePartition { count: usize, m: usize },

    #[error("attack budget q={q} exceeds half the neighborhood of {len}")]
    AttackBudget { q: usize, len: usize },

    #[error("selection budget q={q} exceeds half the candidate set of {len}")]
    SelectionBudget { q: usize, len: usize },

    #[error("unknown candidate id {id}")]
    UnknownCandidate { id: SensorId },

    #[error("candidate {id} already selected")]
    AlreadySelected { id: SensorId },

    #[error("{context}: candidate universes or recorded rounds disagree")]
    MismatchedUniverse { context: &'static str },
}
