use alloc::string::String;

use crate::network::LaneId;
use crate::sim::VehicleId;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid network spec: {0}")]
    InvalidNetwork(&'static str),
    #[error("lane {0:?} is not an entry lane")]
    NotAnEntryLane(LaneId),
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("missing action for controllable AV {0:?}")]
    MissingAction(VehicleId),
    #[error("vehicle {0:?} is not a controllable AV")]
    NotControllable(VehicleId),
    #[error("non-finite observation input")]
    NonFiniteInput,
    #[error("shape mismatch: expected {expected} parameters, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("policy layout mismatch: expected {expected:?}, got {actual:?}")]
    LayoutMismatch { expected: [usize; 4], actual: [usize; 4] },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(&'static str),
    #[error("empty trajectory batch")]
    EmptyBatch,
    #[error("empty checkpoint history")]
    EmptyHistory,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
