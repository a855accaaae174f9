use std::fmt;

use thiserror::Error;

/// Which buffering stage a fault refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueKind {
    Voq,
    Vomq,
    Crosspoint,
}

impl fmt::Display for QueueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueueKind::Voq => "VOQ",
            QueueKind::Vomq => "VOMQ",
            QueueKind::Crosspoint => "CB",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("{what} index {index} out of range [0, {bound})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("invalid flow-control configuration: {0}")]
    InvalidThresholds(String),

    #[error("invalid traffic specification: {0}")]
    InvalidTraffic(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("{kind} {index} overflowed its capacity of {capacity} cells at slot {slot}")]
    Overflow {
        kind: QueueKind,
        index: usize,
        capacity: usize,
        slot: u64,
    },

    #[error("dequeue from empty {kind} {index} at slot {slot}")]
    EmptyDequeue {
        kind: QueueKind,
        index: usize,
        slot: u64,
    },

    #[error("flow {src}->{dst} delivered seq {got} while expecting seq {expected} at slot {slot}")]
    OutOfOrder {
        src: usize,
        dst: usize,
        expected: u64,
        got: u64,
        slot: u64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
