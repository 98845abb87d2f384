use thiserror::Error;

use crate::domain::{ClientId, DataTypeId, JobId, SchedulerKind};

/// Failures surfaced by simulation building blocks. Configuration problems
/// are collected into one variant so a caller can report every violation at
/// once instead of stopping at the first.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("no clients hold data type {0}")]
    EmptyTypePool(DataTypeId),
    #[error("client {0} is missing from the selection-count pool")]
    ClientNotInPool(ClientId),
    #[error("unknown job id {0}")]
    UnknownJob(JobId),
    #[error("cannot summarize an empty ledger")]
    EmptyLedgers,
    #[error("{0} is not a baseline scheduler")]
    NotABaseline(SchedulerKind),
}

pub type Result<T> = std::result::Result<T, SimError>;
