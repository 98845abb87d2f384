//! Beta reputation and per-job data fairness.
//!
//! Reputation is the posterior mean of a beta distribution over a holding's
//! success and failure counters, so it starts at the neutral prior 0.5 and
//! stays strictly inside (0, 1) no matter how lopsided the evidence gets.
//! Data fairness measures how far a client's selection count for one job sits
//! above or below the mean of every client holding that data type; the values
//! sum to zero across the pool by construction.

use std::collections::BTreeMap;

use crate::domain::{ClientId, DataTypeId, DatasetHolding, JobId};
use crate::error::{Result, SimError};

/// Posterior mean reliability for the given evidence counters.
pub fn reputation_score(successes: u64, failures: u64) -> f64 {
    (successes as f64 + 1.0) / (successes as f64 + failures as f64 + 2.0)
}

/// Read-only view of a holding's current reputation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReputationView {
    pub score: f64,
}

impl ReputationView {
    pub fn of(holding: &DatasetHolding) -> Self {
        Self {
            score: reputation_score(holding.rep_success, holding.rep_failure),
        }
    }
}

/// Returns the holding with one more success (model improved) or one more
/// failure (it did not). The original is left untouched.
pub fn update_reputation(holding: &DatasetHolding, improved: bool) -> DatasetHolding {
    let mut next = holding.clone();
    if improved {
        next.rep_success += 1;
    } else {
        next.rep_failure += 1;
    }
    next
}

/// Returns the holding with this job's selection count bumped by one. Counts
/// for other jobs are untouched.
pub fn record_selection(holding: &DatasetHolding, job: JobId) -> DatasetHolding {
    let mut next = holding.clone();
    *next.selection_counts.entry(job).or_insert(0) += 1;
    next
}

/// Fairness of one client for one job: its selection count minus the mean
/// count over every client holding `data_type`. `counts` must carry an entry
/// for each client in that pool, including the queried one.
pub fn data_fairness(
    client: ClientId,
    data_type: DataTypeId,
    counts: &BTreeMap<ClientId, u64>,
) -> Result<f64> {
    if counts.is_empty() {
        return Err(SimError::EmptyTypePool(data_type));
    }
    let own = *counts
        .get(&client)
        .ok_or(SimError::ClientNotInPool(client))? as f64;
    let sum: u64 = counts.values().sum();
    Ok(own - sum as f64 / counts.len() as f64)
}
