//! Queue dynamics and job ordering.
//!
//! Each data type has a virtual queue that absorbs the round's unmet demand:
//! `Q(t+1) = max(0, Q(t) + demand - supply)`. Jobs additionally carry their
//! own share of the type queue under the same recurrence, which lets the
//! scheduler tell two jobs of the same type apart. Because the per-job clamp
//! can fire without the type-level clamp firing, the shares may sum to more
//! than the type queue; [`decomposition_gap`] reports that drift instead of
//! hiding it.
//!
//! The index scheduler ranks jobs by a schedule index that trades queue
//! pressure against price: a long queue share pushes a job toward the front,
//! a high offered payment per requested client does the same, and an
//! expensive or unreliable client pool pushes it back. Serving jobs in
//! ascending index order greedily minimizes a drift-plus-penalty bound whose
//! quadratic Lyapunov term is [`lyapunov_value`] and whose per-round slack is
//! bounded by [`drift_bound_theta`].

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    ClientProfile, DataTypeId, JobId, JobSpec, QueueState, RoundLedger, SchedulerKind,
};
use crate::error::{Result, SimError};

/// Outcome of an ordering pass: the service order for the round, plus the
/// per-job index values when the index scheduler produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleDecision {
    pub ordered_jobs: Vec<JobId>,
    pub jsi: Option<BTreeMap<JobId, f64>>,
}

/// Inputs the schedule index needs for one job. `queue` is whichever queue
/// value the configured mode selects (own share or whole type queue);
/// `avg_cost` and `avg_reliability` are the job's type aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsiRow {
    pub job_id: JobId,
    pub queue: f64,
    pub payment: f64,
    pub demand: u32,
    pub avg_cost: f64,
    pub avg_reliability: f64,
}

/// One job's contribution to the round's queue flows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JobFlow {
    pub job_id: JobId,
    pub data_type: DataTypeId,
    pub demand: f64,
    pub supply: f64,
    /// The job's queue share entering the round.
    pub share: f64,
}

/// One step of the queue recurrence, clamped at zero.
pub fn queue_update(queue: f64, demand: f64, supply: f64) -> f64 {
    let next = queue + demand - supply;
    if next > 0.0 {
        next
    } else {
        0.0
    }
}

/// Advances every type queue and every job share by one round. Type-level
/// demand and supply are summed over the flows in slice order, so callers
/// keep flows sorted by job id for reproducible float sums. Types without
/// any flow keep their queue value.
pub fn update_all_queues(
    queues: &QueueState,
    flows: &[JobFlow],
) -> (QueueState, BTreeMap<JobId, f64>) {
    let mut demand: BTreeMap<DataTypeId, f64> = BTreeMap::new();
    let mut supply: BTreeMap<DataTypeId, f64> = BTreeMap::new();
    for flow in flows {
        *demand.entry(flow.data_type).or_insert(0.0) += flow.demand;
        *supply.entry(flow.data_type).or_insert(0.0) += flow.supply;
    }

    let per_type = queues
        .per_type
        .iter()
        .map(|(&data_type, &queue)| {
            let mu = demand.get(&data_type).copied().unwrap_or(0.0);
            let served = supply.get(&data_type).copied().unwrap_or(0.0);
            (data_type, queue_update(queue, mu, served))
        })
        .collect();

    let shares = flows
        .iter()
        .map(|flow| {
            (
                flow.job_id,
                queue_update(flow.share, flow.demand, flow.supply),
            )
        })
        .collect();

    (QueueState { per_type }, shares)
}

/// How far the job shares of each type sum above the type queue. Zero as
/// long as no per-job clamp fired; positive afterward.
pub fn decomposition_gap(
    queues: &QueueState,
    flows: &[JobFlow],
    shares: &BTreeMap<JobId, f64>,
) -> BTreeMap<DataTypeId, f64> {
    let mut share_sums: BTreeMap<DataTypeId, f64> = BTreeMap::new();
    for flow in flows {
        let share = shares.get(&flow.job_id).copied().unwrap_or(0.0);
        *share_sums.entry(flow.data_type).or_insert(0.0) += share;
    }
    queues
        .per_type
        .iter()
        .map(|(&data_type, &queue)| {
            (
                data_type,
                share_sums.get(&data_type).copied().unwrap_or(0.0) - queue,
            )
        })
        .collect()
}

/// Schedule index of one job. Lower means more urgent: queue pressure and
/// offered price push the index down, an expensive or unreliable pool pushes
/// it up.
pub fn jsi(row: &JsiRow, sigma: f64) -> f64 {
    -row.queue - sigma * row.payment / f64::from(row.demand)
        + sigma * row.avg_cost / row.avg_reliability
}

/// Orders jobs by ascending schedule index, job id breaking ties.
pub fn order_fairfedjs(rows: &[JsiRow], sigma: f64) -> ScheduleDecision {
    let mut scored: Vec<(JobId, f64)> = rows.iter().map(|r| (r.job_id, jsi(r, sigma))).collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    ScheduleDecision {
        ordered_jobs: scored.iter().map(|&(id, _)| id).collect(),
        jsi: Some(scored.into_iter().collect()),
    }
}

/// Orders jobs for one of the four baselines:
///
/// - random: a fresh uniform permutation from `rng`;
/// - alt: the previous round's order reversed (job id order on round 0);
/// - ub: ascending previous-round utility, so the worst-off job goes first
///   (job id order on round 0);
/// - mjfl: descending sum of the top-`demand` reputation scores among the
///   job's type pool, a greedy stand-in for reputation-first selection.
///
/// Ties everywhere fall back to ascending job id.
pub fn order_baseline(
    kind: SchedulerKind,
    jobs: &[JobSpec],
    clients: &[ClientProfile],
    previous: Option<&RoundLedger>,
    rng: &mut impl Rng,
) -> Result<ScheduleDecision> {
    let mut ids: Vec<JobId> = jobs.iter().map(|j| j.job_id).collect();
    ids.sort_unstable();

    match kind {
        SchedulerKind::Random => {
            ids.shuffle(rng);
        }
        SchedulerKind::Alt => {
            if let Some(prev) = previous {
                ids = prev.schedule.iter().rev().copied().collect();
            }
        }
        SchedulerKind::Ub => {
            if let Some(prev) = previous {
                ids.sort_by(|a, b| {
                    let ua = prev.utilities.get(a).copied().unwrap_or(0.0);
                    let ub = prev.utilities.get(b).copied().unwrap_or(0.0);
                    ua.total_cmp(&ub).then(a.cmp(b))
                });
            }
        }
        SchedulerKind::Mjfl => {
            let scores: BTreeMap<JobId, f64> = jobs
                .iter()
                .map(|job| {
                    (
                        job.job_id,
                        top_reputation_sum(clients, job.data_type, job.demand),
                    )
                })
                .collect();
            ids.sort_by(|a, b| scores[b].total_cmp(&scores[a]).then(a.cmp(b)));
        }
        SchedulerKind::FairFedJs => return Err(SimError::NotABaseline(kind)),
    }

    Ok(ScheduleDecision {
        ordered_jobs: ids,
        jsi: None,
    })
}

fn top_reputation_sum(clients: &[ClientProfile], data_type: DataTypeId, take: u32) -> f64 {
    let mut scores: Vec<f64> = clients
        .iter()
        .filter_map(|c| c.holding(data_type))
        .map(|h| h.reputation())
        .collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    scores.iter().take(take as usize).sum()
}

/// Quadratic queue energy, half the sum of squared queue lengths.
pub fn lyapunov_value(queues: &QueueState) -> f64 {
    0.5 * queues.per_type.values().map(|q| q * q).sum::<f64>()
}

/// Per-type slack constant of the one-round drift bound, from the largest
/// demand and supply that type can see in a round.
pub fn drift_bound_theta(max_demand: f64, max_supply: f64) -> f64 {
    0.5 * max_demand * max_demand + 0.5 * max_supply * max_supply
}
