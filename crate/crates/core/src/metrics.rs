//! Run-level summaries: queue balance, convergence detection, and means.

use std::collections::BTreeMap;

use crate::domain::{JobId, RoundLedger};
use crate::error::{Result, SimError};

/// Headline numbers for one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Root mean (over rounds) of the summed squared queue imbalance.
    pub sf: f64,
    /// First round from which accuracies stay settled, if any.
    pub convergence_round: Option<u32>,
    pub final_accuracy: BTreeMap<JobId, f64>,
    pub mean_system_utility: f64,
    pub mean_revenue: f64,
}

/// Scheduling fairness: for each round take the squared deviations of the
/// per-type queue lengths from that round's mean, sum over rounds, divide by
/// the number of rounds, and take the square root. Zero means every type's
/// backlog moved in lockstep; large values mean some types starved while
/// others were served.
pub fn scheduling_fairness(per_round_queues: &[Vec<f64>]) -> f64 {
    if per_round_queues.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for round in per_round_queues {
        if round.is_empty() {
            continue;
        }
        let mean = round.iter().sum::<f64>() / round.len() as f64;
        total += round.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>();
    }
    (total / per_round_queues.len() as f64).sqrt()
}

/// First round `t` (1-based) such that for every round `t'` in the window
/// `[t, min(T, t + window - 1)]` and every job, the accuracy at `t'` sits
/// within `epsilon` of that job's running maximum over rounds before `t'`.
/// Round 1 has no history and never breaks the condition on its own.
///
/// `series[t - 1]` holds the per-job accuracies after round `t`; rows must
/// all have the same length. A window larger than the remaining horizon is
/// truncated at the end of the run.
pub fn convergence_round(series: &[Vec<f64>], epsilon: f64, window: u32) -> Option<u32> {
    let rounds = series.len();
    if rounds == 0 {
        return None;
    }
    let window = window.max(1) as usize;

    // settled[t] for 1-based t: every job within epsilon of its running max.
    let mut settled = vec![true; rounds + 1];
    let mut running_max = series[0].clone();
    for t in 2..=rounds {
        let row = &series[t - 1];
        debug_assert_eq!(row.len(), running_max.len());
        settled[t] = row
            .iter()
            .zip(&running_max)
            .all(|(acc, max)| (acc - max).abs() <= epsilon);
        for (max, acc) in running_max.iter_mut().zip(row) {
            if acc > max {
                *max = *acc;
            }
        }
    }

    (1..=rounds)
        .find(|&t| {
            let end = rounds.min(t + window - 1);
            (t..=end).all(|tp| settled[tp])
        })
        .map(|t| t as u32)
}

/// Condenses a run's ledgers into a [`RunSummary`].
pub fn summarize(ledgers: &[RoundLedger], epsilon: f64, window: u32) -> Result<RunSummary> {
    let last = ledgers.last().ok_or(SimError::EmptyLedgers)?;

    let queues: Vec<Vec<f64>> = ledgers
        .iter()
        .map(|l| l.queues_after.per_type.values().copied().collect())
        .collect();
    let accuracies: Vec<Vec<f64>> = ledgers
        .iter()
        .map(|l| l.accuracies.values().copied().collect())
        .collect();
    let rounds = ledgers.len() as f64;

    Ok(RunSummary {
        sf: scheduling_fairness(&queues),
        convergence_round: convergence_round(&accuracies, epsilon, window),
        final_accuracy: last.accuracies.clone(),
        mean_system_utility: ledgers.iter().map(|l| l.system_utility).sum::<f64>() / rounds,
        mean_revenue: ledgers.iter().map(|l| l.revenue).sum::<f64>() / rounds,
    })
}
