//! The round loop tying pricing, scheduling, selection, and training
//! together.
//!
//! One round runs in a fixed order, and several invariants depend on it:
//!
//! 1. prices move first (derivative follower, skipped on the first round),
//! 2. per-type cost and reliability aggregates are snapshotted,
//! 3. jobs are ordered (schedule index or the configured baseline),
//! 4. jobs pick clients in schedule order, each client serving at most one
//!    job per round, with fairness deviations frozen at their start-of-round
//!    values,
//! 5. every job trains through the synthetic oracle on its own random
//!    stream,
//! 6. reputations and selection counts absorb the training outcomes,
//! 7. queues advance by demand minus realized supply,
//! 8. utilities, revenue, and the round ledger settle last.
//!
//! Steps 2 and 4 reading pre-update state means the round is evaluated
//! against what the platform knew going in, not against what this round
//! changed.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::{
    build_population, validate_config, ClientId, ClientProfile, DataRegime, DataTypeId, JobId,
    JobSpec, JobState, JsiQueueMode, OracleParams, QueueState, RoundLedger, SchedulerKind,
    SimConfig,
};
use crate::economics::{
    df_price_update_with_policy, job_cost, job_utility, system_revenue, system_utility,
    type_aggregates, JobRound, TypeAggregates,
};
use crate::error::{Result, SimError};
use crate::reputation::{record_selection, update_reputation};
use crate::rng::StreamFactory;
use crate::scheduler::{order_baseline, order_fairfedjs, update_all_queues, JobFlow, JsiRow};
use crate::selection::select_for_job;

/// A job's static description plus its evolving round-to-round state.
#[derive(Debug, Clone, PartialEq)]
pub struct JobRuntime {
    pub spec: JobSpec,
    pub state: JobState,
}

/// Full simulation state between rounds. `round` is the next round to run,
/// starting at 1. Jobs are kept in job id order, and client ids equal their
/// index in `clients`.
#[derive(Debug, Clone)]
pub struct SimState {
    pub round: u32,
    pub clients: Vec<ClientProfile>,
    pub jobs: Vec<JobRuntime>,
    pub queues: QueueState,
    pub last_ledger: Option<RoundLedger>,
    streams: StreamFactory,
}

impl SimState {
    /// Validates the config, draws the client population, and sets every job
    /// at its initial payment with empty queues.
    pub fn new(config: &SimConfig) -> Result<Self> {
        let violations = validate_config(config);
        if !violations.is_empty() {
            return Err(SimError::InvalidConfig(violations));
        }
        let streams = StreamFactory::new(config.seed);
        let clients = build_population(config, &mut streams.population())?;

        let mut jobs: Vec<JobRuntime> = config
            .jobs
            .iter()
            .map(|spec| JobRuntime {
                spec: spec.clone(),
                state: JobState::new(spec.initial_payment),
            })
            .collect();
        jobs.sort_by_key(|job| job.spec.job_id);

        Ok(Self {
            round: 1,
            clients,
            jobs,
            queues: QueueState::zeros(config.num_types),
            last_ledger: None,
            streams,
        })
    }
}

/// What the training oracle reports back for one job and round.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub new_accuracy: f64,
    pub per_client_improved: BTreeMap<ClientId, bool>,
}

/// Data quality as the oracle sees it. Non-iid data keeps the same nominal
/// quality but contributes less.
pub fn effective_quality(quality: f64, regime: DataRegime, params: &OracleParams) -> f64 {
    match regime {
        DataRegime::Iid => quality,
        DataRegime::NonIid => quality * (1.0 - params.noniid_penalty),
    }
}

/// Advances one job's model accuracy by a saturating growth step driven by
/// the mean effective quality of the assigned clients, plus Gaussian noise.
/// With nobody assigned the mean is zero and the model stalls. Each client
/// then improves with probability equal to its own effective quality.
///
/// Draw order is fixed for replay: one noise draw first (taken even when the
/// noise level is zero), then one improvement draw per client in ascending
/// client id order.
pub fn oracle_train(
    accuracy: f64,
    assigned: &[(ClientId, f64)],
    params: &OracleParams,
    regime: DataRegime,
    rng: &mut impl Rng,
) -> TrainingOutcome {
    let mut sorted: Vec<(ClientId, f64)> = assigned.to_vec();
    sorted.sort_by_key(|&(id, _)| id);

    let mean_quality = if sorted.is_empty() {
        0.0
    } else {
        sorted
            .iter()
            .map(|&(_, q)| effective_quality(q, regime, params))
            .sum::<f64>()
            / sorted.len() as f64
    };

    let noise_dist = Normal::new(0.0, params.noise_std).expect("noise level is non-negative");
    let noise = noise_dist.sample(rng);
    let gained = accuracy + params.gain_rate * (params.acc_cap - accuracy) * mean_quality + noise;
    let new_accuracy = gained.clamp(0.0, params.acc_cap);

    let per_client_improved = sorted
        .iter()
        .map(|&(id, q)| {
            let p = effective_quality(q, regime, params).clamp(0.0, 1.0);
            (id, rng.random_bool(p))
        })
        .collect();

    TrainingOutcome {
        new_accuracy,
        per_client_improved,
    }
}

/// Runs the round `state.round` and appends its effects to `state`. The
/// returned ledger is also kept as `state.last_ledger` for the baselines
/// that look one round back.
pub fn run_round(state: &mut SimState, config: &SimConfig) -> Result<RoundLedger> {
    let round = state.round;

    // 1. Price updates. The follower needs two completed rounds to compare,
    // so round 1 just locks the previous payment in place.
    if round >= 2 {
        for job in &mut state.jobs {
            let s = &mut job.state;
            let (next, direction) = df_price_update_with_policy(
                s.payment,
                s.payment_prev,
                s.utility,
                s.utility_prev,
                config.delta,
                config.payment_min,
                config.payment_max,
                config.df_tie_policy,
                s.df_direction,
            );
            s.payment_prev = s.payment;
            s.payment = next;
            s.df_direction = direction;
        }
    } else {
        for job in &mut state.jobs {
            job.state.payment_prev = job.state.payment;
        }
    }

    // 2. Start-of-round aggregates per data type in use.
    let mut aggregates: BTreeMap<DataTypeId, TypeAggregates> = BTreeMap::new();
    for job in &state.jobs {
        if let Entry::Vacant(slot) = aggregates.entry(job.spec.data_type) {
            slot.insert(type_aggregates(&state.clients, job.spec.data_type)?);
        }
    }

    // 3. Job ordering.
    let decision = match config.scheduler {
        SchedulerKind::FairFedJs => {
            let rows: Vec<JsiRow> = state
                .jobs
                .iter()
                .map(|job| {
                    let agg = &aggregates[&job.spec.data_type];
                    let queue = match config.jsi_queue_mode {
                        JsiQueueMode::PerJob => job.state.queue_share,
                        JsiQueueMode::PerType => state.queues.value(job.spec.data_type),
                    };
                    JsiRow {
                        job_id: job.spec.job_id,
                        queue,
                        payment: job.state.payment,
                        demand: job.spec.demand,
                        avg_cost: agg.avg_cost,
                        avg_reliability: agg.avg_reliability,
                    }
                })
                .collect();
            order_fairfedjs(&rows, config.sigma)
        }
        kind => {
            let specs: Vec<JobSpec> = state.jobs.iter().map(|job| job.spec.clone()).collect();
            let mut rng = state.streams.scheduling(round);
            order_baseline(
                kind,
                &specs,
                &state.clients,
                state.last_ledger.as_ref(),
                &mut rng,
            )?
        }
    };

    // 4. Selection in schedule order, one job per client per round. Pool
    // counts cover every holder of the type so absentees still shape the
    // fairness deviation.
    let mut available: BTreeSet<ClientId> = state.clients.iter().map(|c| c.client_id).collect();
    let mut assignments: BTreeMap<JobId, BTreeSet<ClientId>> = BTreeMap::new();
    for &job_id in &decision.ordered_jobs {
        let job = &state.jobs[job_id.0 as usize];
        debug_assert_eq!(job.spec.job_id, job_id);
        let pool_counts: BTreeMap<ClientId, u64> = state
            .clients
            .iter()
            .filter_map(|c| {
                c.holding(job.spec.data_type)
                    .map(|h| (c.client_id, h.selections_for(job_id)))
            })
            .collect();
        let candidates: Vec<&ClientProfile> = state
            .clients
            .iter()
            .filter(|c| available.contains(&c.client_id) && c.holds(job.spec.data_type))
            .collect();
        let result = select_for_job(&job.spec, &candidates, &pool_counts, config.beta)?;
        for id in &result.chosen {
            available.remove(id);
        }
        assignments.insert(job_id, result.chosen.into_iter().collect());
    }

    // 5. Training, one dedicated stream per (round, job).
    let mut outcomes: BTreeMap<JobId, TrainingOutcome> = BTreeMap::new();
    for job in &state.jobs {
        let assigned: Vec<(ClientId, f64)> = assignments[&job.spec.job_id]
            .iter()
            .map(|&id| {
                let client = &state.clients[id.0 as usize];
                debug_assert_eq!(client.client_id, id);
                let holding = client
                    .holding(job.spec.data_type)
                    .expect("chosen clients hold the job's data type");
                (id, holding.quality)
            })
            .collect();
        let params = job.spec.oracle.as_ref().unwrap_or(&config.oracle);
        let mut rng = state.streams.oracle(round, job.spec.job_id);
        let outcome = oracle_train(
            job.state.accuracy,
            &assigned,
            params,
            config.data_regime,
            &mut rng,
        );
        outcomes.insert(job.spec.job_id, outcome);
    }

    // 6. Reputation and selection-count updates.
    for job in &state.jobs {
        let job_id = job.spec.job_id;
        let outcome = &outcomes[&job_id];
        for &client_id in &assignments[&job_id] {
            let client = &mut state.clients[client_id.0 as usize];
            let improved = outcome.per_client_improved[&client_id];
            let updated = {
                let holding = client
                    .holding(job.spec.data_type)
                    .expect("chosen clients hold the job's data type");
                update_reputation(&record_selection(holding, job_id), improved)
            };
            client.datasets.insert(job.spec.data_type, updated);
        }
    }

    // 7. Queue advance, flows in job id order.
    let flows: Vec<JobFlow> = state
        .jobs
        .iter()
        .map(|job| JobFlow {
            job_id: job.spec.job_id,
            data_type: job.spec.data_type,
            demand: f64::from(job.spec.demand),
            supply: assignments[&job.spec.job_id].len() as f64,
            share: job.state.queue_share,
        })
        .collect();
    let (next_queues, next_shares) = update_all_queues(&state.queues, &flows);
    state.queues = next_queues;
    for job in &mut state.jobs {
        job.state.queue_share = next_shares[&job.spec.job_id];
    }

    // 8. Settlement.
    let mut job_rounds: Vec<JobRound> = Vec::with_capacity(state.jobs.len());
    let mut supply = BTreeMap::new();
    let mut payments = BTreeMap::new();
    let mut utilities = BTreeMap::new();
    let mut accuracies = BTreeMap::new();
    for job in &mut state.jobs {
        let job_id = job.spec.job_id;
        let served = assignments[&job_id].len() as u32;
        let cost = job_cost(&aggregates[&job.spec.data_type], served);
        let utility = job_utility(served, job.spec.demand, job.state.payment, cost);
        job.state.utility_prev = job.state.utility;
        job.state.utility = utility;
        job.state.accuracy = outcomes[&job_id].new_accuracy;

        job_rounds.push(JobRound {
            supply: served,
            demand: job.spec.demand,
            payment: job.state.payment,
            cost,
        });
        supply.insert(job_id, served);
        payments.insert(job_id, job.state.payment);
        utilities.insert(job_id, utility);
        accuracies.insert(job_id, job.state.accuracy);
    }

    let ledger = RoundLedger {
        round,
        schedule: decision.ordered_jobs,
        jsi_values: decision.jsi,
        assignments,
        supply,
        payments,
        utilities,
        revenue: system_revenue(&job_rounds),
        system_utility: system_utility(&job_rounds),
        queues_after: state.queues.clone(),
        accuracies,
    };

    state.round += 1;
    state.last_ledger = Some(ledger.clone());
    Ok(ledger)
}

/// Runs the full configured horizon and returns one ledger per round.
pub fn run_simulation(config: &SimConfig) -> Result<Vec<RoundLedger>> {
    let mut state = SimState::new(config)?;
    let mut ledgers = Vec::with_capacity(config.rounds as usize);
    for _ in 0..config.rounds {
        ledgers.push(run_round(&mut state, config)?);
    }
    Ok(ledgers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DfTiePolicy;

    fn params(cap: f64, gain: f64) -> OracleParams {
        OracleParams {
            acc_cap: cap,
            gain_rate: gain,
            noise_std: 0.0,
            noniid_penalty: 0.3,
        }
    }

    #[test]
    fn oracle_stalls_without_clients() {
        let mut rng = StreamFactory::new(0).oracle(1, JobId(0));
        let outcome = oracle_train(0.4, &[], &params(0.9, 0.5), DataRegime::Iid, &mut rng);
        assert_eq!(outcome.new_accuracy, 0.4);
        assert!(outcome.per_client_improved.is_empty());
    }

    #[test]
    fn oracle_growth_example() {
        // 0.5 + 0.5 * (0.9 - 0.5) * 1.0 = 0.7.
        let mut rng = StreamFactory::new(0).oracle(1, JobId(0));
        let assigned = [(ClientId(0), 1.0)];
        let outcome = oracle_train(0.5, &assigned, &params(0.9, 0.5), DataRegime::Iid, &mut rng);
        assert_eq!(outcome.new_accuracy, 0.7);
        assert!(outcome.per_client_improved[&ClientId(0)]);
    }

    #[test]
    fn oracle_holds_at_the_cap() {
        let mut rng = StreamFactory::new(0).oracle(1, JobId(0));
        let assigned = [(ClientId(0), 1.0)];
        let outcome = oracle_train(0.9, &assigned, &params(0.9, 0.5), DataRegime::Iid, &mut rng);
        assert_eq!(outcome.new_accuracy, 0.9);
    }

    #[test]
    fn noniid_quality_is_discounted() {
        let p = params(0.9, 0.5);
        assert_eq!(effective_quality(0.8, DataRegime::Iid, &p), 0.8);
        assert!((effective_quality(0.8, DataRegime::NonIid, &p) - 0.56).abs() < 1e-12);
    }

    #[test]
    fn oracle_replay_is_deterministic() {
        let assigned = [(ClientId(3), 0.7), (ClientId(1), 0.9)];
        let run = || {
            let mut rng = StreamFactory::new(9).oracle(4, JobId(2));
            oracle_train(0.3, &assigned, &params(0.9, 0.1), DataRegime::Iid, &mut rng)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn state_new_rejects_invalid_configs() {
        let mut config = SimConfig::reference(0);
        config.rounds = 0;
        let err = SimState::new(&config).unwrap_err();
        assert!(matches!(err, SimError::InvalidConfig(_)));
    }

    #[test]
    fn freeze_policy_keeps_payments_at_their_opening_level() {
        let mut config = SimConfig::reference(1);
        config.rounds = 5;
        let ledgers = run_simulation(&config).unwrap();
        let opening = &ledgers[0].payments;
        for ledger in &ledgers {
            assert_eq!(&ledger.payments, opening);
        }
    }

    #[test]
    fn continue_policy_moves_payments_off_the_opening_level() {
        let mut config = SimConfig::reference(1);
        config.rounds = 3;
        config.df_tie_policy = DfTiePolicy::Continue;
        let ledgers = run_simulation(&config).unwrap();
        for job in config.jobs.iter().map(|j| j.job_id) {
            let p0 = ledgers[0].payments[&job];
            let p1 = ledgers[1].payments[&job];
            assert_eq!(
                p1,
                (p0 + config.delta).clamp(config.payment_min, config.payment_max)
            );
        }
    }

    #[test]
    fn rounds_are_numbered_from_one() {
        let mut config = SimConfig::reference(0);
        config.rounds = 4;
        let ledgers = run_simulation(&config).unwrap();
        let rounds: Vec<u32> = ledgers.iter().map(|l| l.round).collect();
        assert_eq!(rounds, vec![1, 2, 3, 4]);
    }
}
