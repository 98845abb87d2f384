//! Value types shared across the simulator: identifiers, client profiles and
//! their per-dataset holdings, job specifications and round state, virtual
//! queues, the per-round ledger, and the validated simulation configuration.
//!
//! Everything here is a plain value. Nothing mutates in place during a run;
//! the simulator produces successor states instead, so two runs with the same
//! configuration and seed walk through identical state sequences.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::StreamFactory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClientId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JobId(pub u32);

/// Index of a dataset type, dense in `[0, num_types)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DataTypeId(pub u32);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for DataTypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One client's stake in one dataset type: its per-round participation cost,
/// the latent training quality only the oracle sees, the beta reputation
/// counters, and how often each job has selected this holding so far.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHolding {
    pub cost: f64,
    pub quality: f64,
    pub rep_success: u64,
    pub rep_failure: u64,
    pub selection_counts: BTreeMap<JobId, u64>,
}

impl DatasetHolding {
    pub fn new(cost: f64, quality: f64) -> Self {
        Self {
            cost,
            quality,
            rep_success: 0,
            rep_failure: 0,
            selection_counts: BTreeMap::new(),
        }
    }

    /// Posterior mean reliability, always inside (0, 1).
    pub fn reputation(&self) -> f64 {
        crate::reputation::reputation_score(self.rep_success, self.rep_failure)
    }

    pub fn selections_for(&self, job: JobId) -> u64 {
        self.selection_counts.get(&job).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientProfile {
    pub client_id: ClientId,
    pub datasets: BTreeMap<DataTypeId, DatasetHolding>,
}

impl ClientProfile {
    pub fn holds(&self, data_type: DataTypeId) -> bool {
        self.datasets.contains_key(&data_type)
    }

    pub fn holding(&self, data_type: DataTypeId) -> Option<&DatasetHolding> {
        self.datasets.get(&data_type)
    }
}

/// Tuning knobs of the synthetic training oracle. `acc_cap` is the accuracy
/// ceiling the job saturates toward, `gain_rate` scales how fast the gap to
/// the ceiling closes, `noise_std` jitters the round update, and
/// `noniid_penalty` discounts client quality when the data regime is noniid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleParams {
    #[serde(default = "default_acc_cap")]
    pub acc_cap: f64,
    #[serde(default = "default_gain_rate")]
    pub gain_rate: f64,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default = "default_noniid_penalty")]
    pub noniid_penalty: f64,
}

fn default_acc_cap() -> f64 {
    0.9
}

fn default_gain_rate() -> f64 {
    0.05
}

fn default_noniid_penalty() -> f64 {
    0.3
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            acc_cap: default_acc_cap(),
            gain_rate: default_gain_rate(),
            noise_std: 0.0,
            noniid_penalty: default_noniid_penalty(),
        }
    }
}

/// Static description of one job: which dataset it trains on, how many
/// clients it wants per round, and where its posted payment starts. The
/// optional oracle override lets jobs model differently shaped training
/// curves; absent, the configuration-level params apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub job_id: JobId,
    pub data_type: DataTypeId,
    pub demand: u32,
    pub initial_payment: f64,
    #[serde(default)]
    pub oracle: Option<OracleParams>,
}

/// Mutable per-job quantities carried across rounds. `payment_prev` and
/// `utility_prev` feed the derivative-follower price update; `queue_share`
/// is this job's slice of its type's virtual queue; `df_direction` is the
/// last applied price direction, consulted only by the continue tie policy.
#[derive(Debug, Clone, PartialEq)]
pub struct JobState {
    pub payment: f64,
    pub payment_prev: f64,
    pub utility: f64,
    pub utility_prev: f64,
    pub accuracy: f64,
    pub queue_share: f64,
    pub df_direction: i8,
}

impl JobState {
    pub fn new(initial_payment: f64) -> Self {
        Self {
            payment: initial_payment,
            payment_prev: initial_payment,
            utility: 0.0,
            utility_prev: 0.0,
            accuracy: 0.0,
            queue_share: 0.0,
            df_direction: 1,
        }
    }
}

/// Per-type virtual queues. A queue grows by unmet demand each round and is
/// clamped at zero, so its level tracks how far behind service has fallen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    pub per_type: BTreeMap<DataTypeId, f64>,
}

impl QueueState {
    pub fn zeros(num_types: u32) -> Self {
        Self {
            per_type: (0..num_types).map(|m| (DataTypeId(m), 0.0)).collect(),
        }
    }

    pub fn value(&self, data_type: DataTypeId) -> f64 {
        self.per_type.get(&data_type).copied().unwrap_or(0.0)
    }
}

/// Everything recorded about one simulated round. Serialized as one JSON
/// line per round; field order here is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLedger {
    pub round: u32,
    pub schedule: Vec<JobId>,
    /// Schedule index per job; present only when the index scheduler ran.
    pub jsi_values: Option<BTreeMap<JobId, f64>>,
    pub assignments: BTreeMap<JobId, BTreeSet<ClientId>>,
    pub supply: BTreeMap<JobId, u32>,
    pub payments: BTreeMap<JobId, f64>,
    pub utilities: BTreeMap<JobId, f64>,
    pub revenue: f64,
    pub system_utility: f64,
    pub queues_after: QueueState,
    pub accuracies: BTreeMap<JobId, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    FairFedJs,
    Random,
    Alt,
    Ub,
    Mjfl,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 5] = [
        SchedulerKind::FairFedJs,
        SchedulerKind::Random,
        SchedulerKind::Alt,
        SchedulerKind::Ub,
        SchedulerKind::Mjfl,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchedulerKind::FairFedJs => "fairfedjs",
            SchedulerKind::Random => "random",
            SchedulerKind::Alt => "alt",
            SchedulerKind::Ub => "ub",
            SchedulerKind::Mjfl => "mjfl",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "fairfedjs" => Ok(SchedulerKind::FairFedJs),
            "random" => Ok(SchedulerKind::Random),
            "alt" => Ok(SchedulerKind::Alt),
            "ub" => Ok(SchedulerKind::Ub),
            "mjfl" => Ok(SchedulerKind::Mjfl),
            other => Err(format!(
                "unknown scheduler '{other}' (expected one of fairfedjs, random, alt, ub, mjfl)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataRegime {
    #[default]
    Iid,
    NonIid,
}

/// Which queue value feeds a job's schedule index: its own share of the type
/// queue, or the whole type queue (all jobs of a type then move as a block).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JsiQueueMode {
    #[default]
    PerJob,
    PerType,
}

/// What the price update does when either comparison sign is zero: freeze
/// the price, or keep stepping in the last applied direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DfTiePolicy {
    #[default]
    Freeze,
    Continue,
}

/// A block of `count` clients that all hold exactly the listed dataset types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationGroup {
    pub count: u32,
    pub types: Vec<DataTypeId>,
}

/// Full description of a run. Mirrors the JSON configuration format field
/// for field; unknown keys in a file are rejected rather than ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub num_clients: u32,
    pub num_types: u32,
    pub population: Vec<PopulationGroup>,
    pub jobs: Vec<JobSpec>,
    pub rounds: u32,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_payment_min")]
    pub payment_min: f64,
    #[serde(default = "default_payment_max")]
    pub payment_max: f64,
    pub scheduler: SchedulerKind,
    #[serde(default)]
    pub oracle: OracleParams,
    #[serde(default)]
    pub data_regime: DataRegime,
    pub seed: u64,
    #[serde(default = "default_cost_range")]
    pub cost_range: [f64; 2],
    #[serde(default = "default_quality_range")]
    pub quality_range: [f64; 2],
    #[serde(default)]
    pub jsi_queue_mode: JsiQueueMode,
    #[serde(default)]
    pub df_tie_policy: DfTiePolicy,
    #[serde(default = "default_convergence_epsilon")]
    pub convergence_epsilon: f64,
    #[serde(default = "default_convergence_window")]
    pub convergence_window: u32,
}

fn default_sigma() -> f64 {
    1.0
}

fn default_beta() -> f64 {
    0.5
}

fn default_delta() -> f64 {
    2.0
}

fn default_payment_min() -> f64 {
    2.0
}

fn default_payment_max() -> f64 {
    100.0
}

fn default_cost_range() -> [f64; 2] {
    [1.0, 3.0]
}

fn default_quality_range() -> [f64; 2] {
    [0.55, 0.95]
}

fn default_convergence_epsilon() -> f64 {
    0.005
}

fn default_convergence_window() -> u32 {
    10
}

impl SimConfig {
    /// The bundled reference scenario: two dataset types, six jobs (three per
    /// type with differently shaped oracle curves), demand ten each, and a
    /// fifty-client population split 20 / 20 / 10 between type 0 only, type 1
    /// only, and both. Total demand (60) intentionally exceeds the number of
    /// distinct clients (50), so schedulers always face contention. Initial
    /// payments are drawn from the even lattice 10..=30 using the seed's
    /// payment substream.
    pub fn reference(seed: u64) -> SimConfig {
        let mut payment_rng = StreamFactory::new(seed).payments();
        let mut draw_payment = || 10.0 + 2.0 * f64::from(payment_rng.random_range(0u32..11));

        let curves = [
            (DataTypeId(0), 0.86, 0.10),
            (DataTypeId(0), 0.88, 0.07),
            (DataTypeId(0), 0.90, 0.05),
            (DataTypeId(1), 0.55, 0.09),
            (DataTypeId(1), 0.58, 0.06),
            (DataTypeId(1), 0.62, 0.045),
        ];
        let jobs = curves
            .iter()
            .enumerate()
            .map(|(k, &(data_type, acc_cap, gain_rate))| JobSpec {
                job_id: JobId(k as u32),
                data_type,
                demand: 10,
                initial_payment: draw_payment(),
                oracle: Some(OracleParams {
                    acc_cap,
                    gain_rate,
                    noise_std: 0.002,
                    noniid_penalty: default_noniid_penalty(),
                }),
            })
            .collect();

        SimConfig {
            num_clients: 50,
            num_types: 2,
            population: vec![
                PopulationGroup {
                    count: 20,
                    types: vec![DataTypeId(0)],
                },
                PopulationGroup {
                    count: 20,
                    types: vec![DataTypeId(1)],
                },
                PopulationGroup {
                    count: 10,
                    types: vec![DataTypeId(0), DataTypeId(1)],
                },
            ],
            jobs,
            rounds: 150,
            sigma: default_sigma(),
            beta: default_beta(),
            delta: default_delta(),
            payment_min: default_payment_min(),
            payment_max: default_payment_max(),
            scheduler: SchedulerKind::FairFedJs,
            oracle: OracleParams::default(),
            data_regime: DataRegime::Iid,
            seed,
            cost_range: default_cost_range(),
            quality_range: default_quality_range(),
            // Type-level queue pressure in the index. Under this scenario's
            // permanent contention supply never exceeds demand, so per-job
            // shares only ratchet upward; their staircase quickly dwarfs the
            // payment spread and the ordering degenerates into a fixed
            // rotation with ALT-like fairness. The type queue keeps payment
            // nudges effective.
            jsi_queue_mode: JsiQueueMode::PerType,
            df_tie_policy: DfTiePolicy::default(),
            convergence_epsilon: default_convergence_epsilon(),
            convergence_window: default_convergence_window(),
        }
    }
}

fn check_oracle_params(params: &OracleParams, violations: &mut Vec<String>) {
    if !(params.acc_cap > 0.0 && params.acc_cap <= 1.0) {
        violations.push("acc_cap must be in (0, 1]".to_string());
    }
    if !(params.gain_rate > 0.0 && params.gain_rate.is_finite()) {
        violations.push("gain_rate must be > 0".to_string());
    }
    if !(params.noise_std >= 0.0 && params.noise_std.is_finite()) {
        violations.push("noise_std must be ≥ 0".to_string());
    }
    if !(params.noniid_penalty >= 0.0 && params.noniid_penalty <= 1.0) {
        violations.push("noniid_penalty must be in [0, 1]".to_string());
    }
}

/// Checks every configuration invariant and returns one message per
/// violation; an empty list means the configuration is runnable.
pub fn validate_config(config: &SimConfig) -> Vec<String> {
    let mut violations = Vec::new();

    if config.num_types == 0 {
        violations.push("num_types must be ≥ 1".to_string());
    }
    if config.num_clients == 0 {
        violations.push("num_clients must be ≥ 1".to_string());
    }
    if config.rounds == 0 {
        violations.push("rounds must be ≥ 1".to_string());
    }
    if config.jobs.is_empty() {
        violations.push("at least one job is required".to_string());
    }
    if !(config.sigma >= 0.0 && config.sigma.is_finite()) {
        violations.push("sigma must be ≥ 0".to_string());
    }
    if !(config.beta >= 0.0 && config.beta.is_finite()) {
        violations.push("beta must be ≥ 0".to_string());
    }
    if !(config.delta > 0.0 && config.delta.is_finite()) {
        violations.push("delta must be > 0".to_string());
    }
    if !(config.payment_min > 0.0 && config.payment_min.is_finite()) {
        violations.push("payment_min must be > 0".to_string());
    }
    if !(config.payment_max.is_finite() && config.payment_max >= config.payment_min) {
        violations.push("payment bounds must satisfy payment_min ≤ payment_max".to_string());
    }
    if !(config.cost_range[0] > 0.0 && config.cost_range[1] >= config.cost_range[0]) {
        violations.push("cost_range must satisfy 0 < low ≤ high".to_string());
    }
    if !(config.quality_range[0] >= 0.0
        && config.quality_range[1] >= config.quality_range[0]
        && config.quality_range[1] <= 1.0)
    {
        violations.push("quality_range must lie within [0, 1]".to_string());
    }
    if !(config.convergence_epsilon > 0.0 && config.convergence_epsilon.is_finite()) {
        violations.push("convergence_epsilon must be > 0".to_string());
    }
    if config.convergence_window == 0 {
        violations.push("convergence_window must be ≥ 1".to_string());
    }

    let num_jobs = config.jobs.len() as u32;
    let mut seen_ids = BTreeSet::new();
    for job in &config.jobs {
        if job.demand == 0 {
            violations.push("demand must be ≥ 1".to_string());
        }
        if job.job_id.0 >= num_jobs {
            violations.push(format!(
                "job id {} out of range (expected [0, {num_jobs}))",
                job.job_id
            ));
        }
        if !seen_ids.insert(job.job_id) {
            violations.push(format!("job id {} is not unique", job.job_id));
        }
        if job.data_type.0 >= config.num_types {
            violations.push(format!("job {} data_type out of range", job.job_id));
        }
        if !(job.initial_payment >= config.payment_min && job.initial_payment <= config.payment_max)
        {
            violations.push(format!(
                "job {} initial_payment outside payment bounds",
                job.job_id
            ));
        }
        if let Some(params) = &job.oracle {
            check_oracle_params(params, &mut violations);
        }
    }
    check_oracle_params(&config.oracle, &mut violations);

    if config.population.is_empty() {
        violations.push("population must not be empty".to_string());
    }
    let mut total = 0u64;
    let mut holders: BTreeMap<DataTypeId, u64> = BTreeMap::new();
    for group in &config.population {
        total += u64::from(group.count);
        if group.types.is_empty() {
            violations.push("population group must hold at least one data type".to_string());
        }
        let mut seen_types = BTreeSet::new();
        for &data_type in &group.types {
            if data_type.0 >= config.num_types {
                violations.push(format!("population data_type {data_type} out of range"));
            }
            if !seen_types.insert(data_type) {
                violations.push(format!(
                    "population group lists data type {data_type} twice"
                ));
            }
            *holders.entry(data_type).or_insert(0) += u64::from(group.count);
        }
    }
    if total != u64::from(config.num_clients) {
        violations.push("population counts must sum to num_clients".to_string());
    }
    for job in &config.jobs {
        if job.data_type.0 < config.num_types
            && holders.get(&job.data_type).copied().unwrap_or(0) == 0
        {
            violations.push(format!("no clients hold data type {}", job.data_type));
        }
    }

    violations
}

/// Materializes the client population from the grouped layout, drawing each
/// holding's cost and quality from the configured ranges. Client ids are
/// assigned densely in group order, so the same seed always yields the same
/// population.
pub fn build_population(config: &SimConfig, rng: &mut impl Rng) -> Result<Vec<ClientProfile>> {
    let total: u64 = config.population.iter().map(|g| u64::from(g.count)).sum();
    if total != u64::from(config.num_clients) {
        return Err(SimError::InvalidConfig(vec![
            "population counts must sum to num_clients".to_string(),
        ]));
    }

    let draw = |rng: &mut dyn rand::RngCore, range: [f64; 2]| -> f64 {
        if range[0] == range[1] {
            range[0]
        } else {
            rng.random_range(range[0]..range[1])
        }
    };

    let mut clients = Vec::with_capacity(config.num_clients as usize);
    let mut next_id = 0u32;
    for group in &config.population {
        let mut types = group.types.clone();
        types.sort_unstable();
        for _ in 0..group.count {
            let mut datasets = BTreeMap::new();
            for &data_type in &types {
                let cost = draw(rng, config.cost_range);
                let quality = draw(rng, config.quality_range);
                datasets.insert(data_type, DatasetHolding::new(cost, quality));
            }
            clients.push(ClientProfile {
                client_id: ClientId(next_id),
                datasets,
            });
            next_id += 1;
        }
    }
    Ok(clients)
}
