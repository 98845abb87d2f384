//! Deterministic simulator for multi-job federated learning scheduling.
//!
//! A platform holds a pool of data-owning clients and a set of training jobs
//! that each want a fixed number of clients per round. Every round the
//! platform orders the jobs, lets them pick clients in that order, trains
//! each job through a synthetic oracle, and settles payments. The headline
//! scheduler ranks jobs by a queue- and price-aware schedule index; four
//! baselines (random, alternating, utility-balancing, reputation-greedy) run
//! the same pipeline with a different ordering rule.
//!
//! Runs are reproducible: one seed drives separate named random streams for
//! population setup, payment draws, per-round scheduling, and per-job
//! training, so equal configs give byte-identical ledgers.

pub mod domain;
pub mod economics;
pub mod error;
pub mod metrics;
pub mod reputation;
pub mod rng;
pub mod scheduler;
pub mod selection;
pub mod simulator;

pub use domain::{SchedulerKind, SimConfig};
pub use error::{Result, SimError};
pub use simulator::run_simulation;
