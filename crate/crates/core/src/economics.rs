//! Market quantities: per-type cost and reliability aggregates, job training
//! cost, publisher revenue and utility, and the derivative-follower payment
//! update.
//!
//! A job pays proportionally to how much of its demand was served, while its
//! cost scales with the type's average client cost inflated by unreliability
//! (paying for work that may not help). The price update is a classic
//! derivative follower: compare the last two completed rounds and step the
//! payment by a fixed increment in the direction that correlated with rising
//! utility.

use crate::domain::{ClientProfile, DataTypeId, DfTiePolicy};
use crate::error::{Result, SimError};
use crate::reputation::ReputationView;

/// Mean participation cost and mean reputation over every client holding one
/// data type. Both drift over time as reputations update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeAggregates {
    pub data_type: DataTypeId,
    pub avg_cost: f64,
    pub avg_reliability: f64,
}

/// Computes the aggregates for `data_type` over the full population.
pub fn type_aggregates(clients: &[ClientProfile], data_type: DataTypeId) -> Result<TypeAggregates> {
    let mut holders = 0u32;
    let mut cost_sum = 0.0;
    let mut reliability_sum = 0.0;
    for client in clients {
        if let Some(holding) = client.holding(data_type) {
            holders += 1;
            cost_sum += holding.cost;
            reliability_sum += ReputationView::of(holding).score;
        }
    }
    if holders == 0 {
        return Err(SimError::EmptyTypePool(data_type));
    }
    Ok(TypeAggregates {
        data_type,
        avg_cost: cost_sum / f64::from(holders),
        avg_reliability: reliability_sum / f64::from(holders),
    })
}

/// Training cost a job incurs for serving `supply` clients this round.
pub fn job_cost(aggregates: &TypeAggregates, supply: u32) -> f64 {
    aggregates.avg_cost / aggregates.avg_reliability * f64::from(supply)
}

/// One job's realized quantities for a single round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JobRound {
    pub supply: u32,
    pub demand: u32,
    pub payment: f64,
    pub cost: f64,
}

/// Utility of one job: payment prorated by served fraction, minus cost.
pub fn job_utility(supply: u32, demand: u32, payment: f64, cost: f64) -> f64 {
    f64::from(supply) / f64::from(demand) * payment - cost
}

/// Total payment volume collected this round.
pub fn system_revenue(jobs: &[JobRound]) -> f64 {
    jobs.iter()
        .map(|j| f64::from(j.supply) / f64::from(j.demand) * j.payment)
        .sum()
}

/// Sum of per-job utilities; equals revenue minus total cost.
pub fn system_utility(jobs: &[JobRound]) -> f64 {
    jobs.iter()
        .map(|j| job_utility(j.supply, j.demand, j.payment, j.cost))
        .sum()
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Derivative-follower price update. `payment` and `utility` belong to the
/// most recently completed round, the `_prev` values to the round before it.
/// When utility and payment moved in the same direction the price steps up
/// by `step`, in opposite directions it steps down, and a zero sign on
/// either comparison freezes it. Results are clamped to [min, max].
pub fn df_price_update(
    payment: f64,
    payment_prev: f64,
    utility: f64,
    utility_prev: f64,
    step: f64,
    min: f64,
    max: f64,
) -> f64 {
    df_price_update_with_policy(
        payment,
        payment_prev,
        utility,
        utility_prev,
        step,
        min,
        max,
        DfTiePolicy::Freeze,
        0,
    )
    .0
}

/// Like [`df_price_update`] but with a configurable zero-sign tie policy.
/// `last_direction` is the previously applied step sign; under the continue
/// policy a tie repeats it instead of freezing. Returns the new payment and
/// the direction to remember for the next round.
#[allow(clippy::too_many_arguments)]
pub fn df_price_update_with_policy(
    payment: f64,
    payment_prev: f64,
    utility: f64,
    utility_prev: f64,
    step: f64,
    min: f64,
    max: f64,
    tie_policy: DfTiePolicy,
    last_direction: i8,
) -> (f64, i8) {
    let correlation = sign(utility - utility_prev) * sign(payment - payment_prev);
    let direction = if correlation != 0 {
        correlation
    } else {
        match tie_policy {
            DfTiePolicy::Freeze => 0,
            DfTiePolicy::Continue => last_direction,
        }
    };
    if direction == 0 {
        (payment, last_direction)
    } else {
        (
            (payment + f64::from(direction) * step).clamp(min, max),
            direction,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ClientId, DatasetHolding};
    use crate::reputation::update_reputation;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn client(id: u32, data_type: DataTypeId, cost: f64, successes: u64) -> ClientProfile {
        let mut holding = DatasetHolding::new(cost, 0.8);
        for _ in 0..successes {
            holding = update_reputation(&holding, true);
        }
        let mut datasets = BTreeMap::new();
        datasets.insert(data_type, holding);
        ClientProfile {
            client_id: ClientId(id),
            datasets,
        }
    }

    #[test]
    fn aggregates_average_costs_and_fresh_reputations() {
        let clients: Vec<_> = [1.0, 2.0, 3.0]
            .iter()
            .enumerate()
            .map(|(i, &c)| client(i as u32, DataTypeId(0), c, 0))
            .collect();
        let agg = type_aggregates(&clients, DataTypeId(0)).unwrap();
        assert_eq!(agg.avg_cost, 2.0);
        assert_eq!(agg.avg_reliability, 0.5);
    }

    #[test]
    fn aggregates_skip_non_holders() {
        let clients = vec![
            client(0, DataTypeId(0), 1.0, 0),
            client(1, DataTypeId(1), 9.0, 4),
        ];
        let agg = type_aggregates(&clients, DataTypeId(0)).unwrap();
        assert_eq!(agg.avg_cost, 1.0);
    }

    #[test]
    fn empty_pool_is_an_error() {
        let clients = vec![client(0, DataTypeId(0), 1.0, 0)];
        let err = type_aggregates(&clients, DataTypeId(5)).unwrap_err();
        assert_eq!(err, SimError::EmptyTypePool(DataTypeId(5)));
    }

    #[test]
    fn cost_scales_with_supply_and_unreliability() {
        let agg = TypeAggregates {
            data_type: DataTypeId(0),
            avg_cost: 2.0,
            avg_reliability: 0.5,
        };
        assert_eq!(job_cost(&agg, 10), 40.0);
        assert_eq!(job_cost(&agg, 0), 0.0);
        let agg = TypeAggregates {
            data_type: DataTypeId(0),
            avg_cost: 1.5,
            avg_reliability: 0.75,
        };
        assert_eq!(job_cost(&agg, 4), 8.0);
    }

    #[test]
    fn revenue_prorates_payment_by_served_fraction() {
        let full = JobRound {
            supply: 10,
            demand: 10,
            payment: 20.0,
            cost: 0.0,
        };
        assert_eq!(system_revenue(&[full]), 20.0);
        let half = JobRound {
            supply: 5,
            demand: 10,
            payment: 20.0,
            cost: 0.0,
        };
        assert_eq!(system_revenue(&[half]), 10.0);
        let starved = JobRound {
            supply: 0,
            demand: 10,
            payment: 20.0,
            cost: 0.0,
        };
        assert_eq!(system_revenue(&[starved]), 0.0);
    }

    #[test]
    fn utility_examples() {
        assert_eq!(job_utility(5, 10, 30.0, 8.0), 7.0);
        assert_eq!(job_utility(0, 10, 20.0, 0.0), 0.0);
        assert_eq!(job_utility(10, 10, 20.0, 40.0), -20.0);
    }

    #[test]
    fn system_utility_sums_jobs() {
        let jobs = [
            JobRound {
                supply: 10,
                demand: 10,
                payment: 20.0,
                cost: 40.0,
            },
            JobRound {
                supply: 5,
                demand: 10,
                payment: 30.0,
                cost: 5.0,
            },
        ];
        assert_eq!(system_utility(&jobs), -10.0);
    }

    #[test]
    fn df_steps_up_when_signs_agree() {
        assert_eq!(df_price_update(12.0, 10.0, 7.0, 5.0, 2.0, 2.0, 100.0), 14.0);
    }

    #[test]
    fn df_steps_down_when_signs_disagree() {
        assert_eq!(df_price_update(12.0, 10.0, 5.0, 7.0, 2.0, 2.0, 100.0), 10.0);
    }

    #[test]
    fn df_freezes_on_flat_utility() {
        assert_eq!(df_price_update(12.0, 10.0, 5.0, 5.0, 2.0, 2.0, 100.0), 12.0);
    }

    #[test]
    fn df_respects_bounds() {
        assert_eq!(
            df_price_update(99.0, 97.0, 9.0, 5.0, 2.0, 2.0, 100.0),
            100.0
        );
        assert_eq!(df_price_update(3.0, 5.0, 9.0, 5.0, 2.0, 2.0, 100.0), 2.0);
    }

    #[test]
    fn continue_policy_repeats_last_direction_on_ties() {
        let (p, dir) = df_price_update_with_policy(
            10.0,
            10.0,
            7.0,
            5.0,
            2.0,
            2.0,
            100.0,
            DfTiePolicy::Continue,
            1,
        );
        assert_eq!((p, dir), (12.0, 1));
        let (p, dir) = df_price_update_with_policy(
            10.0,
            10.0,
            7.0,
            5.0,
            2.0,
            2.0,
            100.0,
            DfTiePolicy::Continue,
            -1,
        );
        assert_eq!((p, dir), (8.0, -1));
    }

    proptest! {
        #[test]
        fn df_output_stays_on_the_payment_lattice(
            start_ticks in 5u32..16,      // initial payment 10..=30, step 2
            moves in prop::collection::vec((any::<bool>(), any::<bool>()), 0..60),
        ) {
            // Bounds chosen on the lattice so clamping cannot leave it.
            let (min, max, step) = (2.0, 100.0, 2.0);
            let p0 = 2.0 * f64::from(start_ticks);
            let mut payment = p0;
            let mut payment_prev = p0 - step; // synthetic history to unfreeze
            let mut utility = 1.0;
            for (i, &(up_utility, flip)) in moves.iter().enumerate() {
                let utility_prev = utility;
                utility += if up_utility { 1.0 } else { -1.0 };
                let history_prev = if flip { payment + step } else { payment_prev };
                let next = df_price_update(payment, history_prev, utility, utility_prev, step, min, max);
                let ticks = (next - p0) / step;
                prop_assert!(
                    (ticks - ticks.round()).abs() < 1e-9,
                    "payment {next} off the lattice at move {i}"
                );
                prop_assert!(next >= min && next <= max);
                payment_prev = payment;
                payment = next;
            }
        }

        #[test]
        fn system_utility_equals_revenue_minus_costs(
            rows in prop::collection::vec(
                (0u32..20, 1u32..20, 0.0f64..100.0, 0.0f64..50.0),
                1..12,
            ),
        ) {
            let jobs: Vec<JobRound> = rows
                .iter()
                .map(|&(extra, demand, payment, cost)| JobRound {
                    supply: extra.min(demand),
                    demand,
                    payment,
                    cost,
                })
                .collect();
            let direct = system_utility(&jobs);
            let total_cost: f64 = jobs.iter().map(|j| j.cost).sum();
            let via_revenue = system_revenue(&jobs) - total_cost;
            prop_assert!((direct - via_revenue).abs() < 1e-9);
        }
    }
}
