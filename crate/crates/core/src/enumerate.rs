//! Exhaustive enumeration of the passing-order tree, for small instances.

use crate::dynamics::VehicleState;
use crate::error::{Error, Result};
use crate::interpreter::{Interpreter, PartialSchedule, Schedule};
use crate::ordering::{successors, PassingOrder};
use crate::scenario::Scenario;

/// Default cap on the number of leaves an enumeration may visit.
pub const LEAF_LIMIT: u64 = 1_000_000;
/// Largest instance the oracle accepts; beyond this the order tree is too
/// large to enumerate within the leaf limit on dense snapshots.
pub const MAX_ORACLE_VEHICLES: usize = 10;

/// Number of complete orders reachable through `successors`. Fails once
/// the count passes `limit`.
pub fn count_leaves(vehicles: &[VehicleState], scenario: &Scenario, limit: u64) -> Result<u64> {
    fn walk(order: &mut PassingOrder, vehicles: &[VehicleState], scenario: &Scenario, count: &mut u64, limit: u64) -> Result<()> {
        let kids = successors(order, vehicles, scenario);
        if kids.is_empty() {
            *count += 1;
            if *count > limit {
                return Err(Error::LeafLimit { leaves: *count, limit });
            }
            return Ok(());
        }
        for (id, action) in kids {
            order.push(id, action);
            walk(order, vehicles, scenario, count, limit)?;
            order.entries.pop();
        }
        Ok(())
    }
    let mut count = 0;
    walk(&mut PassingOrder::new(), vehicles, scenario, &mut count, limit)?;
    Ok(count)
}

/// Every complete order, in depth-first `successors` order.
pub fn all_orders(vehicles: &[VehicleState], scenario: &Scenario, limit: u64) -> Result<Vec<PassingOrder>> {
    count_leaves(vehicles, scenario, limit)?;
    let mut out = Vec::new();
    let mut stack = vec![PassingOrder::new()];
    while let Some(order) = stack.pop() {
        let kids = successors(&order, vehicles, scenario);
        if kids.is_empty() {
            out.push(order);
            continue;
        }
        for &(id, action) in kids.iter().rev() {
            stack.push(order.with(id, action));
        }
    }
    Ok(out)
}

/// Lowest-objective complete order, found by interpreting every leaf.
/// Prefixes that cannot be interpreted prune their whole subtree. Returns
/// `None` if no order is feasible.
pub fn exhaustive_minimum(
    vehicles: &[VehicleState],
    scenario: &Scenario,
    now: f64,
    limit: u64,
) -> Result<Option<Schedule>> {
    count_leaves(vehicles, scenario, limit)?;
    let interpreter = Interpreter::new(scenario, vehicles, now)?;
    let mut best: Option<Schedule> = None;
    let mut stack: Vec<PartialSchedule> = vec![interpreter.root()];
    while let Some(state) = stack.pop() {
        let kids = successors(&state.order, vehicles, scenario);
        if kids.is_empty() {
            if best.as_ref().is_none_or(|b| state.objective < b.objective) {
                best = Some(state.into_schedule());
            }
            continue;
        }
        for &(id, action) in kids.iter().rev() {
            let mut next = state.clone();
            if interpreter.extend(&mut next, id, action).is_ok() {
                stack.push(next);
            }
        }
    }
    Ok(best)
}

/// One instance of an oracle check.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct OracleCase {
    pub instance: u64,
    pub vehicles: usize,
    pub leaves: u64,
    pub exhaustive: f64,
    pub search: f64,
}

impl OracleCase {
    pub fn matches(&self) -> bool {
        self.exhaustive == self.search
    }
}

/// Compares the tree search at a saturating budget against exhaustive
/// enumeration on `instances` random snapshots of 1 to `max_vehicles`
/// vehicles each.
pub fn oracle_check(scenario: &Scenario, max_vehicles: usize, instances: u64, seed: u64) -> Result<Vec<OracleCase>> {
    use rand::{Rng, SeedableRng};

    if max_vehicles == 0 || max_vehicles > MAX_ORACLE_VEHICLES {
        return Err(Error::InvalidParam {
            field: "max_vehicles",
            reason: format!("must be in 1..={MAX_ORACLE_VEHICLES}"),
        });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ crate::simulation::streams::SNAPSHOTS);
    let mut cases = Vec::with_capacity(instances as usize);
    for instance in 0..instances {
        let params = crate::snapshot::SnapshotParams {
            vehicles: rng.random_range(1..=max_vehicles),
            ..Default::default()
        };
        let vehicles = crate::snapshot::feasible_snapshot(scenario, &params, rng.random());
        let leaves = count_leaves(&vehicles, scenario, LEAF_LIMIT)?;
        let best = exhaustive_minimum(&vehicles, scenario, 0.0, LEAF_LIMIT)?
            .ok_or_else(|| Error::Inconsistent("feasible snapshot without a feasible order".into()))?;
        let out = crate::mcts::plan(&vehicles, scenario, 0.0, &crate::mcts::SearchParams::exhaustive(), None)?;
        cases.push(OracleCase {
            instance,
            vehicles: vehicles.len(),
            leaves,
            exhaustive: best.objective,
            search: out.objective(),
        });
    }
    Ok(cases)
}
