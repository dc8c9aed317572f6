//! Passing orders: which vehicle gets right-of-way first, and whether each
//! one keeps or changes lanes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{VehicleId, VehicleState};
use crate::error::{Error, Result};
use crate::road::{Lane, LaneRole};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleAction {
    Straight,
    ChangeLane,
}

/// Sequence of `(vehicle, action)`, highest priority first. May be partial.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PassingOrder {
    pub entries: Vec<(VehicleId, VehicleAction)>,
}

impl PassingOrder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, id: VehicleId, action: VehicleAction) {
        self.entries.push((id, action));
    }

    pub fn contains(&self, id: VehicleId) -> bool {
        self.entries.iter().any(|(v, _)| *v == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = VehicleId> + '_ {
        self.entries.iter().map(|(v, _)| *v)
    }

    pub fn with(&self, id: VehicleId, action: VehicleAction) -> Self {
        let mut next = self.clone();
        next.push(id, action);
        next
    }
}

impl fmt::Display for PassingOrder {
    /// Space separated ids; `_cl` marks a lane change, e.g. `3 1_cl 2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (id, action)) in self.entries.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{id}")?;
            if *action == VehicleAction::ChangeLane {
                f.write_str("_cl")?;
            }
        }
        Ok(())
    }
}

impl FromStr for PassingOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut order = PassingOrder::new();
        for token in s.split_whitespace() {
            let (num, action) = match token.strip_suffix("_cl") {
                Some(n) => (n, VehicleAction::ChangeLane),
                None => (token, VehicleAction::Straight),
            };
            let id = num.parse::<u32>().map_err(|_| Error::InvalidOrder(format!("bad token `{token}`")))?;
            order.push(VehicleId(id), action);
        }
        Ok(order)
    }
}

/// Actions the lane rules allow for `v`. Committed vehicles keep their
/// maneuver; a merge-lane vehicle past the last maneuver start goes straight.
pub fn allowed_actions(v: &VehicleState, scenario: &Scenario) -> &'static [VehicleAction] {
    const CHANGE: &[VehicleAction] = &[VehicleAction::ChangeLane];
    const STRAIGHT: &[VehicleAction] = &[VehicleAction::Straight];
    const BOTH: &[VehicleAction] = &[VehicleAction::Straight, VehicleAction::ChangeLane];
    if v.maneuver.is_some() {
        return CHANGE;
    }
    match scenario.grid.lane_role(v.lane) {
        LaneRole::Closed => CHANGE,
        LaneRole::Through => STRAIGHT,
        LaneRole::Merge => {
            let last = scenario.grid.last_maneuver_start(scenario.maneuver_cells());
            let cell = scenario.grid.cell_of(v.position);
            match (last, scenario.grid.change_target(v.lane)) {
                (Some(last), Some(_)) if cell < last => BOTH,
                _ => STRAIGHT,
            }
        }
    }
}

fn occupied_lanes(v: &VehicleState) -> (Lane, Option<Lane>) {
    match &v.maneuver {
        Some(m) => (m.dest, Some(m.origin)),
        None => (v.lane, None),
    }
}

fn in_lane(v: &VehicleState, lane: Lane) -> bool {
    let (a, b) = occupied_lanes(v);
    a == lane || b == Some(lane)
}

fn ahead(j: &VehicleState, i: &VehicleState) -> bool {
    j.position > i.position || (j.position == i.position && j.id < i.id)
}

/// Whether `j` has to appear before `i` when `i` takes `action`.
pub fn must_precede(j: &VehicleState, i: &VehicleState, action: VehicleAction, scenario: &Scenario) -> bool {
    if j.id == i.id {
        return false;
    }
    let (li, oi) = occupied_lanes(i);
    let shares = in_lane(j, li) || oi.is_some_and(|o| in_lane(j, o));
    if shares && ahead(j, i) {
        return true;
    }
    if action == VehicleAction::ChangeLane && i.maneuver.is_none() {
        if let Some(dest) = scenario.grid.change_target(i.lane) {
            if in_lane(j, dest) {
                if j.maneuver.is_some() && ahead(j, i) {
                    return true;
                }
                if let Some(last) = scenario.grid.last_maneuver_start(scenario.maneuver_cells()) {
                    if scenario.grid.cell_of(j.position) >= last {
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// Whether `v` may be appended with `action` after the vehicles in `order`.
pub fn eligible(
    v: &VehicleState,
    action: VehicleAction,
    order: &PassingOrder,
    vehicles: &[VehicleState],
    scenario: &Scenario,
) -> bool {
    !order.contains(v.id)
        && allowed_actions(v, scenario).contains(&action)
        && vehicles
            .iter()
            .all(|j| order.contains(j.id) || !must_precede(j, v, action, scenario))
}

/// Default action: the only allowed one, or straight when there is a choice.
pub fn default_action(v: &VehicleState, scenario: &Scenario) -> VehicleAction {
    allowed_actions(v, scenario)[0]
}

/// Children of `partial` in the search tree: every vehicle that can come
/// next, most downstream first (ties by lane), a merge-lane vehicle giving
/// a straight and a lane-change child.
pub fn successors(partial: &PassingOrder, vehicles: &[VehicleState], scenario: &Scenario) -> Vec<(VehicleId, VehicleAction)> {
    let mut candidates: Vec<&VehicleState> = vehicles.iter().filter(|v| !partial.contains(v.id)).collect();
    candidates.sort_by(|a, b| {
        b.position
            .total_cmp(&a.position)
            .then(a.lane.cmp(&b.lane))
            .then(a.id.cmp(&b.id))
    });
    let mut out = Vec::new();
    for v in candidates {
        for &action in allowed_actions(v, scenario) {
            if eligible(v, action, partial, vehicles, scenario) {
                out.push((v.id, action));
            }
        }
    }
    out
}

/// First-in-first-out: repeatedly the eligible vehicle with the earliest
/// control-zone entry (ties by id), taking its default action.
pub fn fifo_order(vehicles: &[VehicleState], scenario: &Scenario) -> PassingOrder {
    let mut by_entry: Vec<&VehicleState> = vehicles.iter().collect();
    by_entry.sort_by(|a, b| a.entry_time.total_cmp(&b.entry_time).then(a.id.cmp(&b.id)));
    let mut order = PassingOrder::new();
    while order.len() < vehicles.len() {
        let next = by_entry
            .iter()
            .find(|v| eligible(v, default_action(v, scenario), &order, vehicles, scenario))
            // Unreachable with acyclic precedence; keeps the function total.
            .or_else(|| by_entry.iter().find(|v| !order.contains(v.id)))
            .expect("an unassigned vehicle remains");
        order.push(next.id, default_action(next, scenario));
    }
    order
}

/// Checks uniqueness, lane rules and precedence. Vehicles missing from a
/// partial order are fine as long as nobody listed has to follow them.
pub fn validate(order: &PassingOrder, vehicles: &[VehicleState], scenario: &Scenario) -> Result<()> {
    let mut seen = PassingOrder::new();
    for &(id, action) in &order.entries {
        let v = vehicles
            .iter()
            .find(|v| v.id == id)
            .ok_or_else(|| Error::InvalidOrder(format!("unknown vehicle {id}")))?;
        if seen.contains(id) {
            return Err(Error::InvalidOrder(format!("vehicle {id} listed twice")));
        }
        if !allowed_actions(v, scenario).contains(&action) {
            return Err(Error::InvalidOrder(format!("vehicle {id} on lane {} may not take {action:?}", v.lane)));
        }
        if let Some(j) = vehicles.iter().find(|j| !seen.contains(j.id) && must_precede(j, v, action, scenario)) {
            return Err(Error::InvalidOrder(format!("vehicle {} must precede vehicle {id}", j.id)));
        }
        seen.push(id, action);
    }
    Ok(())
}

pub fn is_valid(order: &PassingOrder, vehicles: &[VehicleState], scenario: &Scenario) -> bool {
    validate(order, vehicles, scenario).is_ok()
}
