//! Monte Carlo tree search over passing orders.
//!
//! Each tree node is a partial order; a child appends one more vehicle
//! (with its action). An iteration selects a node by score, expands its
//! next untried child, completes that child's order with the heuristic
//! rollout policy, interprets it, and backs the objective up the path. The
//! FIFO order is evaluated first and kept as the incumbent, so the result
//! is never worse than FIFO.
//!
//! Node score:
//!
//! ```text
//! score = w * R(J_partial) + (1 - w) * R(J_best) + C * sqrt(ln N_parent / N)
//! R(J)  = min(1, max(J_inc, eps) / max(J, eps))
//! ```
//!
//! where `J_inc` is the incumbent objective at the time of scoring.
//!
//! The search is deterministic: children are tried in a fixed order and
//! score ties go to the lowest child index.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::{is_lane_change_safe, VehicleId, VehicleState};
use crate::error::{Error, Result};
use crate::interpreter::{Interpreter, PartialSchedule, Schedule};
use crate::ordering::{default_action, eligible, fifo_order, successors, PassingOrder, VehicleAction};
use crate::scenario::Scenario;

const REWARD_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchParams {
    /// Exploration weight C.
    pub exploration: f64,
    /// Weight w of the node's own partial objective against its best rollout.
    pub omega: f64,
    /// Number of node expansions.
    pub node_budget: usize,
    /// Wall-clock cap in seconds; `None` for no cap.
    pub time_budget: Option<f64>,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self { exploration: 0.2, omega: 0.2, node_budget: 200, time_budget: Some(0.5) }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.exploration >= 0.0) {
            return Err(Error::InvalidParam { field: "exploration", reason: "must be >= 0".into() });
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::InvalidParam { field: "omega", reason: "must lie in [0, 1]".into() });
        }
        if self.node_budget == 0 {
            return Err(Error::InvalidParam { field: "node_budget", reason: "must be > 0".into() });
        }
        if let Some(t) = self.time_budget {
            if !(t > 0.0) {
                return Err(Error::InvalidParam { field: "time_budget", reason: "must be > 0".into() });
            }
        }
        Ok(())
    }

    /// Budget large enough to expand a whole small tree, without a time cap.
    pub fn exhaustive() -> Self {
        Self { node_budget: usize::MAX, time_budget: None, ..Self::default() }
    }
}

/// Reward of objective `j` relative to the incumbent `j_inc`, in `[0, 1]`.
pub fn reward(j: f64, j_inc: f64) -> f64 {
    if !j.is_finite() {
        return 0.0;
    }
    (j_inc.max(REWARD_EPS) / j.max(REWARD_EPS)).min(1.0)
}

pub fn node_score(j_partial: f64, j_best: f64, visits: u32, parent_visits: u32, j_inc: f64, params: &SearchParams) -> f64 {
    let exploit = params.omega * reward(j_partial, j_inc) + (1.0 - params.omega) * reward(j_best, j_inc);
    let explore = if visits == 0 {
        f64::INFINITY
    } else {
        (f64::from(parent_visits.max(1)).ln() / f64::from(visits)).sqrt()
    };
    exploit + params.exploration * explore
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    NodeBudget,
    TimeBudget,
    TreeExhausted,
    ZeroDelay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub nodes_expanded: usize,
    pub incumbent: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub schedule: Schedule,
    pub fifo_objective: f64,
    pub nodes_expanded: usize,
    pub stop: StopReason,
    pub trace: Vec<TraceEntry>,
}

impl SearchOutcome {
    pub fn order(&self) -> &PassingOrder {
        &self.schedule.order
    }

    pub fn objective(&self) -> f64 {
        self.schedule.objective
    }
}

#[derive(Debug)]
struct Node {
    parent: Option<usize>,
    state: Option<PartialSchedule>,
    children: Vec<usize>,
    /// Untried moves, last element tried first.
    untried: Vec<(VehicleId, VehicleAction)>,
    visits: u32,
    j_best: f64,
    j_partial: f64,
    exhausted: bool,
}

/// The search for one snapshot.
pub struct Search<'a> {
    scenario: &'a Scenario,
    vehicles: &'a [VehicleState],
    interpreter: Interpreter<'a>,
    params: SearchParams,
    nodes: Vec<Node>,
    incumbent: Option<Schedule>,
}

impl<'a> Search<'a> {
    pub fn new(scenario: &'a Scenario, vehicles: &'a [VehicleState], now: f64, params: SearchParams) -> Result<Self> {
        params.validate()?;
        let interpreter = Interpreter::new(scenario, vehicles, now)?;
        let root_state = interpreter.root();
        let mut untried = successors(&root_state.order, vehicles, scenario);
        untried.reverse();
        let root = Node {
            parent: None,
            state: Some(root_state),
            children: Vec::new(),
            exhausted: untried.is_empty(),
            untried,
            visits: 0,
            j_best: f64::INFINITY,
            j_partial: 0.0,
        };
        Ok(Self { scenario, vehicles, interpreter, params, nodes: vec![root], incumbent: None })
    }

    pub fn incumbent(&self) -> Option<&Schedule> {
        self.incumbent.as_ref()
    }

    fn incumbent_objective(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |s| s.objective)
    }

    /// Offers a complete order as incumbent; returns its objective.
    pub fn offer(&mut self, order: &PassingOrder) -> Result<f64> {
        let schedule = self.interpreter.interpret(order)?;
        let j = schedule.objective;
        self.consider(schedule);
        Ok(j)
    }

    fn consider(&mut self, schedule: Schedule) {
        if schedule.objective < self.incumbent_objective() {
            self.incumbent = Some(schedule);
        }
    }

    /// Runs iterations until a budget is hit or the tree is exhausted.
    pub fn run(&mut self) -> (usize, StopReason, Vec<TraceEntry>) {
        let started = Instant::now();
        let mut expanded = 0usize;
        let mut trace = Vec::new();
        let stop = loop {
            if self.nodes[0].exhausted {
                break StopReason::TreeExhausted;
            }
            if self.incumbent_objective() <= 0.0 {
                break StopReason::ZeroDelay;
            }
            if expanded >= self.params.node_budget {
                break StopReason::NodeBudget;
            }
            if let Some(cap) = self.params.time_budget {
                if started.elapsed().as_secs_f64() >= cap {
                    break StopReason::TimeBudget;
                }
            }
            let leaf = self.select();
            if self.nodes[leaf].exhausted {
                continue;
            }
            let node = if self.nodes[leaf].untried.is_empty() {
                // Complete order whose value is already known.
                self.nodes[leaf].exhausted = true;
                leaf
            } else {
                let child = self.expand(leaf);
                if self.nodes[child].state.is_none() || self.dominated(child) {
                    // Pruned on creation; not a search node.
                    self.nodes[child].exhausted = true;
                    self.refresh_exhausted(leaf);
                    continue;
                }
                expanded += 1;
                child
            };
            let j = self.rollout(node);
            self.backpropagate(node, j);
            self.refresh_exhausted(node);
            trace.push(TraceEntry { iteration: trace.len() + 1, nodes_expanded: expanded, incumbent: self.incumbent_objective() });
        };
        (expanded, stop, trace)
    }

    /// Delays never decrease as vehicles are appended, so a node whose
    /// partial objective already reaches the incumbent cannot improve it.
    fn dominated(&self, node: usize) -> bool {
        self.nodes[node].j_partial >= self.incumbent_objective()
    }

    /// Descends from the root through fully expanded nodes by best score,
    /// closing dominated children on the way.
    fn select(&mut self) -> usize {
        let j_inc = self.incumbent_objective();
        let mut current = 0;
        loop {
            let node = &self.nodes[current];
            if !node.untried.is_empty() || node.children.is_empty() {
                return current;
            }
            let mut best: Option<(usize, f64)> = None;
            let mut closed = Vec::new();
            for &child in &node.children {
                let c = &self.nodes[child];
                if c.exhausted {
                    continue;
                }
                if c.j_partial >= j_inc {
                    closed.push(child);
                    continue;
                }
                let score = node_score(c.j_partial, c.j_best, c.visits, node.visits, j_inc, &self.params);
                if best.is_none_or(|(_, s)| score > s) {
                    best = Some((child, score));
                }
            }
            for child in closed {
                self.nodes[child].exhausted = true;
            }
            match best {
                Some((child, _)) => current = child,
                None => {
                    self.refresh_exhausted(current);
                    if current == 0 || self.nodes[current].exhausted {
                        return current;
                    }
                    current = 0;
                }
            }
        }
    }

    fn expand(&mut self, parent: usize) -> usize {
        let (id, action) = self.nodes[parent].untried.pop().expect("node has untried moves");
        let mut state = self.nodes[parent].state.clone();
        let feasible = match state.as_mut() {
            Some(s) => self.interpreter.extend(s, id, action).is_ok(),
            None => false,
        };
        let state = if feasible { state } else { None };
        let (untried, j_partial) = match &state {
            Some(s) => {
                let mut moves = successors(&s.order, self.vehicles, self.scenario);
                moves.reverse();
                (moves, s.objective)
            }
            None => (Vec::new(), f64::INFINITY),
        };
        let index = self.nodes.len();
        self.nodes.push(Node {
            parent: Some(parent),
            state,
            children: Vec::new(),
            exhausted: false,
            untried,
            visits: 0,
            j_best: f64::INFINITY,
            j_partial,
        });
        self.nodes[parent].children.push(index);
        index
    }

    /// Completes the node's order with the heuristic policy and interprets it.
    fn rollout(&mut self, node: usize) -> f64 {
        let Some(mut state) = self.nodes[node].state.clone() else {
            return f64::INFINITY;
        };
        let order = rollout_order(&state.order, self.vehicles, self.scenario);
        let tail = &order.entries[state.order.len()..];
        if self.interpreter.extend_all(&mut state, tail).is_err() {
            return f64::INFINITY;
        }
        let j = state.objective;
        self.consider(state.into_schedule());
        j
    }

    fn backpropagate(&mut self, node: usize, j: f64) {
        let mut current = Some(node);
        while let Some(k) = current {
            let n = &mut self.nodes[k];
            n.visits += 1;
            if j < n.j_best {
                n.j_best = j;
            }
            current = n.parent;
        }
    }

    fn refresh_exhausted(&mut self, node: usize) {
        let mut current = Some(node);
        while let Some(k) = current {
            let n = &self.nodes[k];
            let done = n.state.is_none()
                || (n.untried.is_empty() && n.children.iter().all(|&c| self.nodes[c].exhausted));
            if !done {
                break;
            }
            self.nodes[k].exhausted = true;
            current = self.nodes[k].parent;
        }
    }
}

/// Completes `partial` by the heuristic policy: walk the unassigned
/// vehicles from the most downstream; append the first that may go next
/// and is either going straight or can change lanes safely among the
/// vehicles not yet ordered. If none qualifies, append the most downstream
/// vehicle that may go next.
pub fn rollout_order(partial: &PassingOrder, vehicles: &[VehicleState], scenario: &Scenario) -> PassingOrder {
    let mut omega: Vec<&VehicleState> = vehicles.iter().filter(|v| !partial.contains(v.id)).collect();
    omega.sort_by(|a, b| b.position.total_cmp(&a.position).then(a.lane.cmp(&b.lane)).then(a.id.cmp(&b.id)));
    let mut order = partial.clone();
    while !omega.is_empty() {
        let mut pick = None;
        let mut fallback = None;
        for (k, v) in omega.iter().enumerate() {
            let action = default_action(v, scenario);
            if !eligible(v, action, &order, vehicles, scenario) {
                continue;
            }
            fallback.get_or_insert(k);
            if action == VehicleAction::Straight || v.maneuver.is_some() || changes_safely(v, &order, vehicles, scenario) {
                pick = Some(k);
                break;
            }
        }
        let k = pick.or(fallback).unwrap_or(0);
        let v = omega.remove(k);
        order.push(v.id, default_action(v, scenario));
    }
    order
}

fn changes_safely(v: &VehicleState, order: &PassingOrder, vehicles: &[VehicleState], scenario: &Scenario) -> bool {
    let Some(dest) = scenario.grid.change_target(v.lane) else {
        return true;
    };
    let others: Vec<VehicleState> = vehicles.iter().filter(|u| !order.contains(u.id)).cloned().collect();
    is_lane_change_safe(v, dest, &others, scenario.limits(), scenario.safety())
}

/// Searches for the best passing order of `vehicles` at time `now`.
/// `warm_start`, when given and valid, competes with FIFO as the initial
/// incumbent.
pub fn plan(
    vehicles: &[VehicleState],
    scenario: &Scenario,
    now: f64,
    params: &SearchParams,
    warm_start: Option<&PassingOrder>,
) -> Result<SearchOutcome> {
    let mut search = Search::new(scenario, vehicles, now, *params)?;
    let fifo = fifo_order(vehicles, scenario);
    let fifo_objective = search.offer(&fifo).unwrap_or(f64::INFINITY);
    if let Some(order) = warm_start {
        if crate::ordering::is_valid(order, vehicles, scenario) && order.len() == vehicles.len() {
            let _ = search.offer(order);
        }
    }
    let (nodes_expanded, stop, trace) = search.run();
    let schedule = search.incumbent.ok_or_else(|| Error::Infeasible {
        vehicle: vehicles.first().map_or(0, |v| v.id.0),
        reason: "no feasible passing order found".into(),
    })?;
    Ok(SearchOutcome { schedule, fifo_objective, nodes_expanded, stop, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{InterpreterParams, ScenarioGeometry};
    use crate::snapshot::{feasible_snapshot, SnapshotParams};

    fn setup() -> (Scenario, Vec<VehicleState>) {
        let scenario = Scenario::new(ScenarioGeometry::default(), InterpreterParams::default()).unwrap();
        let vehicles = feasible_snapshot(&scenario, &SnapshotParams { vehicles: 5, ..Default::default() }, 4);
        (scenario, vehicles)
    }

    fn params() -> SearchParams {
        SearchParams { time_budget: None, ..SearchParams::default() }
    }

    #[test]
    fn fresh_root_is_selected() {
        let (scenario, vehicles) = setup();
        let mut search = Search::new(&scenario, &vehicles, 0.0, params()).unwrap();
        assert_eq!(search.select(), 0);
    }

    #[test]
    fn expansion_takes_first_successor() {
        let (scenario, vehicles) = setup();
        let mut search = Search::new(&scenario, &vehicles, 0.0, params()).unwrap();
        let first = successors(&PassingOrder::new(), &vehicles, &scenario)[0];
        let child = search.expand(0);
        let state = search.nodes[child].state.as_ref().unwrap();
        assert_eq!(state.order.entries, vec![first]);
        assert_eq!(search.nodes[child].visits, 0);
        assert_eq!(search.nodes[child].j_partial, state.objective);
    }

    #[test]
    fn backpropagation_updates_whole_path() {
        let (scenario, vehicles) = setup();
        let mut search = Search::new(&scenario, &vehicles, 0.0, params()).unwrap();
        let a = search.expand(0);
        let b = search.expand(a);
        let c = search.expand(b);
        search.backpropagate(c, 7.0);
        for k in [0, a, b, c] {
            assert_eq!(search.nodes[k].visits, 1);
            assert_eq!(search.nodes[k].j_best, 7.0);
        }
        search.backpropagate(c, 9.0);
        for k in [0, a, b, c] {
            assert_eq!(search.nodes[k].visits, 2);
            assert_eq!(search.nodes[k].j_best, 7.0);
        }
    }

    fn two_visited_children(search: &mut Search, left: f64, right: f64) -> (usize, usize) {
        let l = search.expand(0);
        let r = search.expand(0);
        search.nodes[0].untried.clear();
        search.backpropagate(l, left);
        search.backpropagate(r, right);
        search.incumbent = Some(Schedule { order: PassingOrder::new(), plans: Vec::new(), objective: left.min(right) });
        // Keep both children open regardless of their partial objectives.
        search.nodes[l].j_partial = 0.0;
        search.nodes[r].j_partial = 0.0;
        (l, r)
    }

    #[test]
    fn greedy_selection_follows_better_child() {
        let (scenario, vehicles) = setup();
        let p = SearchParams { exploration: 0.0, ..params() };
        let mut search = Search::new(&scenario, &vehicles, 0.0, p).unwrap();
        let (_, r) = two_visited_children(&mut search, 12.0, 6.0);
        for _ in 0..3 {
            let picked = search.select();
            assert!(picked == r || search.nodes[picked].parent == Some(r));
        }
    }

    #[test]
    fn ties_go_to_first_child() {
        let (scenario, vehicles) = setup();
        let mut search = Search::new(&scenario, &vehicles, 0.0, params()).unwrap();
        let (l, _) = two_visited_children(&mut search, 6.0, 6.0);
        let picked = search.select();
        assert!(picked == l || search.nodes[picked].parent == Some(l));
    }

    #[test]
    fn reward_is_clipped() {
        assert_eq!(reward(5.0, 10.0), 1.0);
        assert_eq!(reward(f64::INFINITY, 10.0), 0.0);
        assert_eq!(reward(0.0, 0.0), 1.0);
    }
}
