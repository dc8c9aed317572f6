//! Time-stepped work-zone simulation: Poisson arrivals wait in per-lane
//! point queues, enter when there is room, and are re-planned every
//! replanning interval by either the tree search or the FIFO baseline.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::dynamics::{safety_gap, VehicleId, VehicleState};
use crate::error::{Error, Result};
use crate::interpreter::{advance_unplanned, interpret, Plan, Schedule};
use crate::mcts::{plan, SearchParams, StopReason, TraceEntry};
use crate::ordering::{default_action, fifo_order, PassingOrder};
use crate::road::Lane;
use crate::scenario::Scenario;

const EPS: f64 = 1e-9;
/// Tolerance of the safety monitor's time and distance comparisons.
const SAFETY_TOL: f64 = 1e-6;

/// Named random sub-streams derived from the run seed.
pub mod streams {
    pub const ARRIVALS: u64 = 0x6172_7269_7661_6c73;
    pub const SNAPSHOTS: u64 = 0x736e_6170_7368_6f74;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "bi-level")]
    BiLevel,
    #[serde(rename = "fifo")]
    Fifo,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::BiLevel => "bi-level",
            Strategy::Fifo => "fifo",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bi-level" | "bilevel" => Ok(Strategy::BiLevel),
            "fifo" => Ok(Strategy::Fifo),
            other => Err(Error::InvalidParam { field: "strategy", reason: format!("unknown strategy `{other}`") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationParams {
    /// Step length (s).
    pub dt: f64,
    /// Time between planning cycles (s).
    pub replan_interval: f64,
    /// Simulated time (s).
    pub duration: f64,
    /// Total arrival rate over all lanes (veh/h).
    pub rate: f64,
    /// Relative share of the arrival rate per lane; equal split if absent.
    pub lane_weights: Option<Vec<f64>>,
    /// Speed at which vehicles enter from the queue; `v_max` if absent.
    pub entry_speed: Option<f64>,
    pub record_trajectories: bool,
    pub record_traces: bool,
}

impl Default for SimulationParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            replan_interval: 1.0,
            duration: 600.0,
            rate: 1200.0,
            lane_weights: None,
            entry_speed: None,
            record_trajectories: false,
            record_traces: false,
        }
    }
}

impl SimulationParams {
    pub fn validate(&self, lanes: usize) -> Result<()> {
        let bad = |field, reason: &str| Err(Error::InvalidParam { field, reason: reason.into() });
        if !(self.dt > 0.0) {
            return bad("dt", "must be > 0");
        }
        if !(self.replan_interval >= self.dt) {
            return bad("replan_interval", "must be >= dt");
        }
        if !(self.duration > 0.0) {
            return bad("duration", "must be > 0");
        }
        if !(self.rate >= 0.0) || !self.rate.is_finite() {
            return bad("rate", "must be finite and >= 0");
        }
        if let Some(w) = &self.lane_weights {
            if w.len() != lanes || w.iter().any(|x| !(*x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return bad("lane_weights", "need one non-negative weight per lane, not all zero");
            }
        }
        if let Some(v) = self.entry_speed {
            if !(v > 0.0) {
                return bad("entry_speed", "must be > 0");
            }
        }
        Ok(())
    }

    fn lane_rates(&self, lanes: usize) -> Vec<f64> {
        let weights = self.lane_weights.clone().unwrap_or_else(|| vec![1.0; lanes]);
        let total: f64 = weights.iter().sum();
        weights.iter().map(|w| self.rate * w / total).collect()
    }
}

/// Arrival timestamps for one lane: exponential gaps with mean `3600 / rate`.
pub fn arrival_times(rate_per_hour: f64, horizon: f64, seed: u64, lane: Lane) -> Vec<f64> {
    if rate_per_hour <= 0.0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ streams::ARRIVALS);
    rng.set_stream(lane as u64);
    let gap = Exp::new(rate_per_hour / 3600.0).expect("positive rate");
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(&mut rng);
        if t > horizon {
            return out;
        }
        out.push(t);
    }
}

/// Delay of one vehicle: actual minus minimum passing time.
pub fn vehicle_delay(t_passing: f64, t_min_passing: f64) -> Result<f64> {
    if t_passing < t_min_passing - 1e-9 {
        return Err(Error::Inconsistent(format!(
            "passing time {t_passing} precedes the minimum {t_min_passing}"
        )));
    }
    Ok((t_passing - t_min_passing).max(0.0))
}

/// Relative objective reduction of the bi-level strategy against FIFO.
pub fn improvement_ratio(j_fifo: f64, j_bilevel: f64) -> Result<f64> {
    if j_fifo == 0.0 {
        return if j_bilevel == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Inconsistent(format!("FIFO objective is 0 but bi-level is {j_bilevel}")))
        };
    }
    Ok((j_fifo - j_bilevel) / j_fifo)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub strategy: Strategy,
    pub rate: f64,
    pub seed: u64,
    pub duration: f64,
    /// Vehicles that left the control zone within the run.
    pub throughput: usize,
    pub avg_delay: f64,
    pub spawned: usize,
    pub in_zone: usize,
    pub queued: usize,
    pub replans: usize,
    /// Planning cycles where the strategy's order could not be used.
    pub fallbacks: usize,
    /// Same-lane pairs observed closer than the braking-distance gap, summed over steps.
    pub gap_shortfalls: usize,
    pub delays: Vec<(VehicleId, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub time: f64,
    pub id: VehicleId,
    pub lane: Lane,
    pub position: f64,
    pub velocity: f64,
    pub action: crate::ordering::VehicleAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplanRecord {
    pub time: f64,
    pub vehicles: usize,
    pub fifo_objective: f64,
    pub objective: f64,
    pub nodes_expanded: usize,
    pub stop: Option<StopReason>,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub metrics: Metrics,
    pub trajectory: Vec<LogRow>,
    pub replans: Vec<ReplanRecord>,
}

struct Active {
    state: VehicleState,
    arrival: f64,
    plan: Option<Plan>,
}

struct Queued {
    id: VehicleId,
    arrival: f64,
}

struct Run<'a> {
    scenario: &'a Scenario,
    strategy: Strategy,
    sim: &'a SimulationParams,
    search: &'a SearchParams,
    active: Vec<Active>,
    queues: Vec<VecDeque<Queued>>,
    order: PassingOrder,
    cell_arrivals: BTreeMap<(Lane, usize), Vec<(f64, VehicleId)>>,
    last_entry: Vec<f64>,
    metrics: Metrics,
    log: Vec<LogRow>,
    records: Vec<ReplanRecord>,
}

/// Simulates `sim.duration` seconds of traffic under `strategy`.
pub fn run(
    scenario: &Scenario,
    strategy: Strategy,
    sim: &SimulationParams,
    search: &SearchParams,
    seed: u64,
) -> Result<RunResult> {
    sim.validate(scenario.grid.lane_count)?;
    search.validate()?;
    let lanes = scenario.grid.lane_count;
    let mut events: Vec<(f64, Lane)> = Vec::new();
    for (lane, rate) in sim.lane_rates(lanes).into_iter().enumerate() {
        events.extend(arrival_times(rate, sim.duration, seed, lane).into_iter().map(|t| (t, lane)));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut state = Run {
        scenario,
        strategy,
        sim,
        search,
        active: Vec::new(),
        queues: (0..lanes).map(|_| VecDeque::new()).collect(),
        order: PassingOrder::new(),
        cell_arrivals: BTreeMap::new(),
        last_entry: vec![f64::NEG_INFINITY; lanes],
        metrics: Metrics {
            strategy,
            rate: sim.rate,
            seed,
            duration: sim.duration,
            throughput: 0,
            avg_delay: 0.0,
            spawned: 0,
            in_zone: 0,
            queued: 0,
            replans: 0,
            fallbacks: 0,
            gap_shortfalls: 0,
            delays: Vec::new(),
        },
        log: Vec::new(),
        records: Vec::new(),
    };

    let steps = (sim.duration / sim.dt).round() as usize;
    let mut next_event = 0;
    let mut last_replan = f64::NEG_INFINITY;
    for k in 0..steps {
        let t = k as f64 * sim.dt;
        while next_event < events.len() && events[next_event].0 <= t + EPS {
            let (arrival, lane) = events[next_event];
            next_event += 1;
            state.metrics.spawned += 1;
            state.queues[lane].push_back(Queued { id: VehicleId(next_event as u32), arrival });
        }
        let released = state.release(t)?;
        if released || t - last_replan >= sim.replan_interval - EPS {
            state.replan(t);
            last_replan = t;
        }
        state.advance(t)?;
        let queued: usize = state.queues.iter().map(VecDeque::len).sum();
        if state.metrics.spawned != state.metrics.throughput + state.active.len() + queued {
            return Err(Error::Inconsistent("vehicle count not conserved".into()));
        }
    }
    state.check_cells()?;

    let mut m = state.metrics;
    m.in_zone = state.active.len();
    m.queued = state.queues.iter().map(VecDeque::len).sum();
    m.avg_delay = if m.delays.is_empty() {
        0.0
    } else {
        m.delays.iter().map(|(_, d)| d).sum::<f64>() / m.delays.len() as f64
    };
    Ok(RunResult { metrics: m, trajectory: state.log, replans: state.records })
}

impl Run<'_> {
    fn entry_speed(&self) -> f64 {
        self.sim.entry_speed.unwrap_or(self.scenario.limits().v_max).min(self.scenario.limits().v_max)
    }

    fn occupies(v: &VehicleState, lane: Lane) -> bool {
        v.lane == lane || v.maneuver.as_ref().is_some_and(|m| m.origin == lane)
    }

    fn snapshot(&self) -> Vec<VehicleState> {
        self.active.iter().map(|a| a.state.clone()).collect()
    }

    /// Previous order restricted to present vehicles, newcomers appended
    /// in entry order.
    fn carried_order(&self, vehicles: &[VehicleState]) -> PassingOrder {
        let mut order = PassingOrder::new();
        for &(id, action) in &self.order.entries {
            if let Some(v) = vehicles.iter().find(|v| v.id == id) {
                let allowed = crate::ordering::allowed_actions(v, self.scenario);
                let action = if allowed.contains(&action) { action } else { allowed[0] };
                order.push(id, action);
            }
        }
        let mut rest: Vec<&VehicleState> = vehicles.iter().filter(|v| !order.contains(v.id)).collect();
        rest.sort_by(|a, b| a.entry_time.total_cmp(&b.entry_time).then(a.id.cmp(&b.id)));
        for v in rest {
            order.push(v.id, default_action(v, self.scenario));
        }
        order
    }

    fn apply(&mut self, schedule: Schedule) {
        for plan in schedule.plans {
            if let Some(a) = self.active.iter_mut().find(|a| a.state.id == plan.id) {
                a.state.planned = true;
                a.state.action = plan.action;
                a.plan = Some(plan);
            }
        }
        self.order = schedule.order;
    }

    /// Lets queue heads in when the entry cell is free, the braking gap to
    /// the last vehicle in the lane holds, and the newcomer can be scheduled
    /// behind everyone already planned.
    fn release(&mut self, t: f64) -> Result<bool> {
        let limits = *self.scenario.limits();
        let safety = *self.scenario.safety();
        let v_entry = self.entry_speed();
        let mut released = false;
        for lane in 0..self.queues.len() {
            let Some(head) = self.queues[lane].front() else { continue };
            // A head that arrived during the last step enters at its arrival
            // time and is placed where it would be now.
            let t_enter = head.arrival.max(self.last_entry[lane] + safety.headway).max(t - self.sim.dt);
            if t_enter > t + EPS {
                continue;
            }
            let t_enter = t_enter.min(t);
            let x = v_entry * (t - t_enter);
            let leader = self
                .active
                .iter()
                .filter(|a| Self::occupies(&a.state, lane))
                .min_by(|a, b| a.state.position.total_cmp(&b.state.position));
            if let Some(l) = leader {
                let gap = l.state.position - x;
                if gap < safety_gap(v_entry, l.state.velocity, &limits, safety.time_headway) - EPS || gap <= 0.0 {
                    continue;
                }
            }
            let mut newcomer = VehicleState::new(head.id.0, lane, x, v_entry).with_entry_time(t_enter);
            newcomer.cell_entry_time = t_enter;
            newcomer.trail.push((lane, 0, t_enter));
            newcomer.action = default_action(&newcomer, self.scenario);
            let mut vehicles = self.snapshot();
            vehicles.push(newcomer.clone());
            let order = self.carried_order(&vehicles);
            let Ok(schedule) = interpret(&order, &vehicles, self.scenario, t) else { continue };
            let head = self.queues[lane].pop_front().expect("head exists");
            self.active.push(Active { state: newcomer, arrival: head.arrival, plan: None });
            self.apply(schedule);
            self.record_arrival(lane, 0, t_enter, head.id);
            self.last_entry[lane] = t_enter;
            released = true;
        }
        Ok(released)
    }

    fn replan(&mut self, t: f64) {
        if self.active.is_empty() {
            return;
        }
        self.metrics.replans += 1;
        let vehicles = self.snapshot();
        let carried = self.carried_order(&vehicles);
        let fifo = fifo_order(&vehicles, self.scenario);
        let (result, fifo_objective, nodes, stop, trace) = match self.strategy {
            Strategy::Fifo => {
                let r = interpret(&fifo, &vehicles, self.scenario, t);
                let j = r.as_ref().map_or(f64::INFINITY, |s| s.objective);
                (r, j, 0, None, Vec::new())
            }
            Strategy::BiLevel => match plan(&vehicles, self.scenario, t, self.search, Some(&carried)) {
                Ok(out) => {
                    let trace = if self.sim.record_traces { out.trace } else { Vec::new() };
                    (Ok(out.schedule), out.fifo_objective, out.nodes_expanded, Some(out.stop), trace)
                }
                Err(e) => (Err(e), f64::INFINITY, 0, None, Vec::new()),
            },
        };
        let schedule = match result {
            Ok(s) => Some(s),
            Err(_) => {
                self.metrics.fallbacks += 1;
                interpret(&carried, &vehicles, self.scenario, t).ok()
            }
        };
        if let Some(s) = schedule {
            if self.sim.record_traces {
                self.records.push(ReplanRecord {
                    time: t,
                    vehicles: vehicles.len(),
                    fifo_objective,
                    objective: s.objective,
                    nodes_expanded: nodes,
                    stop,
                    trace,
                });
            }
            self.apply(s);
        }
    }

    fn record_arrival(&mut self, lane: Lane, cell: usize, time: f64, id: VehicleId) {
        self.cell_arrivals.entry((lane, cell)).or_default().push((time, id));
    }

    fn advance(&mut self, t: f64) -> Result<()> {
        let grid = &self.scenario.grid;
        let limits = *self.scenario.limits();
        let safety = *self.scenario.safety();
        let t1 = t + self.sim.dt;
        let before = self.snapshot();
        let plans: Vec<Option<&Plan>> = self.active.iter().map(|a| a.plan.as_ref()).collect();
        let after = advance_unplanned(&before, &plans, t, self.sim.dt, self.scenario);

        let mut arrivals = Vec::new();
        let mut commits = Vec::new();
        for (a, next) in self.active.iter_mut().zip(after) {
            let x0 = a.state.position;
            let x1 = next.position;
            let first = grid.cell_of(x0) + 1;
            let last = if x1 >= grid.length() { grid.cells_per_lane } else { grid.cell_of(x1) + 1 };
            for c in first..last {
                let bx = grid.boundary(c);
                let time = a
                    .plan
                    .as_ref()
                    .and_then(|p| p.profile.time_at(bx))
                    .unwrap_or_else(|| t + self.sim.dt * ((bx - x0) / (x1 - x0).max(EPS)).clamp(0.0, 1.0));
                let mut lanes = vec![a.state.lane];
                if let Some(m) = a.plan.as_ref().and_then(|p| p.maneuver.as_ref()) {
                    if c >= m.start_cell && c < m.end_cell() {
                        lanes = vec![m.origin, m.dest];
                    } else if c >= m.end_cell() {
                        lanes = vec![m.dest];
                    }
                }
                for lane in lanes {
                    arrivals.push((lane, c, time, a.state.id));
                }
                a.state.cell_entry_time = time;
            }
            a.state.position = x1;
            a.state.velocity = next.velocity;
            a.state.accel = next.accel;
            if let Some(m) = a.plan.as_ref().and_then(|p| p.maneuver.as_ref()) {
                if a.state.maneuver.is_none() && a.state.lane == m.origin && t1 >= m.arrivals[0] - EPS {
                    commits.push((a.state.id, m.dest, m.arrivals[0]));
                    a.state.maneuver = Some(m.clone());
                    a.state.lane = m.dest;
                }
            }
            if a.state.maneuver.as_ref().is_some_and(|m| t1 >= m.end_time - EPS) {
                a.state.maneuver = None;
            }
        }
        let horizon = t1 - self.scenario.safety().headway;
        for a in &mut self.active {
            a.state.trail.retain(|&(_, _, time)| time > horizon);
        }
        for (lane, c, time, id) in arrivals {
            if let Some(a) = self.active.iter_mut().find(|a| a.state.id == id) {
                a.state.trail.push((lane, c, time));
            }
            self.record_arrival(lane, c, time, id);
        }
        for (id, dest, ts) in commits {
            self.check_commit(id, dest, ts)?;
        }

        // Exits.
        let mut k = 0;
        while k < self.active.len() {
            if self.active[k].state.position >= grid.length() {
                let a = self.active.remove(k);
                let t_exit = a
                    .plan
                    .as_ref()
                    .and_then(|p| p.profile.time_at(grid.length()))
                    .unwrap_or(t1)
                    .min(t1);
                if t_exit <= self.sim.duration + EPS {
                    let t_min = a.arrival + self.scenario.free_flow_time(self.entry_speed());
                    let d = vehicle_delay(t_exit, t_min)?;
                    self.metrics.throughput += 1;
                    self.metrics.delays.push((a.state.id, d));
                }
            } else {
                k += 1;
            }
        }

        // Same-lane ordering and gaps.
        for lane in 0..grid.lane_count {
            let mut in_lane: Vec<&VehicleState> =
                self.active.iter().map(|a| &a.state).filter(|v| Self::occupies(v, lane)).collect();
            in_lane.sort_by(|a, b| b.position.total_cmp(&a.position));
            for w in in_lane.windows(2) {
                let (lead, follow) = (w[0], w[1]);
                let d = lead.position - follow.position;
                if d <= 0.0 && lead.position > 0.0 {
                    return Err(Error::SafetyViolation {
                        time: t1,
                        lane,
                        cell: grid.cell_of(lead.position),
                        vehicles: vec![lead.id.0, follow.id.0],
                        detail: format!("vehicles overlap (gap {d:.3} m)"),
                    });
                }
                if d < safety_gap(follow.velocity, lead.velocity, &limits, safety.time_headway) - SAFETY_TOL {
                    self.metrics.gap_shortfalls += 1;
                }
            }
        }

        if self.sim.record_trajectories {
            for a in &self.active {
                self.log.push(LogRow {
                    time: t1,
                    id: a.state.id,
                    lane: a.state.lane,
                    position: a.state.position,
                    velocity: a.state.velocity,
                    action: a.state.action,
                });
            }
        }
        Ok(())
    }

    /// A vehicle starting its lane change must keep the braking-distance gap
    /// to the nearest vehicle ahead in the destination lane.
    fn check_commit(&self, id: VehicleId, dest: Lane, ts: f64) -> Result<()> {
        let limits = self.scenario.limits();
        let safety = self.scenario.safety();
        let position_at = |a: &Active| match &a.plan {
            Some(p) => p.state_at(ts),
            None => (a.state.position, a.state.velocity),
        };
        let ego = self.active.iter().find(|a| a.state.id == id).expect("committing vehicle is active");
        let (xe, ve) = position_at(ego);
        let leader = self
            .active
            .iter()
            .filter(|a| a.state.id != id)
            .filter(|a| a.plan.as_ref().map_or(a.state.lane, |p| p.lane_at(ts)) == dest)
            .map(|a| (a.state.id, position_at(a)))
            .filter(|(_, (x, _))| *x >= xe)
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0));
        if let Some((lid, (xl, vl))) = leader {
            let need = safety_gap(ve, vl, limits, safety.time_headway);
            if xl - xe < need - SAFETY_TOL {
                return Err(Error::SafetyViolation {
                    time: ts,
                    lane: dest,
                    cell: self.scenario.grid.cell_of(xe),
                    vehicles: vec![id.0, lid.0],
                    detail: format!("lane change starts {:.3} m behind the leader, needs {need:.3} m", xl - xe),
                });
            }
        }
        Ok(())
    }

    fn check_cells(&self) -> Result<()> {
        check_cell_exclusivity(&self.cell_arrivals, self.scenario.safety().headway)
    }
}

/// Every pair of arrivals by different vehicles at the same cell is at least
/// one headway apart. Keys are `(lane, cell)`.
pub fn check_cell_exclusivity(arrivals: &BTreeMap<(Lane, usize), Vec<(f64, VehicleId)>>, headway: f64) -> Result<()> {
    for (&(lane, cell), list) in arrivals {
        let mut list = list.clone();
        list.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in list.windows(2) {
            if w[0].1 != w[1].1 && w[1].0 - w[0].0 < headway - SAFETY_TOL {
                return Err(Error::SafetyViolation {
                    time: w[1].0,
                    lane,
                    cell,
                    vehicles: vec![w[0].1 .0, w[1].1 .0],
                    detail: format!("arrivals {:.4} s apart, headway {headway} s", w[1].0 - w[0].0),
                });
            }
        }
    }
    Ok(())
}

/// Mean improvement ratio of the search over FIFO on random snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub exploration: f64,
    pub omega: f64,
    pub node_budget: usize,
    /// Arrival rate for simulation cells; absent for snapshot cells.
    pub rate: Option<f64>,
    pub seeds: usize,
    pub mean_eta: f64,
    pub etas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub exploration: Vec<f64>,
    pub omega: Vec<f64>,
    pub node_budget: Vec<usize>,
    /// Empty: evaluate on snapshots of `vehicles` vehicles instead of runs.
    pub rates: Vec<f64>,
    pub seeds: u64,
    pub vehicles: usize,
}

/// Evaluates every grid cell over seeds `seed_base..seed_base + seeds`.
/// Snapshot cells compare objectives on one planning problem; rate cells
/// compare the average delay of paired simulation runs. The wall-clock
/// budget is dropped so that results depend on the seeds alone.
pub fn sweep(
    grid: &SweepGrid,
    scenario: &Scenario,
    sim: &SimulationParams,
    seed_base: u64,
) -> Result<Vec<SweepRow>> {
    if grid.exploration.is_empty() || grid.omega.is_empty() || grid.node_budget.is_empty() || grid.seeds == 0 {
        return Err(Error::InvalidParam { field: "sweep", reason: "every list must be non-empty".into() });
    }
    let rates: Vec<Option<f64>> =
        if grid.rates.is_empty() { vec![None] } else { grid.rates.iter().copied().map(Some).collect() };
    let snapshot_params = crate::snapshot::SnapshotParams { vehicles: grid.vehicles, ..Default::default() };
    let snapshots: Vec<Vec<VehicleState>> = if grid.rates.is_empty() {
        (0..grid.seeds)
            .map(|s| crate::snapshot::feasible_snapshot(scenario, &snapshot_params, (seed_base + s) ^ streams::SNAPSHOTS))
            .collect()
    } else {
        Vec::new()
    };
    let mut fifo_runs: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let mut rows = Vec::new();
    for &rate in &rates {
        for &exploration in &grid.exploration {
            for &omega in &grid.omega {
                for &node_budget in &grid.node_budget {
                    let search = SearchParams { exploration, omega, node_budget, time_budget: None };
                    let mut etas = Vec::with_capacity(grid.seeds as usize);
                    for s in 0..grid.seeds {
                        let seed = seed_base + s;
                        let eta = match rate {
                            None => {
                                let out = plan(&snapshots[s as usize], scenario, 0.0, &search, None)?;
                                improvement_ratio(out.fifo_objective, out.objective())?
                            }
                            Some(rate) => {
                                let sim = SimulationParams { rate, record_trajectories: false, record_traces: false, ..sim.clone() };
                                let key = (rate.to_bits(), seed);
                                let fifo = match fifo_runs.get(&key) {
                                    Some(&d) => d,
                                    None => {
                                        let d = run(scenario, Strategy::Fifo, &sim, &search, seed)?.metrics.avg_delay;
                                        fifo_runs.insert(key, d);
                                        d
                                    }
                                };
                                let bi = run(scenario, Strategy::BiLevel, &sim, &search, seed)?.metrics.avg_delay;
                                improvement_ratio(fifo, bi).unwrap_or(0.0)
                            }
                        };
                        etas.push(eta);
                    }
                    let mean_eta = etas.iter().sum::<f64>() / etas.len() as f64;
                    rows.push(SweepRow { exploration, omega, node_budget, rate, seeds: etas.len(), mean_eta, etas });
                }
            }
        }
    }
    Ok(rows)
}
