//! Turns a passing order into conflict-free per-cell arrival times and
//! piecewise constant-acceleration speed profiles.
//!
//! Vehicles are scheduled one at a time in order. Each cell remembers the
//! latest arrival claimed so far; a later vehicle must arrive at least one
//! headway after it. Straight vehicles aim for their earliest feasible
//! arrivals pushed back by those claims and get a profile fitted by
//! [`fit_constant_accelerations`]. Lane changers pick the earliest-finishing
//! trajectory from the pre-designed set that clears every claim. A lane
//! changer that cannot find one is held back and priced with a penalty.
//!
//! The objective is the total delay at each vehicle's last cell.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    car_following_step, safety_gap, CellTime, CommittedManeuver, KinematicLimits, Profile, Segment, VehicleId, VehicleState,
};
use crate::error::{Error, Result};
use crate::ordering::{allowed_actions, PassingOrder, VehicleAction};
use crate::road::{Lane, OccupancySchedule};
use crate::scenario::Scenario;

const EPS: f64 = 1e-9;

/// Position a vehicle must reach and the earliest time it may get there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub position: f64,
    pub time: f64,
}

/// Output of [`fit_constant_accelerations`].
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub segments: Vec<Segment>,
    /// Actual arrival at each target, never earlier than requested.
    pub arrivals: Vec<f64>,
    pub final_velocity: f64,
}

/// Greedy constant-acceleration fit. From the current state, compute for
/// every remaining target the acceleration that arrives exactly on time,
/// drive the smallest of them up to its target, and repeat. Accelerations
/// above `u_max` are clamped (arriving late is always allowed); one below
/// `u_min` means the targets cannot be met.
pub fn fit_constant_accelerations(
    vehicle: VehicleId,
    start: (f64, f64, f64),
    targets: &[Target],
    limits: &KinematicLimits,
) -> Result<Fit> {
    let (mut t, mut x, mut v) = start;
    let mut segments = Vec::new();
    let mut arrivals = Vec::with_capacity(targets.len());
    let mut k = 0;
    while k < targets.len() {
        let floor = limits.floor_for(v);
        let mut best = f64::INFINITY;
        let mut best_k = targets.len() - 1;
        for (j, target) in targets.iter().enumerate().skip(k) {
            let a = crate::dynamics::solve_accel(v, target.position - x, target.time - t, limits.v_max, floor);
            if a < best {
                best = a;
                best_k = j;
            }
        }
        if best < limits.u_min - EPS {
            return Err(Error::Infeasible {
                vehicle: vehicle.0,
                reason: format!(
                    "reaching x = {:.3} no earlier than t = {:.3} needs a = {best:.3} below u_min",
                    targets[best_k].position, targets[best_k].time
                ),
            });
        }
        let a = best.clamp(limits.u_min, limits.u_max);
        let cap = if a > 0.0 { limits.v_max } else { floor };
        let seg = Segment::new(t, x, v, a, cap);
        for target in &targets[k..=best_k] {
            let arrival = seg.time_at(target.position).ok_or_else(|| Error::Infeasible {
                vehicle: vehicle.0,
                reason: format!("stalls before x = {:.3}", target.position),
            })?;
            arrivals.push(arrival);
        }
        segments.push(seg);
        t = arrivals[best_k];
        x = targets[best_k].position;
        v = seg.state_at(t).1;
        k = best_k + 1;
    }
    Ok(Fit { segments, arrivals, final_velocity: v })
}

/// Schedule of one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub id: VehicleId,
    pub action: VehicleAction,
    /// Lane change could not be placed this cycle.
    pub deferred: bool,
    pub origin: Lane,
    pub maneuver: Option<CommittedManeuver>,
    pub profile: Profile,
    /// Every cell entered, with paired cells of a maneuver listed per lane.
    pub cells: Vec<CellTime>,
    pub t_min_last: f64,
    pub t_last: f64,
    /// Contribution to the objective, penalties included.
    pub delay: f64,
    /// Cell the vehicle stops in, for deferred lane changes.
    pub hold: Option<(Lane, usize)>,
}

impl Plan {
    pub fn lane_at(&self, t: f64) -> Lane {
        match &self.maneuver {
            Some(m) if t >= m.arrivals[0] => m.dest,
            _ => self.origin,
        }
    }

    pub fn state_at(&self, t: f64) -> (f64, f64) {
        self.profile.state_at(t)
    }
}

/// Interpreted order: plans in priority sequence and the total delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub order: PassingOrder,
    pub plans: Vec<Plan>,
    pub objective: f64,
}

impl Schedule {
    pub fn plan(&self, id: VehicleId) -> Option<&Plan> {
        self.plans.iter().find(|p| p.id == id)
    }

    /// Samples every plan every `step` seconds from `t0` until the vehicle
    /// leaves a zone of length `zone_length`.
    pub fn trajectory_table(&self, t0: f64, step: f64, zone_length: f64) -> Vec<TrajectoryRow> {
        let mut rows = Vec::new();
        for plan in &self.plans {
            let mut k = 0u32;
            loop {
                let t = t0 + k as f64 * step;
                let (x, v) = plan.state_at(t);
                rows.push(TrajectoryRow {
                    time: t,
                    id: plan.id,
                    lane: plan.lane_at(t),
                    position: x,
                    velocity: v,
                    action: plan.action,
                });
                if x >= zone_length || (plan.hold.is_some() && v == 0.0) || k > 100_000 {
                    break;
                }
                k += 1;
            }
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub time: f64,
    pub id: VehicleId,
    pub lane: Lane,
    pub position: f64,
    pub velocity: f64,
    pub action: VehicleAction,
}

#[derive(Debug, Clone)]
struct Prepared {
    cell: usize,
    /// Earliest arrival per cell index; NaN for cells behind the vehicle.
    t_min: Vec<f64>,
    /// Latest arrival per cell index under hardest braking; NaN where it
    /// does not apply (behind the vehicle, or a committed maneuver).
    t_latest: Vec<f64>,
}

/// Schedule built up one vehicle at a time. Cheap to clone.
#[derive(Debug, Clone)]
pub struct PartialSchedule {
    occupancy: OccupancySchedule,
    scheduled: Vec<bool>,
    pub order: PassingOrder,
    pub plans: Vec<Plan>,
    pub objective: f64,
}

impl PartialSchedule {
    pub fn into_schedule(self) -> Schedule {
        Schedule { order: self.order, plans: self.plans, objective: self.objective }
    }

    pub fn is_scheduled(&self, index: usize) -> bool {
        self.scheduled[index]
    }
}

/// Per-snapshot interpreter. Preparation is shared by every order evaluated
/// on the same snapshot.
#[derive(Debug, Clone)]
pub struct Interpreter<'a> {
    scenario: &'a Scenario,
    vehicles: &'a [VehicleState],
    now: f64,
    prepared: Vec<Prepared>,
    base: OccupancySchedule,
}

impl<'a> Interpreter<'a> {
    pub fn new(scenario: &'a Scenario, vehicles: &'a [VehicleState], now: f64) -> Result<Self> {
        let grid = &scenario.grid;
        let limits = scenario.limits();
        let mut base = OccupancySchedule::new(grid);
        let mut prepared = Vec::with_capacity(vehicles.len());
        for (k, v) in vehicles.iter().enumerate() {
            if vehicles[..k].iter().any(|u| u.id == v.id) {
                return Err(Error::InvalidOrder(format!("duplicate vehicle {}", v.id)));
            }
            if v.lane >= grid.lane_count || !(v.position >= 0.0) || v.position >= grid.length() {
                return Err(Error::InvalidGeometry(format!(
                    "vehicle {} at lane {}, x = {} is outside the control zone",
                    v.id, v.lane, v.position
                )));
            }
            let cell = grid.cell_of(v.position);
            let mut t_min = vec![f64::NAN; grid.cells_per_lane];
            let mut t_latest = vec![f64::NAN; grid.cells_per_lane];
            match &v.maneuver {
                None => {
                    let fastest = Segment::new(now, v.position, v.velocity, limits.u_max, limits.v_max);
                    for (c, slot) in t_min.iter_mut().enumerate().skip(cell + 1) {
                        *slot = fastest.time_at(grid.boundary(c)).unwrap_or(f64::INFINITY);
                    }
                    let slowest = Segment::new(now, v.position, v.velocity, limits.u_min, limits.floor_for(v.velocity));
                    for (c, slot) in t_latest.iter_mut().enumerate().skip(cell + 1) {
                        *slot = slowest.time_at(grid.boundary(c)).unwrap_or(f64::INFINITY);
                    }
                    base.claim(v.lane, cell, v.cell_entry_time);
                }
                Some(m) => {
                    for (j, &t) in m.arrivals.iter().enumerate() {
                        let c = m.start_cell + j;
                        if c > cell && c < grid.cells_per_lane {
                            t_min[c] = t;
                        }
                    }
                    let end = m.end_cell();
                    let end_v = m.motion.state_at(m.end_time).1;
                    let fastest = Segment::new(m.end_time, grid.boundary(end), end_v, limits.u_max, limits.v_max);
                    for (c, slot) in t_min.iter_mut().enumerate().skip((cell + 1).max(end)) {
                        *slot = fastest.time_at(grid.boundary(c)).unwrap_or(f64::INFINITY);
                    }
                    if cell >= m.start_cell && cell < end {
                        base.claim(m.origin, cell, v.cell_entry_time);
                    }
                    base.claim(m.dest, cell, v.cell_entry_time);
                }
            }
            // Cells just behind the vehicle were entered recently; bound each
            // entry time from above so nobody is scheduled into them too soon.
            let headway = scenario.safety().headway;
            let mut lanes = vec![v.lane];
            if let Some(m) = &v.maneuver {
                lanes.push(m.origin);
            }
            for c in (0..cell).rev() {
                let d = v.position - grid.boundary(c);
                let v_bound = limits.v_max.min((v.velocity * v.velocity - 2.0 * limits.u_min * d).sqrt());
                let latest = now - d / v_bound;
                if latest + headway <= now {
                    break;
                }
                for &lane in &lanes {
                    base.claim(lane, c, latest);
                }
            }
            for &(lane, c, t) in &v.trail {
                if lane < grid.lane_count && c < grid.cells_per_lane {
                    base.claim(lane, c, t);
                }
            }
            prepared.push(Prepared { cell, t_min, t_latest });
        }
        Ok(Self { scenario, vehicles, now, prepared, base })
    }

    pub fn vehicles(&self) -> &'a [VehicleState] {
        self.vehicles
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn index_of(&self, id: VehicleId) -> Option<usize> {
        self.vehicles.iter().position(|v| v.id == id)
    }

    pub fn root(&self) -> PartialSchedule {
        PartialSchedule {
            occupancy: self.base.clone(),
            scheduled: vec![false; self.vehicles.len()],
            order: PassingOrder::new(),
            plans: Vec::new(),
            objective: 0.0,
        }
    }

    /// Schedules every vehicle of `order` after those already in `state`.
    pub fn extend_all(&self, state: &mut PartialSchedule, order: &[(VehicleId, VehicleAction)]) -> Result<()> {
        for &(id, action) in order {
            self.extend(state, id, action)?;
        }
        Ok(())
    }

    pub fn interpret(&self, order: &PassingOrder) -> Result<Schedule> {
        let mut state = self.root();
        self.extend_all(&mut state, &order.entries)?;
        Ok(state.into_schedule())
    }

    /// Schedules one more vehicle at the lowest priority so far. Precedence
    /// is not checked here; callers validate orders.
    pub fn extend(&self, state: &mut PartialSchedule, id: VehicleId, action: VehicleAction) -> Result<()> {
        let idx = self
            .index_of(id)
            .ok_or_else(|| Error::InvalidOrder(format!("unknown vehicle {id}")))?;
        if state.scheduled[idx] {
            return Err(Error::InvalidOrder(format!("vehicle {id} listed twice")));
        }
        let v = &self.vehicles[idx];
        if !allowed_actions(v, self.scenario).contains(&action) {
            return Err(Error::InvalidOrder(format!("vehicle {id} on lane {} may not take {action:?}", v.lane)));
        }
        let plan = if v.maneuver.is_some() {
            self.plan_committed(state, idx)?
        } else if action == VehicleAction::Straight {
            self.plan_straight(state, idx, v.lane, (self.now, v.position, v.velocity), None, false)?
        } else {
            self.plan_lane_change(state, idx)?
        };
        for c in &plan.cells {
            state.occupancy.claim(c.lane, c.cell, c.arrival);
        }
        if let Some((lane, cell)) = plan.hold {
            state.occupancy.hold(lane, cell);
        }
        state.objective += plan.delay;
        state.scheduled[idx] = true;
        state.order.push(id, action);
        state.plans.push(plan);
        Ok(())
    }

    fn headway(&self) -> f64 {
        self.scenario.safety().headway
    }

    fn entry_bound(&self, state: &PartialSchedule, lane: Lane, cell: usize) -> f64 {
        state.occupancy.earliest_entry(lane, cell, self.headway())
    }

    /// Fits the cells `first..` of `lane` from `start` and assembles a plan.
    /// `prefix` carries segments and cells already fixed before `start`.
    fn plan_straight(
        &self,
        state: &PartialSchedule,
        idx: usize,
        lane: Lane,
        start: (f64, f64, f64),
        prefix: Option<(Profile, Vec<CellTime>, Option<CommittedManeuver>)>,
        deferred: bool,
    ) -> Result<Plan> {
        let grid = &self.scenario.grid;
        let limits = self.scenario.limits();
        let v = &self.vehicles[idx];
        let prep = &self.prepared[idx];
        let (mut profile, mut cells, maneuver) = prefix.unwrap_or_default();
        let mut first = prep.cell + 1;
        while first < grid.cells_per_lane && grid.boundary(first) < start.1 - EPS {
            first += 1;
        }
        if first < grid.cells_per_lane && grid.boundary(first) <= start.1 + EPS {
            // Entered exactly at the start instant, e.g. at the end of a maneuver.
            if grid.is_blocked(lane, first) || start.0 < self.entry_bound(state, lane, first) - EPS {
                return Err(Error::Infeasible {
                    vehicle: v.id.0,
                    reason: format!("enters lane {lane} cell {first} too early"),
                });
            }
            cells.push(CellTime { lane, cell: first, arrival: start.0, departure: f64::NAN });
            first += 1;
        }
        let fixed = cells.len();
        let mut targets = Vec::with_capacity(grid.cells_per_lane.saturating_sub(first));
        for c in first..grid.cells_per_lane {
            if grid.is_blocked(lane, c) {
                return Err(Error::InfeasibleRoute { lane, cell: c });
            }
            let time = prep.t_min[c].max(self.entry_bound(state, lane, c));
            if time == f64::INFINITY {
                return Err(Error::Infeasible { vehicle: v.id.0, reason: format!("cell {c} of lane {lane} is held") });
            }
            targets.push(Target { position: grid.boundary(c), time });
        }
        let fit = fit_constant_accelerations(v.id, start, &targets, limits)?;
        for seg in &fit.segments {
            profile.push(*seg);
        }
        let (t_end, x_end) = match targets.last() {
            Some(target) => (*fit.arrivals.last().unwrap(), target.position),
            None => (start.0, start.1),
        };
        let v_end = if targets.is_empty() { start.2 } else { fit.final_velocity };
        profile.push(Segment::new(t_end, x_end, v_end, limits.u_max, limits.v_max));
        let exit = profile.last().time_at(grid.length()).unwrap_or(f64::INFINITY);
        if fixed > 0 {
            cells[fixed - 1].departure = fit.arrivals.first().copied().unwrap_or(exit);
        }
        for k in 0..targets.len() {
            let departure = fit.arrivals.get(k + 1).copied().unwrap_or(exit);
            cells.push(CellTime { lane, cell: first + k, arrival: fit.arrivals[k], departure });
        }
        let last = grid.cells_per_lane - 1;
        let (t_last, t_min_last) = if prep.cell < last {
            let t_last = cells.iter().filter(|c| c.cell == last).map(|c| c.arrival).fold(f64::NAN, f64::max);
            (t_last, prep.t_min[last])
        } else {
            (self.now, self.now)
        };
        let mut delay = (t_last - t_min_last).max(0.0);
        if deferred {
            delay += self.scenario.interpreter.deferral_penalty;
        }
        Ok(Plan {
            id: v.id,
            action: if maneuver.is_some() || deferred { VehicleAction::ChangeLane } else { VehicleAction::Straight },
            deferred,
            origin: maneuver.as_ref().map_or(lane, |m| m.origin),
            maneuver,
            profile,
            cells,
            t_min_last,
            t_last,
            delay,
            hold: None,
        })
    }

    fn plan_committed(&self, state: &PartialSchedule, idx: usize) -> Result<Plan> {
        let grid = &self.scenario.grid;
        let v = &self.vehicles[idx];
        let m = v.maneuver.as_ref().expect("committed vehicle");
        let cell = self.prepared[idx].cell;
        let mut cells = Vec::new();
        for (j, &arrival) in m.arrivals.iter().enumerate() {
            let c = m.start_cell + j;
            if c <= cell {
                continue;
            }
            let departure = m.arrivals.get(j + 1).copied().unwrap_or(m.end_time);
            for lane in [m.origin, m.dest] {
                if arrival < self.entry_bound(state, lane, c) - EPS {
                    return Err(Error::Infeasible {
                        vehicle: v.id.0,
                        reason: format!("committed maneuver enters lane {lane} cell {c} too early"),
                    });
                }
                cells.push(CellTime { lane, cell: c, arrival, departure });
            }
        }
        let end = m.end_cell();
        let (x0, v0) = m.motion.state_at(m.end_time);
        let start = if cell >= end {
            (self.now, v.position, v.velocity)
        } else {
            (m.end_time, x0.max(grid.boundary(end)), v0)
        };
        let profile = Profile::new(m.motion);
        self.plan_straight(state, idx, m.dest, start, Some((profile, cells, Some(m.clone()))), false)
    }

    fn plan_lane_change(&self, state: &PartialSchedule, idx: usize) -> Result<Plan> {
        let grid = &self.scenario.grid;
        let limits = self.scenario.limits();
        let v = &self.vehicles[idx];
        let origin = v.lane;
        let dest = grid
            .change_target(origin)
            .ok_or_else(|| Error::InvalidOrder(format!("lane {origin} has no lane to change into")))?;
        let cells_m = self.scenario.maneuver_cells();
        let cell = self.prepared[idx].cell;
        let last_start = grid.last_maneuver_start(cells_m).unwrap_or(0);

        // Lower-priority vehicles already in the destination lane stay behind.
        let mut s_min = cell + 1;
        for (j, u) in self.vehicles.iter().enumerate() {
            if j != idx && !state.scheduled[j] {
                let in_dest = u.lane == dest || u.maneuver.as_ref().is_some_and(|m| m.origin == dest);
                if in_dest {
                    s_min = s_min.max(self.prepared[j].cell + 1);
                }
            }
        }

        let mut candidates = Vec::new();
        for (ti, traj) in self.scenario.trajectories.iter().enumerate() {
            let vg = traj.initial_velocity;
            let accel = if vg > v.velocity {
                limits.u_max
            } else if vg < v.velocity {
                limits.u_min
            } else {
                0.0
            };
            let approach = Segment::new(self.now, v.position, v.velocity, accel, vg);
            let ramp_end = approach.state_at(self.now + approach.ramp_duration()).0;
            for s in s_min..=last_start {
                let xs = grid.boundary(s);
                if xs < ramp_end - EPS || xs <= v.position {
                    continue;
                }
                let Some(ts) = approach.time_at(xs) else { continue };
                candidates.push((ts + traj.total_duration(), s, ti, ts));
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(b.2.cmp(&a.2)));

        'candidate: for &(_, s, ti, ts) in &candidates {
            let traj = self.scenario.trajectories.get(ti).expect("index from enumerate");
            let vg = traj.initial_velocity;
            let accel = if vg > v.velocity {
                limits.u_max
            } else if vg < v.velocity {
                limits.u_min
            } else {
                0.0
            };
            let approach = Segment::new(self.now, v.position, v.velocity, accel, vg);
            let mut cells = Vec::new();
            let mut prev: Option<usize> = None;
            for c in cell + 1..s {
                let arrival = approach.time_at(grid.boundary(c)).unwrap_or(f64::INFINITY);
                if arrival < self.entry_bound(state, origin, c) - EPS {
                    continue 'candidate;
                }
                if let Some(p) = prev {
                    let a: &mut CellTime = &mut cells[p];
                    a.departure = arrival;
                }
                prev = Some(cells.len());
                cells.push(CellTime { lane: origin, cell: c, arrival, departure: f64::NAN });
            }
            if let Some(p) = prev {
                cells[p].departure = ts;
            }
            let mut arrivals = Vec::with_capacity(cells_m);
            let mut t = ts;
            for (j, d) in traj.durations.iter().enumerate() {
                let c = s + j;
                for lane in [origin, dest] {
                    if t < self.entry_bound(state, lane, c) - EPS {
                        continue 'candidate;
                    }
                    cells.push(CellTime { lane, cell: c, arrival: t, departure: t + d });
                }
                arrivals.push(t);
                t += d;
            }
            if !self.leader_gap_ok(state, dest, grid.boundary(s), ts, vg) {
                continue;
            }
            let motion = traj.longitudinal_segment(ts, grid.boundary(s));
            let maneuver = CommittedManeuver { origin, dest, start_cell: s, arrivals, end_time: t, motion };
            let mut profile = Profile::new(approach);
            profile.push(motion);
            let start = (t, grid.boundary(s + cells_m), traj.final_velocity);
            match self.plan_straight(state, idx, dest, start, Some((profile, cells, Some(maneuver))), false) {
                Ok(plan) if !self.strands_lower_priority(state, idx, &plan.cells) => return Ok(plan),
                Ok(_) => continue,
                Err(Error::Infeasible { .. }) => continue,
                Err(e) => return Err(e),
            }
        }

        match grid.lane_role(origin) {
            crate::road::LaneRole::Closed => self.plan_deferred_stop(state, idx, last_start),
            _ => self.plan_straight(state, idx, origin, (self.now, v.position, v.velocity), None, true),
        }
    }

    /// Whether some unscheduled vehicle behind one of `cells` could not
    /// arrive there a headway later even braking as hard as it can.
    fn strands_lower_priority(&self, state: &PartialSchedule, idx: usize, cells: &[CellTime]) -> bool {
        let headway = self.headway();
        self.vehicles.iter().enumerate().any(|(j, u)| {
            j != idx
                && !state.scheduled[j]
                && u.maneuver.is_none()
                && cells.iter().any(|c| {
                    c.lane == u.lane
                        && c.cell > self.prepared[j].cell
                        && self.prepared[j].t_latest[c.cell] < c.arrival + headway - EPS
                })
        })
    }

    /// Braking-distance gap between a vehicle entering `lane` at `x` with speed
    /// `vel` at time `t` and the nearest scheduled vehicle ahead of it there.
    fn leader_gap_ok(&self, state: &PartialSchedule, lane: Lane, x: f64, t: f64, vel: f64) -> bool {
        let mut nearest: Option<(f64, f64)> = None;
        for plan in &state.plans {
            if plan.lane_at(t) != lane {
                continue;
            }
            let (xl, vl) = plan.state_at(t);
            if xl >= x && nearest.is_none_or(|(xn, _)| xl < xn) {
                nearest = Some((xl, vl));
            }
        }
        match nearest {
            None => true,
            Some((xl, vl)) => {
                xl - x >= safety_gap(vel, vl, self.scenario.limits(), self.scenario.safety().time_headway) - EPS
            }
        }
    }

    /// Brakes a closed-lane vehicle to a standstill short of the maneuver
    /// area (or of a vehicle already stopped ahead) and holds that cell.
    fn plan_deferred_stop(&self, state: &PartialSchedule, idx: usize, last_start: usize) -> Result<Plan> {
        let grid = &self.scenario.grid;
        let limits = self.scenario.limits();
        let v = &self.vehicles[idx];
        let lane = v.lane;
        let cell = self.prepared[idx].cell;
        let mut stop_cell = last_start.saturating_sub(1).max(cell);
        for c in cell + 1..=stop_cell {
            if state.occupancy.last_arrival(lane, c) == f64::INFINITY {
                stop_cell = c - 1;
                break;
            }
        }
        let mid = grid.boundary(stop_cell) + 0.5 * grid.cell_length;
        let x_stop = if v.position < mid {
            mid
        } else {
            0.5 * (v.position + grid.boundary(stop_cell + 1))
        };
        let dist = x_stop - v.position;
        let seg = if v.velocity <= 0.0 {
            Segment::cruise(self.now, v.position, 0.0)
        } else {
            let decel = v.velocity * v.velocity / (2.0 * dist);
            if decel > limits.a_max_brake + EPS || decel > -limits.u_min + EPS {
                return Err(Error::Infeasible {
                    vehicle: v.id.0,
                    reason: format!("cannot stop within {dist:.2} m from {:.2} m/s", v.velocity),
                });
            }
            Segment::new(self.now, v.position, v.velocity, -decel, 0.0)
        };
        let mut cells = Vec::new();
        for c in cell + 1..=stop_cell {
            let arrival = seg.time_at(grid.boundary(c)).unwrap_or(f64::INFINITY);
            if arrival < self.entry_bound(state, lane, c) - EPS {
                return Err(Error::Infeasible {
                    vehicle: v.id.0,
                    reason: format!("stopping profile enters cell {c} too early"),
                });
            }
            cells.push(CellTime { lane, cell: c, arrival, departure: f64::INFINITY });
        }
        let t_stop = self.now + seg.ramp_duration();
        let t_min_stop = Segment::new(self.now, v.position, v.velocity, limits.u_max, limits.v_max)
            .time_at(x_stop)
            .unwrap_or(self.now);
        Ok(Plan {
            id: v.id,
            action: VehicleAction::ChangeLane,
            deferred: true,
            origin: lane,
            maneuver: None,
            profile: Profile::new(seg),
            cells,
            t_min_last: t_min_stop,
            t_last: t_stop,
            delay: self.scenario.interpreter.deferral_penalty + (t_stop - t_min_stop).max(0.0),
            hold: Some((lane, stop_cell)),
        })
    }
}

/// Interprets a complete or partial order on a vehicle snapshot taken at `now`.
pub fn interpret(order: &PassingOrder, vehicles: &[VehicleState], scenario: &Scenario, now: f64) -> Result<Schedule> {
    Interpreter::new(scenario, vehicles, now)?.interpret(order)
}

/// Moves every vehicle forward by `dt` from time `t`. Vehicles with a plan
/// follow it exactly; the rest use the scenario's car-following model behind
/// the nearest vehicle ahead in their lane, front to back, so each follower
/// reacts to its leader's updated state.
pub fn advance_unplanned(
    vehicles: &[VehicleState],
    plans: &[Option<&Plan>],
    t: f64,
    dt: f64,
    scenario: &Scenario,
) -> Vec<VehicleState> {
    let mut next: Vec<VehicleState> = vehicles.to_vec();
    let mut done = vec![false; vehicles.len()];
    for (k, plan) in plans.iter().enumerate() {
        if let Some(p) = plan {
            let (x, v) = p.state_at(t + dt);
            next[k].position = x;
            next[k].velocity = v;
            next[k].accel = p.profile.accel_at(t + dt);
            done[k] = true;
        }
    }
    let mut front_to_back: Vec<usize> = (0..vehicles.len()).collect();
    front_to_back.sort_by(|&a, &b| vehicles[b].position.total_cmp(&vehicles[a].position));
    for &k in &front_to_back {
        if done[k] {
            continue;
        }
        let me = &vehicles[k];
        let leader = front_to_back
            .iter()
            .filter(|&&j| j != k && vehicles[j].lane == me.lane && vehicles[j].position > me.position)
            .min_by(|&&a, &&b| vehicles[a].position.total_cmp(&vehicles[b].position))
            .map(|&j| next[j].clone());
        next[k] = car_following_step(me, leader.as_ref(), dt, scenario.limits(), scenario.safety(), scenario.car_following);
        done[k] = true;
    }
    next
}
