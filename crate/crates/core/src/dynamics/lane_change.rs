use serde::{Deserialize, Serialize};

use super::{cell_traversal_time, KinematicLimits, Segment};
use crate::error::{Error, Result};
use crate::road::{CellGrid, Lane, RouteStep};

/// Pre-designed lane change: a quintic lateral path and fixed per-cell
/// crossing durations over the maneuver cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeTrajectory {
    pub initial_velocity: f64,
    pub final_velocity: f64,
    /// Time spent in each maneuver cell, in travel order.
    pub durations: Vec<f64>,
    pub cell_length: f64,
    /// Lateral distance between lane centers (m).
    pub lane_width: f64,
}

impl LaneChangeTrajectory {
    /// Maneuver driven at constant longitudinal acceleration from `v_i` to `v_f`.
    pub fn new(v_i: f64, v_f: f64, cells: usize, cell_length: f64, lane_width: f64) -> Result<Self> {
        if cells == 0 || cell_length <= 0.0 || v_i < 0.0 || v_f < 0.0 {
            return Err(Error::InvalidParam {
                field: "lane_change",
                reason: format!("cells = {cells}, cell length = {cell_length}, v = {v_i} -> {v_f}"),
            });
        }
        let accel = (v_f * v_f - v_i * v_i) / (2.0 * cells as f64 * cell_length);
        let mut v = v_i;
        let mut durations = Vec::with_capacity(cells);
        for _ in 0..cells {
            let t = cell_traversal_time(v, accel, cell_length)?;
            durations.push(t);
            v = (v * v + 2.0 * accel * cell_length).max(0.0).sqrt();
        }
        Ok(Self { initial_velocity: v_i, final_velocity: v_f, durations, cell_length, lane_width })
    }

    pub fn constant_speed(v: f64, cells: usize, cell_length: f64, lane_width: f64) -> Result<Self> {
        Self::new(v, v, cells, cell_length, lane_width)
    }

    /// Trajectory given directly by its cell durations. Endpoint speeds are
    /// the mean speeds over the first and last cells.
    pub fn from_durations(durations: Vec<f64>, cell_length: f64, lane_width: f64) -> Result<Self> {
        if durations.is_empty() || durations.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidParam { field: "durations", reason: "must be non-empty and positive".into() });
        }
        let initial_velocity = cell_length / durations[0];
        let final_velocity = cell_length / durations[durations.len() - 1];
        Ok(Self { initial_velocity, final_velocity, durations, cell_length, lane_width })
    }

    pub fn cells(&self) -> usize {
        self.durations.len()
    }

    pub fn total_duration(&self) -> f64 {
        self.durations.iter().sum()
    }

    pub fn length(&self) -> f64 {
        self.cells() as f64 * self.cell_length
    }

    pub fn longitudinal_accel(&self) -> f64 {
        let v_i = self.initial_velocity;
        let v_f = self.final_velocity;
        (v_f * v_f - v_i * v_i) / (2.0 * self.length())
    }

    /// Longitudinal motion of a maneuver started at `(t0, x0)`.
    pub fn longitudinal_segment(&self, t0: f64, x0: f64) -> Segment {
        Segment::new(t0, x0, self.initial_velocity, self.longitudinal_accel(), self.final_velocity)
    }

    /// Coefficients `c0..c5` of the lateral offset `y(t) = sum c_k t^k`,
    /// `t` measured from the maneuver start.
    pub fn lateral_coefficients(&self) -> [f64; 6] {
        let w = self.lane_width;
        let t = self.total_duration();
        [0.0, 0.0, 0.0, 10.0 * w / t.powi(3), -15.0 * w / t.powi(4), 6.0 * w / t.powi(5)]
    }

    /// Lateral offset toward the destination lane at `t` seconds into the maneuver.
    pub fn lateral_offset(&self, t: f64) -> f64 {
        let s = (t / self.total_duration()).clamp(0.0, 1.0);
        self.lane_width * s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }

    /// Whether the mean speed over every cell lies within the limits.
    pub fn respects(&self, limits: &KinematicLimits) -> bool {
        let tol = 1e-9;
        self.durations.iter().all(|d| {
            let v = self.cell_length / d;
            v >= limits.v_min - tol && v <= limits.v_max + tol
        }) && {
            let a = self.longitudinal_accel();
            a >= limits.u_min - tol && a <= limits.u_max + tol
        }
    }
}

/// Lane-change trajectories indexed by initial velocity, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    entries: Vec<LaneChangeTrajectory>,
}

impl TrajectorySet {
    pub fn new(mut entries: Vec<LaneChangeTrajectory>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParam { field: "trajectory_set", reason: "empty".into() });
        }
        entries.sort_by(|a, b| a.initial_velocity.total_cmp(&b.initial_velocity));
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&LaneChangeTrajectory> {
        self.entries.get(index)
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &LaneChangeTrajectory> + ExactSizeIterator {
        self.entries.iter()
    }

    /// Nearest entry by initial velocity; out-of-range queries clamp.
    pub fn lookup(&self, v: f64) -> &LaneChangeTrajectory {
        let i = self.entries.partition_point(|e| e.initial_velocity < v);
        if i == 0 {
            return &self.entries[0];
        }
        if i == self.entries.len() {
            return &self.entries[i - 1];
        }
        let lo = &self.entries[i - 1];
        let hi = &self.entries[i];
        if v - lo.initial_velocity <= hi.initial_velocity - v {
            lo
        } else {
            hi
        }
    }
}

/// Constant-speed trajectories over `maneuver_cells` cells, one per grid
/// velocity from `max(v_min, step)` to `v_max`. Zero speed is excluded since
/// a stopped vehicle cannot cross a cell.
pub fn build_trajectory_set(
    limits: &KinematicLimits,
    grid: &CellGrid,
    maneuver_cells: usize,
    step: f64,
    lane_width: f64,
) -> Result<TrajectorySet> {
    if !(step > 0.0) {
        return Err(Error::InvalidParam { field: "velocity_grid_step", reason: "must be > 0".into() });
    }
    if !(lane_width > 0.0) {
        return Err(Error::InvalidParam { field: "lane_width", reason: "must be > 0".into() });
    }
    let first = if limits.v_min > 0.0 { limits.v_min } else { step.min(limits.v_max) };
    let mut entries = Vec::new();
    let mut k = 0usize;
    loop {
        let v = first + k as f64 * step;
        if v > limits.v_max + 1e-9 {
            break;
        }
        entries.push(LaneChangeTrajectory::constant_speed(
            v.min(limits.v_max),
            maneuver_cells,
            grid.cell_length,
            lane_width,
        )?);
        k += 1;
    }
    if entries.last().map(|e| e.initial_velocity) < Some(limits.v_max - 1e-9) {
        entries.push(LaneChangeTrajectory::constant_speed(limits.v_max, maneuver_cells, grid.cell_length, lane_width)?);
    }
    TrajectorySet::new(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellTime {
    pub lane: Lane,
    pub cell: usize,
    pub arrival: f64,
    pub departure: f64,
}

/// Arrival and departure times of every cell occupied during a maneuver
/// starting at `t_start`. `route` holds the maneuver steps, each paired with
/// its destination lane. Origin entries come first, then destination
/// entries in the same order.
pub fn lane_change_cell_times(
    t_start: f64,
    trajectory: &LaneChangeTrajectory,
    route: &[RouteStep],
) -> Result<Vec<CellTime>> {
    if route.len() != trajectory.cells() {
        return Err(Error::TrajectoryMismatch { route: route.len(), trajectory: trajectory.cells() });
    }
    let mut origin = Vec::with_capacity(route.len());
    let mut dest = Vec::with_capacity(route.len());
    let mut t = t_start;
    for (step, d) in route.iter().zip(&trajectory.durations) {
        let paired = step.paired.ok_or_else(|| {
            Error::InvalidGeometry(format!("maneuver cell {} on lane {} has no paired lane", step.cell, step.lane))
        })?;
        origin.push(CellTime { lane: step.lane, cell: step.cell, arrival: t, departure: t + d });
        dest.push(CellTime { lane: paired, cell: step.cell, arrival: t, departure: t + d });
        t += d;
    }
    origin.extend(dest);
    Ok(origin)
}
