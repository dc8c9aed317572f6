//! Vehicle kinematics: cell traversal timing, the braking-distance safety
//! gap, lane-change trajectories and car-following for vehicles without a
//! schedule.

mod lane_change;
mod profile;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ordering::VehicleAction;
use crate::road::Lane;

pub use lane_change::{build_trajectory_set, lane_change_cell_times, CellTime, LaneChangeTrajectory, TrajectorySet};
pub use profile::{solve_accel, Profile, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleId(pub u32);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinematicLimits {
    pub v_min: f64,
    pub v_max: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Positive magnitudes.
    pub a_min_brake: f64,
    pub a_max_brake: f64,
    /// Lowest speed a slowing vehicle settles at while still moving.
    #[serde(default = "default_creep_speed")]
    pub creep_speed: f64,
}

fn default_creep_speed() -> f64 {
    1.0
}

impl Default for KinematicLimits {
    fn default() -> Self {
        Self {
            v_min: 0.0,
            v_max: 20.0,
            u_min: -4.0,
            u_max: 3.0,
            a_min_brake: 3.0,
            a_max_brake: 6.0,
            creep_speed: default_creep_speed(),
        }
    }
}

impl KinematicLimits {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| Err(Error::InvalidParam { field, reason: reason.into() });
        if !(self.v_min >= 0.0) {
            return bad("v_min", "must be >= 0");
        }
        if !(self.v_max > self.v_min) {
            return bad("v_max", "must exceed v_min");
        }
        if !(self.u_min < 0.0 && self.u_max > 0.0) {
            return bad("u_min", "need u_min < 0 < u_max");
        }
        if !(self.a_min_brake > 0.0 && self.a_min_brake <= self.a_max_brake) {
            return bad("a_min_brake", "need 0 < a_min_brake <= a_max_brake");
        }
        if !(self.creep_speed >= 0.0 && self.creep_speed < self.v_max) {
            return bad("creep_speed", "must lie in [0, v_max)");
        }
        Ok(())
    }

    /// Speed a decelerating segment starting at `v0` may settle at.
    pub(crate) fn floor_for(&self, v0: f64) -> f64 {
        let floor = self.v_min.max(self.creep_speed);
        if v0 > floor {
            floor
        } else {
            self.v_min
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyParams {
    /// Minimum arrival-time gap between two vehicles entering the same cell (s).
    pub headway: f64,
    /// Reaction time headway of the braking-distance gap (s).
    pub time_headway: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self { headway: 1.0, time_headway: 0.5 }
    }
}

impl SafetyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.headway > 0.0) {
            return Err(Error::InvalidParam { field: "headway", reason: "must be > 0".into() });
        }
        if !(self.time_headway > 0.0) {
            return Err(Error::InvalidParam { field: "time_headway", reason: "must be > 0".into() });
        }
        Ok(())
    }
}

/// Lane change already under way; its cells and times are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommittedManeuver {
    pub origin: Lane,
    pub dest: Lane,
    pub start_cell: usize,
    /// Arrival time at each maneuver cell, origin and destination alike.
    pub arrivals: Vec<f64>,
    pub end_time: f64,
    /// Longitudinal motion for the whole maneuver.
    pub motion: Segment,
}

impl CommittedManeuver {
    pub fn end_cell(&self) -> usize {
        self.start_cell + self.arrivals.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    /// Current lane; for a vehicle mid-maneuver, the destination lane.
    pub lane: Lane,
    /// Distance from the control-zone entrance (m).
    pub position: f64,
    pub velocity: f64,
    pub accel: f64,
    /// Time the vehicle entered the control zone.
    pub entry_time: f64,
    /// Time the vehicle entered the cell it is currently in.
    pub cell_entry_time: f64,
    pub planned: bool,
    pub action: VehicleAction,
    pub maneuver: Option<CommittedManeuver>,
    /// Known recent cell entries `(lane, cell, time)` behind the vehicle,
    /// including cells of a finished lane change in the lane it left.
    #[serde(default)]
    pub trail: Vec<(Lane, usize, f64)>,
}

impl VehicleState {
    pub fn new(id: u32, lane: Lane, position: f64, velocity: f64) -> Self {
        Self {
            id: VehicleId(id),
            lane,
            position,
            velocity,
            accel: 0.0,
            entry_time: 0.0,
            cell_entry_time: 0.0,
            planned: false,
            action: VehicleAction::Straight,
            maneuver: None,
            trail: Vec::new(),
        }
    }

    pub fn with_entry_time(mut self, t: f64) -> Self {
        self.entry_time = t;
        self
    }

    pub fn with_action(mut self, action: VehicleAction) -> Self {
        self.action = action;
        self
    }
}

/// Time to cross a cell of length `cell_length` entering at speed `v` with
/// constant acceleration `u`.
pub fn cell_traversal_time(v: f64, u: f64, cell_length: f64) -> Result<f64> {
    if v < 0.0 || cell_length <= 0.0 {
        return Err(Error::UnreachableCell { v, u });
    }
    let disc = v * v + 2.0 * u * cell_length;
    if disc < 0.0 || (v == 0.0 && u <= 0.0) {
        return Err(Error::UnreachableCell { v, u });
    }
    // Rationalized root of 0.5 u t^2 + v t - dp = 0; finite at u = 0 and v = 0.
    Ok(2.0 * cell_length / (v + disc.sqrt()))
}

/// Braking-distance gap follower `i` must keep behind leader `j`. May be
/// negative, in which case any non-negative spacing satisfies it.
pub fn safety_gap(v_i: f64, v_j: f64, limits: &KinematicLimits, time_headway: f64) -> f64 {
    let a_brake = limits.a_min_brake + (v_i / limits.v_max) * (limits.a_max_brake - limits.a_min_brake);
    v_i * time_headway + v_i * v_i / (2.0 * a_brake) - v_j * v_j / (2.0 * limits.a_max_brake)
}

/// Checks every follower/leader pair a lane change into `dest` would create:
/// ego behind its nearest destination-lane leader, the nearest
/// destination-lane follower behind ego, and ego behind its current leader.
pub fn is_lane_change_safe(
    ego: &VehicleState,
    dest: Lane,
    neighbors: &[VehicleState],
    limits: &KinematicLimits,
    safety: &SafetyParams,
) -> bool {
    let nearest = |lane: Lane, ahead: bool| {
        neighbors
            .iter()
            .filter(|n| n.id != ego.id && n.lane == lane)
            .filter(|n| if ahead { n.position >= ego.position } else { n.position < ego.position })
            .min_by(|a, b| {
                let da = (a.position - ego.position).abs();
                let db = (b.position - ego.position).abs();
                da.total_cmp(&db)
            })
    };
    let ok = |follower: &VehicleState, leader: &VehicleState| {
        leader.position - follower.position
            >= safety_gap(follower.velocity, leader.velocity, limits, safety.time_headway)
    };
    if let Some(leader) = nearest(dest, true) {
        if !ok(ego, leader) {
            return false;
        }
    }
    if let Some(follower) = nearest(dest, false) {
        if !ok(follower, ego) {
            return false;
        }
    }
    if let Some(leader) = nearest(ego.lane, true) {
        if !ok(ego, leader) {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum CarFollowingModel {
    /// Proportional control toward the braking-distance gap.
    SafetyGap { gap_gain: f64, speed_gain: f64 },
    /// Newell's lower-order model: trail the leader's path by a wave time
    /// and a jam spacing.
    Newell { wave_time: f64, jam_spacing: f64 },
}

impl Default for CarFollowingModel {
    fn default() -> Self {
        CarFollowingModel::SafetyGap { gap_gain: 0.5, speed_gain: 1.0 }
    }
}

/// Advances an unscheduled vehicle by `dt` behind `leader`.
pub fn car_following_step(
    follower: &VehicleState,
    leader: Option<&VehicleState>,
    dt: f64,
    limits: &KinematicLimits,
    safety: &SafetyParams,
    model: CarFollowingModel,
) -> VehicleState {
    let v = follower.velocity;
    let free = if v < limits.v_max { limits.u_max.min((limits.v_max - v) / dt) } else { 0.0 };
    let accel = match leader {
        None => free,
        Some(l) => {
            let gap = l.position - follower.position;
            let needed = safety_gap(v, l.velocity, limits, safety.time_headway);
            if gap < needed {
                limits.u_min
            } else {
                match model {
                    CarFollowingModel::SafetyGap { gap_gain, speed_gain } => {
                        free.min(gap_gain * (gap - needed) + speed_gain * (l.velocity - v))
                    }
                    CarFollowingModel::Newell { wave_time, jam_spacing } => {
                        let target = l.position + l.velocity * (dt - wave_time) - jam_spacing;
                        free.min(2.0 * ((target - follower.position) / dt - v) / dt)
                    }
                }
            }
        }
    }
    .clamp(limits.u_min, limits.u_max);

    let mut next = follower.clone();
    let v_next = v + accel * dt;
    if v_next < limits.v_min {
        // Stops (or hits the floor) inside the step.
        let t_stop = if accel < 0.0 { ((limits.v_min - v) / accel).clamp(0.0, dt) } else { 0.0 };
        next.position += v * t_stop + 0.5 * accel * t_stop * t_stop + limits.v_min * (dt - t_stop);
        next.velocity = limits.v_min;
    } else {
        let v_next = v_next.min(limits.v_max);
        next.position += 0.5 * (v + v_next) * dt;
        next.velocity = v_next;
    }
    next.accel = accel;
    if let Some(l) = leader {
        if next.position > l.position {
            next.position = follower.position.max(l.position);
            next.velocity = next.velocity.min(l.velocity);
        }
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limits() -> KinematicLimits {
        KinematicLimits::default()
    }

    #[test]
    fn traversal_time_cases() {
        // (sqrt(120) - 10) / 2
        let t = cell_traversal_time(10.0, 2.0, 5.0).unwrap();
        assert!((t - 0.477_225_575_051_661).abs() < 1e-12);
        assert_eq!(cell_traversal_time(10.0, 0.0, 5.0).unwrap(), 0.5);
        assert!((cell_traversal_time(0.0, 2.0, 5.0).unwrap() - 5f64.sqrt()).abs() < 1e-12);
        assert!(matches!(cell_traversal_time(0.0, 0.0, 5.0), Err(Error::UnreachableCell { .. })));
        assert!(matches!(cell_traversal_time(0.0, -1.0, 5.0), Err(Error::UnreachableCell { .. })));
        assert!(cell_traversal_time(2.0, -1.0, 5.0).is_err(), "4 - 10 < 0");
    }

    #[test]
    fn traversal_time_continuous_at_zero_accel() {
        let t = cell_traversal_time(7.0, 1e-8, 5.0).unwrap();
        assert!((t - 5.0 / 7.0).abs() < 1e-9);
    }

    #[test]
    fn safety_gap_cases() {
        let l = limits();
        let f = safety_gap(15.0, 15.0, &l, 0.5);
        assert!((f - (7.5 + 225.0 / 10.5 - 225.0 / 12.0)).abs() < 1e-12);
        assert!((f - 10.178_571_428_571_43).abs() < 1e-9);
        assert_eq!(safety_gap(0.0, 0.0, &l, 0.5), 0.0);
        assert!((safety_gap(0.0, 10.0, &l, 0.5) + 100.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn lane_change_safety() {
        let l = limits();
        let s = SafetyParams::default();
        let ego = VehicleState::new(1, 0, 50.0, 15.0);
        assert!(is_lane_change_safe(&ego, 1, &[], &l, &s));
        let close = VehicleState::new(2, 1, 45.0, 15.0);
        assert!(!is_lane_change_safe(&ego, 1, &[close], &l, &s));
        let far = VehicleState::new(2, 1, 38.0, 15.0);
        assert!(is_lane_change_safe(&ego, 1, &[far], &l, &s));
        // only the nearest follower counts
        let farther = VehicleState::new(3, 1, 10.0, 15.0);
        assert!(is_lane_change_safe(&ego, 1, &[farther, VehicleState::new(2, 1, 38.0, 15.0)], &l, &s));
        let leader = VehicleState::new(4, 1, 55.0, 15.0);
        assert!(!is_lane_change_safe(&ego, 1, &[leader], &l, &s));
    }

    #[test]
    fn car_following_cases() {
        let l = limits();
        let s = SafetyParams::default();
        let m = CarFollowingModel::default();
        let free = VehicleState::new(1, 0, 0.0, 20.0);
        let next = car_following_step(&free, None, 0.1, &l, &s, m);
        assert!((next.position - 2.0).abs() < 1e-12 && next.velocity == 20.0);

        let follower = VehicleState::new(1, 0, 0.0, 10.0);
        let stopped = VehicleState::new(2, 0, 4.0, 0.0);
        assert!(safety_gap(10.0, 0.0, &l, 0.5) > 4.0);
        let next = car_following_step(&follower, Some(&stopped), 0.1, &l, &s, m);
        assert_eq!(next.accel, l.u_min);
        assert!(next.position <= stopped.position);

        let slow = VehicleState::new(1, 0, 0.0, 10.0);
        let far = VehicleState::new(2, 0, 500.0, 20.0);
        let next = car_following_step(&slow, Some(&far), 0.1, &l, &s, m);
        assert_eq!(next.accel, l.u_max);
    }

    #[test]
    fn newell_trails_leader() {
        let l = limits();
        let s = SafetyParams::default();
        let m = CarFollowingModel::Newell { wave_time: 1.0, jam_spacing: 5.0 };
        let mut f = VehicleState::new(1, 0, 0.0, 10.0);
        let mut lead = VehicleState::new(2, 0, 40.0, 10.0);
        for _ in 0..600 {
            f = car_following_step(&f, Some(&lead), 0.1, &l, &s, m);
            lead.position += lead.velocity * 0.1;
            assert!(lead.position - f.position > 0.0);
        }
        assert!((f.velocity - 10.0).abs() < 0.5);
    }

    #[test]
    fn limits_validation() {
        assert!(limits().validate().is_ok());
        let mut bad = limits();
        bad.u_min = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = limits();
        bad.a_min_brake = 7.0;
        assert!(bad.validate().is_err());
        assert!(SafetyParams { headway: 0.0, time_headway: 0.5 }.validate().is_err());
    }
}
