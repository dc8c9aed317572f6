//! Scenario configuration and the resolved runtime bundle shared by the
//! interpreter, the search and the simulator.

use serde::{Deserialize, Serialize};

use crate::dynamics::{build_trajectory_set, CarFollowingModel, KinematicLimits, SafetyParams, TrajectorySet};
use crate::error::{Error, Result};
use crate::road::{build_grid, CellGrid, WorkZone};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioGeometry {
    pub lane_count: usize,
    /// Meters.
    pub control_zone_length: f64,
    /// Meters.
    pub cell_length: f64,
    pub work_zone: Option<WorkZone>,
    /// Cells spanned by one lane change.
    pub maneuver_cells: usize,
    /// Meters between lane centers.
    pub lane_width: f64,
    pub limits: KinematicLimits,
    pub safety: SafetyParams,
}

impl Default for ScenarioGeometry {
    /// Three lanes, 200 m of 5 m cells, the last 50 m of lane 0 closed.
    fn default() -> Self {
        Self {
            lane_count: 3,
            control_zone_length: 200.0,
            cell_length: 5.0,
            work_zone: Some(WorkZone { lane: 0, start_cell: 30, end_cell: 39 }),
            maneuver_cells: 3,
            lane_width: 3.5,
            limits: KinematicLimits::default(),
            safety: SafetyParams::default(),
        }
    }
}

impl ScenarioGeometry {
    pub fn single_lane(cells: usize) -> Self {
        Self {
            lane_count: 1,
            control_zone_length: cells as f64 * 5.0,
            work_zone: None,
            ..Self::default()
        }
    }
}

/// Tuning of the passing-order interpreter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpreterParams {
    /// Spacing of the lane-change trajectory set's velocity grid (m/s).
    pub velocity_grid_step: f64,
    /// Cost added to the objective for each lane change that has to be
    /// postponed to a later planning cycle (s).
    pub deferral_penalty: f64,
}

impl Default for InterpreterParams {
    fn default() -> Self {
        Self { velocity_grid_step: 1.0, deferral_penalty: 5.0 }
    }
}

/// Everything the planner needs about the road, resolved once.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub geometry: ScenarioGeometry,
    pub grid: CellGrid,
    pub trajectories: TrajectorySet,
    pub interpreter: InterpreterParams,
    pub car_following: CarFollowingModel,
}

impl Scenario {
    pub fn new(geometry: ScenarioGeometry, interpreter: InterpreterParams) -> Result<Self> {
        geometry.limits.validate()?;
        geometry.safety.validate()?;
        let grid = build_grid(&geometry)?;
        if geometry.maneuver_cells == 0 {
            return Err(Error::InvalidParam { field: "maneuver_cells", reason: "must be >= 1".into() });
        }
        if grid.work_zone.is_some() && grid.last_maneuver_start(geometry.maneuver_cells).is_none() {
            return Err(Error::InvalidParam {
                field: "maneuver_cells",
                reason: "maneuver does not fit upstream of the work zone".into(),
            });
        }
        if !(interpreter.deferral_penalty >= 0.0) {
            return Err(Error::InvalidParam { field: "deferral_penalty", reason: "must be >= 0".into() });
        }
        let trajectories = build_trajectory_set(
            &geometry.limits,
            &grid,
            geometry.maneuver_cells,
            interpreter.velocity_grid_step,
            geometry.lane_width,
        )?;
        Ok(Self { geometry, grid, trajectories, interpreter, car_following: CarFollowingModel::default() })
    }

    pub fn from_geometry(geometry: ScenarioGeometry) -> Result<Self> {
        Self::new(geometry, InterpreterParams::default())
    }

    pub fn with_car_following(mut self, model: CarFollowingModel) -> Self {
        self.car_following = model;
        self
    }

    pub fn limits(&self) -> &KinematicLimits {
        &self.geometry.limits
    }

    pub fn safety(&self) -> &SafetyParams {
        &self.geometry.safety
    }

    pub fn maneuver_cells(&self) -> usize {
        self.geometry.maneuver_cells
    }

    /// Time an unhindered vehicle entering at `v0` needs to cross the whole
    /// control zone, accelerating at `u_max` up to `v_max`.
    pub fn free_flow_time(&self, v0: f64) -> f64 {
        let l = self.limits();
        crate::dynamics::Segment::new(0.0, 0.0, v0, l.u_max, l.v_max)
            .time_at(self.grid.length())
            .unwrap_or(f64::INFINITY)
    }
}
