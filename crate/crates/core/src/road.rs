//! Cell-discretized road: lanes of equal-length cells, a work zone that closes
//! part of one lane, and the per-cell occupancy schedule used to keep every
//! cell to one vehicle at a time.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::ScenarioGeometry;

/// Lane index, 0-based. Lane 0 is the outermost lane.
pub type Lane = usize;

/// A closed span of cells `[start_cell, end_cell]` on one lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkZone {
    pub lane: Lane,
    pub start_cell: usize,
    pub end_cell: usize,
}

/// What the lane rules allow a vehicle in a given lane to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneRole {
    /// Closed downstream by the work zone; must change lanes.
    Closed,
    /// Receives the closed lane's traffic; may stay or move one lane further.
    Merge,
    /// Everything else; always straight.
    Through,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    pub lane_count: usize,
    pub cells_per_lane: usize,
    /// Cell length in meters.
    pub cell_length: f64,
    pub work_zone: Option<WorkZone>,
    pub blocked: BTreeSet<(Lane, usize)>,
    /// Metadata only; safety is enforced uniformly through cell occupancy.
    pub conflict_zone: BTreeSet<(Lane, usize)>,
}

pub fn build_grid(geometry: &ScenarioGeometry) -> Result<CellGrid> {
    if geometry.lane_count == 0 {
        return Err(Error::InvalidGeometry("lane_count must be at least 1".into()));
    }
    if !(geometry.cell_length > 0.0) || !geometry.cell_length.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "cell_length must be positive, got {}",
            geometry.cell_length
        )));
    }
    if !(geometry.control_zone_length > 0.0) || !geometry.control_zone_length.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "control_zone_length must be positive, got {}",
            geometry.control_zone_length
        )));
    }
    let ratio = geometry.control_zone_length / geometry.cell_length;
    let cells = ratio.round();
    if cells < 1.0 || (ratio - cells).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidGeometry(format!(
            "control_zone_length {} is not a whole number of {} m cells",
            geometry.control_zone_length, geometry.cell_length
        )));
    }
    let cells_per_lane = cells as usize;

    let mut blocked = BTreeSet::new();
    let mut conflict_zone = BTreeSet::new();
    if let Some(zone) = geometry.work_zone {
        if zone.lane >= geometry.lane_count {
            return Err(Error::InvalidGeometry(format!(
                "work zone lane {} outside {} lanes",
                zone.lane, geometry.lane_count
            )));
        }
        if zone.start_cell > zone.end_cell || zone.end_cell >= cells_per_lane {
            return Err(Error::InvalidGeometry(format!(
                "work zone cells {}..={} outside 0..{}",
                zone.start_cell, zone.end_cell, cells_per_lane
            )));
        }
        if geometry.lane_count < 2 {
            return Err(Error::InvalidGeometry(
                "a work zone needs at least one open neighbouring lane".into(),
            ));
        }
        for cell in zone.start_cell..=zone.end_cell {
            blocked.insert((zone.lane, cell));
            for lane in 0..geometry.lane_count {
                conflict_zone.insert((lane, cell));
            }
        }
    }

    Ok(CellGrid {
        lane_count: geometry.lane_count,
        cells_per_lane,
        cell_length: geometry.cell_length,
        work_zone: geometry.work_zone,
        blocked,
        conflict_zone,
    })
}

impl CellGrid {
    pub fn length(&self) -> f64 {
        self.cells_per_lane as f64 * self.cell_length
    }

    /// Cell containing longitudinal position `x`, clamped to the grid.
    pub fn cell_of(&self, x: f64) -> usize {
        if x <= 0.0 {
            return 0;
        }
        ((x / self.cell_length).floor() as usize).min(self.cells_per_lane - 1)
    }

    /// Position of the upstream edge of `cell`.
    pub fn boundary(&self, cell: usize) -> f64 {
        cell as f64 * self.cell_length
    }

    pub fn is_blocked(&self, lane: Lane, cell: usize) -> bool {
        self.blocked.contains(&(lane, cell))
    }

    pub fn lane_role(&self, lane: Lane) -> LaneRole {
        match self.work_zone {
            Some(zone) if lane == zone.lane => LaneRole::Closed,
            Some(zone) if Some(lane) == self.merge_lane_of(zone.lane) => LaneRole::Merge,
            _ => LaneRole::Through,
        }
    }

    fn merge_lane_of(&self, closed: Lane) -> Option<Lane> {
        if closed + 1 < self.lane_count {
            Some(closed + 1)
        } else {
            closed.checked_sub(1)
        }
    }

    /// Destination lane for a change-lane action from `lane`, if one exists.
    pub fn change_target(&self, lane: Lane) -> Option<Lane> {
        let zone = self.work_zone?;
        let merge = self.merge_lane_of(zone.lane)?;
        if lane == zone.lane {
            return Some(merge);
        }
        if lane == merge {
            // Move away from the closed lane, never into it.
            return if merge > zone.lane {
                (merge + 1 < self.lane_count).then_some(merge + 1)
            } else {
                merge.checked_sub(1)
            };
        }
        None
    }

    /// Last cell at which a maneuver of `maneuver_cells` may start so that it
    /// is finished before the critical conflict zone (or the grid end).
    pub fn last_maneuver_start(&self, maneuver_cells: usize) -> Option<usize> {
        let limit = self.work_zone.map_or(self.cells_per_lane, |z| z.start_cell);
        limit.checked_sub(maneuver_cells)
    }
}

/// One longitudinal cell on a route. A lane-changing vehicle occupies the
/// paired destination cell at the same time as the origin cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteStep {
    pub cell: usize,
    pub lane: Lane,
    pub paired: Option<Lane>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteKind {
    Straight,
    ChangeLane {
        to: Lane,
        start_cell: usize,
        cells: usize,
    },
}

/// Cells a vehicle at `position` on `lane` will enter, in traversal order.
pub fn route_cells(grid: &CellGrid, lane: Lane, position: f64, kind: RouteKind) -> Result<Vec<RouteStep>> {
    if lane >= grid.lane_count || position < 0.0 || position >= grid.length() {
        return Err(Error::InvalidGeometry(format!(
            "vehicle at lane {lane}, x = {position} is outside the grid"
        )));
    }
    let first = grid.cell_of(position) + 1;
    let mut steps = Vec::with_capacity(grid.cells_per_lane.saturating_sub(first));
    match kind {
        RouteKind::Straight => {
            for cell in first..grid.cells_per_lane {
                if grid.is_blocked(lane, cell) {
                    return Err(Error::InfeasibleRoute { lane, cell });
                }
                steps.push(RouteStep { cell, lane, paired: None });
            }
        }
        RouteKind::ChangeLane { to, start_cell, cells } => {
            if to >= grid.lane_count || to == lane {
                return Err(Error::InvalidGeometry(format!("bad destination lane {to}")));
            }
            if cells == 0 || start_cell < first || start_cell + cells > grid.cells_per_lane {
                return Err(Error::InvalidGeometry(format!(
                    "maneuver cells {start_cell}..{} do not fit ahead of cell {}",
                    start_cell + cells,
                    first - 1
                )));
            }
            for cell in first..grid.cells_per_lane {
                let step = if cell < start_cell {
                    RouteStep { cell, lane, paired: None }
                } else if cell < start_cell + cells {
                    RouteStep { cell, lane, paired: Some(to) }
                } else {
                    RouteStep { cell, lane: to, paired: None }
                };
                for l in std::iter::once(step.lane).chain(step.paired) {
                    if grid.is_blocked(l, cell) {
                        return Err(Error::InfeasibleRoute { lane: l, cell });
                    }
                }
                steps.push(step);
            }
        }
    }
    Ok(steps)
}

/// Per-cell release times: the latest arrival time at which each cell has
/// been claimed so far. Starts at `-inf`; `+inf` marks a cell held
/// indefinitely (a vehicle stopped in it).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancySchedule {
    cells_per_lane: usize,
    release: Vec<f64>,
}

impl OccupancySchedule {
    pub fn new(grid: &CellGrid) -> Self {
        Self {
            cells_per_lane: grid.cells_per_lane,
            release: vec![f64::NEG_INFINITY; grid.lane_count * grid.cells_per_lane],
        }
    }

    #[inline]
    fn idx(&self, lane: Lane, cell: usize) -> usize {
        lane * self.cells_per_lane + cell
    }

    #[inline]
    pub fn last_arrival(&self, lane: Lane, cell: usize) -> f64 {
        self.release[self.idx(lane, cell)]
    }

    /// Earliest admissible arrival for a lower-priority vehicle.
    #[inline]
    pub fn earliest_entry(&self, lane: Lane, cell: usize, headway: f64) -> f64 {
        self.last_arrival(lane, cell) + headway
    }

    pub fn claim(&mut self, lane: Lane, cell: usize, arrival: f64) {
        let i = self.idx(lane, cell);
        if arrival > self.release[i] {
            self.release[i] = arrival;
        }
    }

    pub fn hold(&mut self, lane: Lane, cell: usize) {
        let i = self.idx(lane, cell);
        self.release[i] = f64::INFINITY;
    }
}
