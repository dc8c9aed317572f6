//! Seeded random traffic snapshots: a handful of vehicles spread over the
//! control zone upstream of the maneuver area, spaced so that every
//! same-lane pair already respects both the time headway and the
//! braking-distance gap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{safety_gap, VehicleState};
use crate::ordering::default_action;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotParams {
    pub vehicles: usize,
    /// Speed range of the snapshot (m/s).
    pub min_speed: f64,
    pub max_speed: f64,
    /// Extra spacing on top of the required gap (m).
    pub max_slack: f64,
}

impl Default for SnapshotParams {
    fn default() -> Self {
        Self { vehicles: 10, min_speed: 12.0, max_speed: 20.0, max_slack: 12.0 }
    }
}

/// Deterministic snapshot for `seed`. Fewer vehicles than requested are
/// returned only if they cannot be fitted upstream of the maneuver area.
pub fn random_snapshot(scenario: &Scenario, params: &SnapshotParams, seed: u64) -> Vec<VehicleState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = &scenario.grid;
    let limits = scenario.limits();
    let safety = scenario.safety();
    let upstream_limit = grid
        .last_maneuver_start(scenario.maneuver_cells())
        .map_or(grid.length(), |c| grid.boundary(c))
        - 1.0;

    let mut per_lane = vec![0usize; grid.lane_count];
    for _ in 0..params.vehicles {
        per_lane[rng.random_range(0..grid.lane_count)] += 1;
    }

    let mut vehicles = Vec::with_capacity(params.vehicles);
    for (lane, &count) in per_lane.iter().enumerate() {
        let mut prev: Option<(f64, f64)> = None;
        for _ in 0..count {
            let v = rng.random_range(params.min_speed..=params.max_speed).min(limits.v_max);
            let slack = rng.random_range(0.0..=params.max_slack);
            let x = match prev {
                None => rng.random_range(0.5 * upstream_limit..upstream_limit),
                Some((xp, vp)) => {
                    let need = safety_gap(v, vp, limits, safety.time_headway).max(v * safety.headway * 1.2);
                    xp - need - slack - grid.cell_length
                }
            };
            if x < 0.0 {
                break;
            }
            vehicles.push((lane, x, v));
            prev = Some((x, v));
        }
    }

    // Ids follow an approximate entry order: farther downstream entered earlier.
    vehicles.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut out = Vec::with_capacity(vehicles.len());
    for (k, &(lane, x, v)) in vehicles.iter().enumerate() {
        let jitter = rng.random_range(0.9..1.1);
        let mut state = VehicleState::new(k as u32 + 1, lane, x, v).with_entry_time(-x / v * jitter);
        state.cell_entry_time = -(x - grid.boundary(grid.cell_of(x))) / v;
        state.action = default_action(&state, scenario);
        out.push(state);
    }
    out
}

/// Like [`random_snapshot`], but redraws until the FIFO order of the
/// snapshot can be interpreted. A snapshot taken from a running simulation
/// always has a feasible schedule to continue from; purely random
/// placements sometimes do not (e.g. a closed-lane vehicle level with a
/// merge-lane vehicle right at the last maneuver start).
pub fn feasible_snapshot(scenario: &Scenario, params: &SnapshotParams, seed: u64) -> Vec<VehicleState> {
    for attempt in 0u64.. {
        let sub_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(attempt);
        let vehicles = random_snapshot(scenario, params, sub_seed);
        let order = crate::ordering::fifo_order(&vehicles, scenario);
        if crate::interpreter::interpret(&order, &vehicles, scenario, 0.0).is_ok() {
            return vehicles;
        }
    }
    unreachable!("an empty snapshot is always feasible")
}
