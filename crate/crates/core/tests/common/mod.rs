#![allow(dead_code)]

use coopdrive::dynamics::{KinematicLimits, Profile};
use coopdrive::ordering::default_action;
use coopdrive::scenario::{InterpreterParams, Scenario, ScenarioGeometry};
use coopdrive::VehicleState;

pub fn default_scenario() -> Scenario {
    Scenario::new(ScenarioGeometry::default(), InterpreterParams::default()).unwrap()
}

pub fn single_lane(cells: usize) -> Scenario {
    Scenario::new(ScenarioGeometry::single_lane(cells), InterpreterParams::default()).unwrap()
}

/// Single lane with accelerations large enough that speed changes are
/// practically instantaneous.
pub fn stiff_single_lane(cells: usize) -> Scenario {
    let mut geometry = ScenarioGeometry::single_lane(cells);
    geometry.limits = KinematicLimits {
        u_min: -1e6,
        u_max: 1e6,
        a_min_brake: 1e6,
        a_max_brake: 1e6,
        creep_speed: 1e-3,
        ..geometry.limits
    };
    Scenario::new(geometry, InterpreterParams::default()).unwrap()
}

/// Vehicle that has been cruising at `v` since it entered the zone.
pub fn cruising(scenario: &Scenario, id: u32, lane: usize, x: f64, v: f64) -> VehicleState {
    let grid = &scenario.grid;
    let mut s = VehicleState::new(id, lane, x, v).with_entry_time(-x / v);
    s.cell_entry_time = -(x - grid.boundary(grid.cell_of(x))) / v;
    s.action = default_action(&s, scenario);
    s
}

/// Integrates the profile's acceleration signal with a fixed step, splitting
/// steps where the acceleration switches, and returns the time each
/// position in `marks` is first reached.
pub fn integrate_crossings(profile: &Profile, t0: f64, x0: f64, v0: f64, marks: &[f64], dt: f64) -> Vec<f64> {
    let mut switches = profile.breakpoints();
    switches.sort_by(f64::total_cmp);
    let (mut t, mut x, mut v) = (t0, x0, v0);
    let mut out = Vec::new();
    let mut next = 0;
    let mut guard = 0u64;
    while next < marks.len() {
        let mut h = dt;
        if let Some(&s) = switches.iter().find(|&&s| s > t + 1e-12 && s < t + dt) {
            h = s - t;
        }
        let a = profile.accel_at(t + 0.5 * h);
        let x1 = x + v * h + 0.5 * a * h * h;
        while next < marks.len() && marks[next] <= x1 {
            let d = marks[next] - x;
            let tau = if a.abs() < 1e-12 { d / v } else { (-v + (v * v + 2.0 * a * d).max(0.0).sqrt()) / a };
            out.push(t + tau);
            next += 1;
        }
        x = x1;
        v += a * h;
        t += h;
        guard += 1;
        assert!(guard < 50_000_000, "integration does not terminate");
    }
    out
}
