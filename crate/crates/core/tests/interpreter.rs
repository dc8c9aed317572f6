mod common;

use std::collections::BTreeMap;

use coopdrive::dynamics::{cell_traversal_time, Profile, Segment};
use coopdrive::interpreter::{advance_unplanned, fit_constant_accelerations, Interpreter, Plan, Target};
use coopdrive::ordering::{successors, PassingOrder};
use coopdrive::snapshot::{feasible_snapshot, SnapshotParams};
use coopdrive::{fifo_order, interpret, plan, SearchParams, VehicleId, VehicleState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

#[test]
fn fitted_profiles_hit_scheduled_arrivals_when_integrated() {
    let scenario = single_lane(40);
    let limits = *scenario.limits();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    for _ in 0..300 {
        // Targets are the crossing times of a random motion within the
        // limits, so a feasible fit exists.
        let v0 = rng.random_range(5.0..20.0);
        let x0 = rng.random_range(0.0..5.0);
        let mut motion = Profile::new(Segment::new(0.0, x0, v0, rng.random_range(0.8 * limits.u_min..0.8 * limits.u_max), 20.0));
        for k in 1..4 {
            let t = 1.5 * k as f64;
            let (x, v) = motion.state_at(t);
            let a = rng.random_range(0.8 * limits.u_min..0.8 * limits.u_max);
            motion.push(Segment::new(t, x, v, a, if a > 0.0 { 20.0 } else { 3.0 }));
        }
        let cells = rng.random_range(2..12);
        let targets: Vec<Target> = (1..=cells)
            .map(|c| {
                let position = 5.0 * c as f64;
                Target { position, time: motion.time_at(position).unwrap() }
            })
            .collect();
        let Ok(fit) = fit_constant_accelerations(VehicleId(1), (0.0, x0, v0), &targets, &limits) else { continue };
        let profile = Profile { segments: fit.segments.clone() };
        let marks: Vec<f64> = targets.iter().map(|t| t.position).collect();
        let reached = integrate_crossings(&profile, 0.0, x0, v0, &marks, 1e-4);
        for ((target, &arrival), &integrated) in targets.iter().zip(&fit.arrivals).zip(&reached) {
            assert!(arrival >= target.time - 1e-9, "arrives early at {}", target.position);
            assert!((integrated - arrival).abs() < 1e-6, "integrated {integrated} vs scheduled {arrival}");
        }
        checked += 1;
    }
    assert!(checked > 200, "only {checked} feasible fits");
}

/// Bisection on the acceleration that covers `d` in `time` from speed `v`,
/// without caps.
fn bisect_accel(v: f64, d: f64, time: f64) -> f64 {
    let (mut lo, mut hi) = (-100.0, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if v * time + 0.5 * mid * time * time < d {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn unconstrained_targets_give_one_acceleration() {
    let limits = *single_lane(40).limits();
    let targets: Vec<Target> = (1..=6)
        .map(|c| {
            let x = 5.0 * c as f64;
            Target { position: x, time: cell_traversal_time(10.0, limits.u_max, x).unwrap() }
        })
        .collect();
    let fit = fit_constant_accelerations(VehicleId(1), (0.0, 0.0, 10.0), &targets, &limits).unwrap();
    assert!(fit.segments.iter().all(|s| (s.accel - limits.u_max).abs() < 1e-9));
    for (t, a) in targets.iter().zip(&fit.arrivals) {
        assert!((t.time - a).abs() < 1e-9);
    }
}

#[test]
fn one_binding_far_cell_gives_single_deceleration() {
    let limits = *single_lane(40).limits();
    let targets = vec![
        Target { position: 5.0, time: 0.3 },
        Target { position: 10.0, time: 0.6 },
        Target { position: 30.0, time: 2.5 },
    ];
    let fit = fit_constant_accelerations(VehicleId(1), (0.0, 0.0, 15.0), &targets, &limits).unwrap();
    let expected = bisect_accel(15.0, 30.0, 2.5);
    assert!(expected < 0.0);
    assert_eq!(fit.segments.len(), 1);
    assert!((fit.segments[0].accel - expected).abs() < 1e-9);
    assert!((fit.arrivals[2] - 2.5).abs() < 1e-9);
}

#[test]
fn stricter_near_cell_comes_first() {
    let limits = *single_lane(40).limits();
    let targets = vec![Target { position: 10.0, time: 0.72 }, Target { position: 30.0, time: 2.4 }];
    let fit = fit_constant_accelerations(VehicleId(1), (0.0, 0.0, 15.0), &targets, &limits).unwrap();
    let a1 = bisect_accel(15.0, 10.0, 0.72);
    let v1 = 15.0 + a1 * 0.72;
    let a2 = bisect_accel(v1, 20.0, 2.4 - 0.72);
    assert!(a1 < a2);
    assert_eq!(fit.segments.len(), 2);
    assert!((fit.segments[0].accel - a1).abs() < 1e-9);
    assert!((fit.segments[1].accel - a2).abs() < 1e-9);
}

#[test]
fn fit_below_braking_limit_is_infeasible() {
    let limits = *single_lane(40).limits();
    let targets = vec![Target { position: 5.0, time: 3.0 }];
    assert!(fit_constant_accelerations(VehicleId(1), (0.0, 0.0, 20.0), &targets, &limits).is_err());
}

#[test]
fn lone_vehicle_is_undelayed() {
    let scenario = default_scenario();
    let v = cruising(&scenario, 1, 2, 30.0, 15.0);
    let schedule = interpret(&fifo_order(&[v.clone()], &scenario), &[v], &scenario, 0.0).unwrap();
    assert_eq!(schedule.objective, 0.0);
    let p = &schedule.plans[0];
    assert_eq!(p.t_last, p.t_min_last);
}

/// Earliest arrival of a vehicle cruising at `v` from `x`, at every cell
/// boundary ahead of it.
fn cruise_arrivals(x: f64, v: f64, cells: usize) -> BTreeMap<usize, f64> {
    let first = (x / 5.0).floor() as usize + 1;
    (first..=cells).map(|c| (c, (5.0 * c as f64 - x) / v)).collect()
}

#[test]
fn follower_two_tenths_behind_is_pushed_a_full_headway() {
    let scenario = stiff_single_lane(40);
    let leader = cruising(&scenario, 1, 0, 52.0, 20.0);
    let follower = cruising(&scenario, 2, 0, 48.0, 20.0);
    let vehicles = vec![leader, follower];
    let schedule = interpret(&fifo_order(&vehicles, &scenario), &vehicles, &scenario, 0.0).unwrap();

    // Queue recurrence: the follower reaches each cell no earlier than one
    // headway after the leader.
    let lead = cruise_arrivals(52.0, 20.0, 40);
    let own = cruise_arrivals(48.0, 20.0, 40);
    let last = *own.keys().last().unwrap();
    let recurrence = own[&last].max(lead[&last] + 1.0);
    let expected = recurrence - own[&last];
    assert!((expected - 0.8).abs() < 1e-12);
    assert!((schedule.objective - expected).abs() < 1e-3, "J = {}", schedule.objective);
}

#[test]
fn single_lane_fifo_matches_queue_recurrence() {
    let scenario = stiff_single_lane(40);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mut x = rng.random_range(150.0..190.0);
        let mut vehicles = Vec::new();
        for id in 1..=5 {
            let v = rng.random_range(12.0..20.0);
            vehicles.push(cruising(&scenario, id, 0, x, v));
            x -= rng.random_range(12.0..30.0);
            if x < 0.0 {
                break;
            }
        }
        let schedule = interpret(&fifo_order(&vehicles, &scenario), &vehicles, &scenario, 0.0).unwrap();

        // Time-stepped queue: every vehicle's earliest arrival at each cell
        // is the later of its own free arrival and the predecessor's plus
        // one headway.
        let fastest = |s: &VehicleState| -> BTreeMap<usize, f64> {
            let first = (s.position / 5.0).floor() as usize + 1;
            let mut t = 0.0;
            let mut x = s.position;
            let mut out = BTreeMap::new();
            let dt = 1e-5;
            for c in first..=40 {
                let b = 5.0 * c as f64;
                while x < b {
                    x += 20.0 * dt;
                    t += dt;
                }
                out.insert(c, t - (x - b) / 20.0);
            }
            out
        };
        let mut previous: Option<BTreeMap<usize, f64>> = None;
        let mut expected = 0.0;
        for v in &vehicles {
            let free = fastest(v);
            let mut actual = free.clone();
            if let Some(prev) = &previous {
                let mut shift: f64 = 0.0;
                for (c, t) in actual.iter_mut() {
                    if let Some(p) = prev.get(c) {
                        shift = shift.max(p + 1.0 - *t);
                    }
                    *t += shift.max(0.0);
                }
            }
            expected += actual[&40] - free[&40];
            previous = Some(actual);
        }
        assert!((schedule.objective - expected).abs() < 1e-2, "J = {} vs {}", schedule.objective, expected);
    }
}

fn assert_cell_exclusive(plans: &[Plan], headway: f64) {
    let mut by_cell: BTreeMap<(usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
    for (rank, p) in plans.iter().enumerate() {
        for c in &p.cells {
            by_cell.entry((c.lane, c.cell)).or_default().push((rank, c.arrival));
        }
    }
    for ((lane, cell), list) in by_cell {
        for (i, &(ra, ta)) in list.iter().enumerate() {
            for &(rb, tb) in &list[i + 1..] {
                if ra == rb {
                    continue;
                }
                let (early, late) = if ra < rb { (ta, tb) } else { (tb, ta) };
                assert!(late - early >= headway - 1e-9, "lane {lane} cell {cell}: {early} then {late}");
            }
        }
    }
}

fn random_order(vehicles: &[VehicleState], scenario: &coopdrive::Scenario, rng: &mut ChaCha8Rng) -> PassingOrder {
    let mut order = PassingOrder::new();
    loop {
        let kids = successors(&order, vehicles, scenario);
        if kids.is_empty() {
            return order;
        }
        let (id, action) = kids[rng.random_range(0..kids.len())];
        order.push(id, action);
    }
}

#[test]
fn every_interpreted_order_is_cell_exclusive() {
    let scenario = default_scenario();
    let headway = scenario.safety().headway;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut interpreted = 0;
    for seed in 0..60 {
        let vehicles = feasible_snapshot(&scenario, &SnapshotParams::default(), seed);
        for _ in 0..5 {
            let order = random_order(&vehicles, &scenario, &mut rng);
            let Ok(schedule) = interpret(&order, &vehicles, &scenario, 0.0) else { continue };
            interpreted += 1;
            assert_cell_exclusive(&schedule.plans, headway);
            for p in &schedule.plans {
                assert!(p.t_last >= p.t_min_last - 1e-9);
                assert!(p.delay >= 0.0);
                let mut per_lane: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
                for c in &p.cells {
                    per_lane.entry(c.lane).or_default().push((c.cell, c.arrival));
                }
                for cells in per_lane.values() {
                    for w in cells.windows(2) {
                        assert!(w[1].0 > w[0].0 && w[1].1 > w[0].1, "arrivals not increasing along the route");
                    }
                }
            }
        }
    }
    assert!(interpreted > 150, "only {interpreted} orders interpreted");
}

#[test]
fn extending_a_prefix_keeps_committed_plans() {
    let scenario = default_scenario();
    for seed in 0..20 {
        let vehicles = feasible_snapshot(&scenario, &SnapshotParams::default(), seed);
        let order = fifo_order(&vehicles, &scenario);
        let interpreter = Interpreter::new(&scenario, &vehicles, 0.0).unwrap();
        let full = interpreter.interpret(&order).unwrap();
        let half = order.len() / 2;
        let mut partial = interpreter.root();
        interpreter.extend_all(&mut partial, &order.entries[..half]).unwrap();
        let prefix_plans = partial.plans.clone();
        interpreter.extend_all(&mut partial, &order.entries[half..]).unwrap();
        assert_eq!(&partial.plans[..half], &prefix_plans[..]);
        assert_eq!(partial.plans, full.plans);
    }
}

#[test]
fn swapping_vehicles_without_shared_cells_keeps_objective() {
    let scenario = default_scenario();
    let a = cruising(&scenario, 1, 2, 120.0, 18.0);
    let b = cruising(&scenario, 2, 1, 20.0, 14.0).with_action(coopdrive::VehicleAction::Straight);
    let vehicles = vec![a, b];
    let ab: PassingOrder = "1 2".parse().unwrap();
    let ba: PassingOrder = "2 1".parse().unwrap();
    let j_ab = interpret(&ab, &vehicles, &scenario, 0.0).unwrap().objective;
    let j_ba = interpret(&ba, &vehicles, &scenario, 0.0).unwrap().objective;
    assert_eq!(j_ab, j_ba);
}

/// Closed-lane vehicle right at the taper with two merge-lane vehicles
/// alongside, and more traffic behind on all lanes.
fn case_study(scenario: &coopdrive::Scenario) -> Vec<VehicleState> {
    vec![
        cruising(scenario, 1, 0, 95.0, 14.0),
        cruising(scenario, 2, 1, 97.0, 15.0),
        cruising(scenario, 3, 1, 75.0, 15.0),
        cruising(scenario, 4, 2, 80.0, 16.0),
        cruising(scenario, 5, 0, 65.0, 15.0),
        cruising(scenario, 6, 1, 45.0, 15.0),
        cruising(scenario, 7, 0, 35.0, 15.0),
    ]
}

#[test]
fn case_study_search_beats_fifo() {
    let scenario = default_scenario();
    let vehicles = case_study(&scenario);
    let fifo = interpret(&fifo_order(&vehicles, &scenario), &vehicles, &scenario, 0.0).unwrap();
    let params = SearchParams { time_budget: None, ..SearchParams::default() };
    let out = plan(&vehicles, &scenario, 0.0, &params, None).unwrap();
    assert!(out.objective() < fifo.objective, "plan {} vs FIFO {}", out.objective(), fifo.objective);
}

#[test]
fn advance_follows_plans_and_keeps_unplanned_gap() {
    let scenario = single_lane(40);
    let limits = *scenario.limits();
    let safety = *scenario.safety();
    let leader = cruising(&scenario, 1, 0, 60.0, 15.0);
    let follower = cruising(&scenario, 2, 0, 30.0, 15.0);
    let solo = [leader.clone()];
    let schedule = interpret(&fifo_order(&solo, &scenario), &solo, &scenario, 0.0).unwrap();
    let mut vehicles = vec![leader, follower];
    let mut t = 0.0;
    for _ in 0..40 {
        let plans = [schedule.plan(VehicleId(1)), None];
        vehicles = advance_unplanned(&vehicles, &plans, t, 0.1, &scenario);
        t += 0.1;
        let (x, v) = schedule.plans[0].state_at(t);
        assert_eq!((vehicles[0].position, vehicles[0].velocity), (x, v));
        let gap = vehicles[0].position - vehicles[1].position;
        let need = coopdrive::dynamics::safety_gap(vehicles[1].velocity, vehicles[0].velocity, &limits, safety.time_headway);
        assert!(gap >= need - 1e-9, "gap {gap} below {need} at t = {t}");
    }
    assert!(advance_unplanned(&[], &[], 0.0, 0.1, &scenario).is_empty());
}
