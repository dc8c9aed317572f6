mod common;

use std::collections::BTreeMap;

use coopdrive::simulation::{
    arrival_times, check_cell_exclusivity, improvement_ratio, run, sweep, vehicle_delay, SimulationParams, Strategy,
    SweepGrid,
};
use coopdrive::{Error, SearchParams, VehicleId};

use common::*;

fn quick(rate: f64, duration: f64) -> SimulationParams {
    SimulationParams { rate, duration, ..Default::default() }
}

fn search() -> SearchParams {
    SearchParams { time_budget: None, ..SearchParams::default() }
}

#[test]
fn delay_is_excess_passing_time() {
    assert_eq!(vehicle_delay(12.0, 12.0).unwrap(), 0.0);
    assert_eq!(vehicle_delay(13.5, 12.0).unwrap(), 1.5);
    assert_eq!(vehicle_delay(12.0 - 1e-12, 12.0).unwrap(), 0.0);
    assert!(vehicle_delay(11.0, 12.0).is_err());
}

#[test]
fn improvement_ratio_values() {
    // Objective pairs reported for 1200 and 2400 veh/h.
    assert!((improvement_ratio(0.7972, 0.5981).unwrap() - 0.249749).abs() < 1e-6);
    assert!((improvement_ratio(6.8925, 3.3484).unwrap() - 0.514197).abs() < 1e-6);
    assert_eq!(improvement_ratio(3.0, 3.0).unwrap(), 0.0);
    assert_eq!(improvement_ratio(0.0, 0.0).unwrap(), 0.0);
    assert!(improvement_ratio(0.0, 1.0).is_err());
    assert!(improvement_ratio(2.0, 3.0).unwrap() < 0.0);
}

#[test]
fn arrival_gaps_have_the_requested_mean() {
    for seed in 0..3 {
        for (lane, rate) in [(0, 360.0), (1, 1200.0), (2, 2400.0)] {
            let mean = 3600.0 / rate;
            let times = arrival_times(rate, mean * 10_500.0, seed, lane);
            assert!(times.len() > 10_000);
            let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).take(10_000).collect();
            let empirical = gaps.iter().sum::<f64>() / gaps.len() as f64;
            assert!((empirical / mean - 1.0).abs() < 0.05, "mean gap {empirical} vs {mean}");
        }
    }
    assert_eq!(arrival_times(1200.0, 100.0, 9, 1), arrival_times(1200.0, 100.0, 9, 1));
    assert_ne!(arrival_times(1200.0, 100.0, 9, 0), arrival_times(1200.0, 100.0, 9, 1));
    assert!(arrival_times(0.0, 100.0, 9, 0).is_empty());
}

#[test]
fn empty_demand_gives_empty_metrics() {
    let scenario = default_scenario();
    for strategy in [Strategy::Fifo, Strategy::BiLevel] {
        let m = run(&scenario, strategy, &quick(0.0, 60.0), &search(), 1).unwrap().metrics;
        assert_eq!((m.throughput, m.spawned, m.avg_delay), (0, 0, 0.0));
    }
}

#[test]
fn isolated_vehicles_pass_undelayed() {
    let scenario = default_scenario();
    let rate = 200.0;
    let seed = (0..200)
        .find(|&s| {
            let t = arrival_times(rate, 300.0, s, 2);
            t.len() >= 3 && t.windows(2).all(|w| w[1] - w[0] > 12.0)
        })
        .expect("a sparse arrival stream");
    let sim = SimulationParams { lane_weights: Some(vec![0.0, 0.0, 1.0]), ..quick(rate, 300.0) };
    let m = run(&scenario, Strategy::Fifo, &sim, &search(), seed).unwrap().metrics;
    assert!(m.throughput >= 2);
    for (id, d) in &m.delays {
        assert!(*d < 1e-9, "vehicle {id} delayed {d} s");
    }
}

#[test]
fn runs_conserve_vehicles_and_pair_arrivals() {
    let scenario = default_scenario();
    let fifo = run(&scenario, Strategy::Fifo, &quick(1800.0, 120.0), &search(), 4).unwrap().metrics;
    let bi = run(&scenario, Strategy::BiLevel, &quick(1800.0, 120.0), &search(), 4).unwrap().metrics;
    assert_eq!(fifo.spawned, bi.spawned);
    for m in [&fifo, &bi] {
        assert_eq!(m.spawned, m.throughput + m.in_zone + m.queued);
        assert_eq!(m.delays.len(), m.throughput);
        assert!(m.delays.iter().all(|(_, d)| *d >= 0.0));
    }
    assert!(bi.avg_delay <= fifo.avg_delay);
}

#[test]
fn runs_are_reproducible() {
    let scenario = default_scenario();
    let a = run(&scenario, Strategy::BiLevel, &quick(1200.0, 90.0), &search(), 2).unwrap().metrics;
    let b = run(&scenario, Strategy::BiLevel, &quick(1200.0, 90.0), &search(), 2).unwrap().metrics;
    assert_eq!(a, b);
}

#[test]
fn close_arrivals_are_reported() {
    let mut arrivals = BTreeMap::new();
    arrivals.insert((1, 4), vec![(10.0, VehicleId(1)), (10.6, VehicleId(2)), (10.6, VehicleId(2))]);
    let err = check_cell_exclusivity(&arrivals, 1.0).unwrap_err();
    match err {
        Error::SafetyViolation { lane, cell, vehicles, .. } => {
            assert_eq!((lane, cell), (1, 4));
            assert_eq!(vehicles, vec![1, 2]);
        }
        other => panic!("unexpected error {other}"),
    }
    arrivals.insert((1, 4), vec![(10.0, VehicleId(1)), (11.0, VehicleId(2))]);
    assert!(check_cell_exclusivity(&arrivals, 1.0).is_ok());
}

#[test]
fn invalid_simulation_parameters_are_named() {
    let scenario = default_scenario();
    let sim = SimulationParams { lane_weights: Some(vec![1.0]), ..quick(100.0, 10.0) };
    let err = run(&scenario, Strategy::Fifo, &sim, &search(), 0).unwrap_err();
    assert!(err.to_string().contains("lane_weights"));
}

#[test]
fn single_cell_sweep_gives_one_row() {
    let scenario = default_scenario();
    let grid = SweepGrid {
        exploration: vec![0.0],
        omega: vec![0.0],
        node_budget: vec![1],
        rates: vec![],
        seeds: 10,
        vehicles: 6,
    };
    let rows = sweep(&grid, &scenario, &SimulationParams::default(), 0).unwrap();
    assert_eq!(rows.len(), 1);
    let row = &rows[0];
    assert_eq!(row.etas.len(), 10);
    assert!(row.etas.iter().all(|e| (0.0..=1.0).contains(e)));
    assert_eq!(rows, sweep(&grid, &scenario, &SimulationParams::default(), 0).unwrap());
}

#[test]
fn sweep_over_rates_pairs_runs() {
    let scenario = default_scenario();
    let grid = SweepGrid {
        exploration: vec![0.2],
        omega: vec![0.2],
        node_budget: vec![50],
        rates: vec![1200.0],
        seeds: 2,
        vehicles: 10,
    };
    let sim = SimulationParams { duration: 60.0, ..Default::default() };
    let rows = sweep(&grid, &scenario, &sim, 0).unwrap();
    assert_eq!(rows[0].rate, Some(1200.0));
    assert!(rows[0].etas.iter().all(|e| *e <= 1.0));
}
