//! Bi-level cooperative driving for a lane drop at a work zone.
//!
//! The upper level searches over passing orders with Monte Carlo tree
//! search ([`mcts`]); the lower level turns each order into conflict-free
//! cell arrival times and speed profiles ([`interpreter`]). [`simulation`]
//! drives both inside a seeded traffic simulation and compares them with a
//! first-in-first-out baseline.

pub mod config;
pub mod dynamics;
pub mod enumerate;
pub mod error;
pub mod interpreter;
pub mod mcts;
pub mod ordering;
pub mod road;
pub mod scenario;
pub mod simulation;
pub mod snapshot;

pub use config::Config;
pub use dynamics::{VehicleId, VehicleState};
pub use error::{Error, Result};
pub use interpreter::{interpret, Schedule};
pub use mcts::{plan, SearchOutcome, SearchParams};
pub use ordering::{fifo_order, PassingOrder, VehicleAction};
pub use scenario::{Scenario, ScenarioGeometry};
pub use simulation::{run, Metrics, SimulationParams, Strategy};
