use thiserror::Error;

use crate::road::Lane;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("route through blocked cell {cell} on lane {lane}")]
    InfeasibleRoute { lane: Lane, cell: usize },

    #[error("cell unreachable with v = {v} m/s, u = {u} m/s^2")]
    UnreachableCell { v: f64, u: f64 },

    #[error("route has {route} maneuver cells but trajectory has {trajectory}")]
    TrajectoryMismatch { route: usize, trajectory: usize },

    #[error("vehicle {vehicle} cannot follow its schedule: {reason}")]
    Infeasible { vehicle: u32, reason: String },

    #[error("invalid passing order: {0}")]
    InvalidOrder(String),

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error("safety violation at t = {time:.2} s, lane {lane} cell {cell}, vehicles {vehicles:?}: {detail}")]
    SafetyViolation { time: f64, lane: Lane, cell: usize, vehicles: Vec<u32>, detail: String },

    #[error("oracle guard: {leaves} leaves exceed the limit of {limit}")]
    LeafLimit { leaves: u64, limit: u64 },
}
