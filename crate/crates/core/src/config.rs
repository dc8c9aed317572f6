//! Run configuration: everything a simulation or planning run depends on,
//! with defaults for all of it.

use serde::{Deserialize, Serialize};

use crate::dynamics::CarFollowingModel;
use crate::error::Result;
use crate::mcts::SearchParams;
use crate::scenario::{InterpreterParams, Scenario, ScenarioGeometry};
use crate::simulation::SimulationParams;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioGeometry,
    pub interpreter: InterpreterParams,
    pub search: SearchParams,
    pub simulation: SimulationParams,
    pub car_following: CarFollowingModel,
}

impl Config {
    /// Checks every section and builds the scenario.
    pub fn scenario(&self) -> Result<Scenario> {
        let scenario = Scenario::new(self.scenario.clone(), self.interpreter)?.with_car_following(self.car_following);
        self.search.validate()?;
        self.simulation.validate(scenario.grid.lane_count)?;
        Ok(scenario)
    }
}
