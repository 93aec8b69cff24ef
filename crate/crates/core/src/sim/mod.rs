//! Discrete-time surveillance world and experiment runner.

mod experiment;
pub mod rng;
pub mod stream;
pub mod world;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use experiment::{
    average_fraction, run_experiment, sensor_step, ExperimentOutcome, ExperimentSummary,
    PlanTraceRecord, RunParams, SensorState, SimError, StepLogRecord, StepMetrics,
};
pub use stream::{SpawnEvent, SpawnGenerator, SpawnStream, StreamError};
pub use world::{detect, Detection, Population, TargetState, World};

/// How sensors choose their next cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// T-step planning with priority coordination.
    #[serde(rename = "t-step-coordinated")]
    Coordinated,
    /// T-step planning, every sensor for itself.
    #[serde(rename = "t-step-uncoordinated")]
    Uncoordinated,
    #[serde(rename = "stationary")]
    Stationary,
    #[serde(rename = "random-walk")]
    RandomWalk,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Coordinated,
        Strategy::Uncoordinated,
        Strategy::Stationary,
        Strategy::RandomWalk,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::Coordinated => "t-step-coordinated",
            Strategy::Uncoordinated => "t-step-uncoordinated",
            Strategy::Stationary => "stationary",
            Strategy::RandomWalk => "random-walk",
        }
    }

    pub fn plans(self) -> bool {
        matches!(self, Strategy::Coordinated | Strategy::Uncoordinated)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.label() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Strategy::ALL.iter().map(|x| x.label()).collect();
                format!(
                    "unknown strategy `{s}` (expected one of {})",
                    known.join(", ")
                )
            })
    }
}

/// When T-step strategies rerun the planning round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplanCadence {
    /// Execute all T planned steps, then replan.
    EveryHorizon,
    /// Replan every step and execute only the first move.
    EveryStep,
}

impl ReplanCadence {
    pub fn label(self) -> &'static str {
        match self {
            ReplanCadence::EveryHorizon => "every-horizon",
            ReplanCadence::EveryStep => "every-step",
        }
    }
}

impl FromStr for ReplanCadence {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "every-horizon" => Ok(ReplanCadence::EveryHorizon),
            "every-step" => Ok(ReplanCadence::EveryStep),
            _ => Err(format!(
                "unknown replan cadence `{s}` (expected every-horizon or every-step)"
            )),
        }
    }
}
