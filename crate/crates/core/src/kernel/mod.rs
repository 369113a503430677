//! Discrete-event simulation of a scenario.

mod queue;
pub mod rng;
mod run;
mod scenario;

pub use queue::{EventQueue, Payload, SimEvent};
pub use run::{
    initial_holdings, next_wake_delay, run, FamilyInfo, RunError, RunResult, RunStats, Snapshot,
    StopReason,
};
pub use scenario::{ConfigError, FamilyConfig, RunLength, ScenarioConfig, StrategyConfig};
