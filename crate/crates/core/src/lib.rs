//! Courier dispatching laboratory.
//!
//! Generates stochastic pickup-request days over a grid city, simulates a fleet
//! of couriers under pluggable dispatchers, and trains a decentralised
//! multi-agent PPO dispatcher with shared parameters.

pub mod baselines;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod marl;
pub mod neural;
pub mod routing;
pub mod scenario;
pub mod seeds;
pub mod sim;
pub mod state;

pub use domain::{
    ActionSpec, Cell, Courier, CourierStatus, GridType, GridWorld, Point, Request, RequestStatus,
    NUM_ACTIONS, PATROL_OPTIONS,
};
pub use baselines::{Ghav, Ghep, Mbm, RandomPolicy, Scoring};
pub use error::{Error, Result};
pub use routing::{plan_route, validate_route, ProfitEstimate, Route};
pub use scenario::{build_instance, generate_instance, ProblemInstance, ScenarioConfig};
pub use sim::{run_episode, Dispatcher, EpisodeResult, Simulation, Snapshot};
