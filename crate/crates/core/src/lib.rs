//! Simulator for electric-vehicle charging stations.
//!
//! A station is a tree of capacity-limited nodes with charging ports at the
//! leaves. Cars arrive stochastically, charge along a piecewise-linear curve and
//! leave according to their user's preference. The agent chooses one discrete
//! current adjustment per port (plus an optional station battery) each step and
//! earns the profit of the interval minus weighted penalties.
//!
//! - [`topology`]: station trees, capacity checks and enforcement, presets.
//! - [`vehicle`]: charging curves and per-step integration.
//! - [`exogenous`]: prices, arrival rates, car and user samplers.
//! - [`env`]: the single-environment MDP.
//! - [`batch`]: many environments stepped in lockstep across threads.
//! - [`harness`]: baseline policies, evaluation, benchmarking and export.

// Validation uses `!(x >= 0.0)` style checks so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod config;
pub mod env;
pub mod exogenous;
pub mod harness;
pub mod rng;
pub mod topology;
pub mod vehicle;

use thiserror::Error;

pub use batch::BatchEnv;
pub use config::RunConfig;
pub use env::{ActionVector, ChargingEnv, EnvConfig, EnvError, EnvState, StepInfo};
pub use exogenous::{DataError, Datasets};
pub use topology::{StationTree, TopologyError};

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Vehicle(#[from] vehicle::VehicleError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
