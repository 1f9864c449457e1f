//! Core of a grid-world predator-prey ecosystem.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. It contains the toroidal world and its tick mechanics, the three
//! birth regimes, the recurrent dueling Q-network with hand-derived
//! gradients, the virtual-window trainer, and the time-series analyses used
//! to characterise population dynamics. IO, configuration files and the
//! command line live in the companion `predprey-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod analysis;
pub mod learning;
mod math;
pub mod policy;
pub mod reproduction;
pub mod rng;
pub mod world;

pub use learning::{commit_real_step, TrainConfig, Trainer};
pub use policy::{Brains, NetworkConfig, PolicyKind, QNetworkParams, RecurrentState};
pub use reproduction::{Genome, ReproConfig};
pub use world::{
    Action, AgentId, AgentState, Observation, PopulationRecord, Pos, Scenario, Species,
    StepOutcome, World, WorldConfig,
};
