//! Simulation and learning core for interference-limited in-factory subnetworks.
//!
//! A set of mobile subnetworks share one data channel. Each access point (AP)
//! drains a buffer of downlink command packets and talks to a central
//! controller over an error-free signaling plane: it may report channel state
//! (CSI) or ask for a power reallocation (PAR), and the controller answers with
//! power-coefficient grants. On top of the slotted environment sit the
//! hand-crafted benchmark protocols and a multi-agent PPO learner that has to
//! discover its own signaling protocol.
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature. All IO lives in the companion `subnet-sim` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod error;
mod math;

pub mod baselines;
pub mod controlplane;
pub mod env;
pub mod mappo;
pub mod metrics;
pub mod radio;
pub mod seed;
pub mod world;

pub use error::{Error, Result};
