//! Discrete-event LoRaWAN uplink simulator with per-device bandit learners
//! that choose spreading factor, sub-channel and transmit power.

pub mod bandit;
pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod phy;
pub mod seed;
pub mod sim;

pub use config::SimConfig;
pub use error::{ConfigError, Error, Result};
