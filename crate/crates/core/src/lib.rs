//! Wireless MEC simulator for play-to-earn AR gaming and multi-agent PPO
//! trainers for joint UE-MBS allocation and uplink power control.
//!
//! The environment runs one downlink phase (a discrete allocation agent
//! assigns UEs to base stations) and one uplink phase (a continuous agent
//! picks transmit powers) per iteration over NOMA channels with Rician
//! fading. Trainers: shared two-head critic with loss sharing (`mals`),
//! independent agents (`ida`), a centralized critic on a common reward
//! (`ctde`) and a uniform random policy.

pub mod channel;
pub mod config;
pub mod env;
pub mod harness;
pub mod nn;
pub mod reward;
pub mod rl;
pub mod rng;

pub use config::{default_config, load_config, ConfigSet, NetworkConfig, TrainConfig};
pub use rng::RngStream;
