//! Fused sub-team curriculum training: source-stage IPPO on sub-tasks, team
//! composition, and DoE-modulated PPO fine-tuning on the target task.

pub mod chainball;
pub mod doe;
pub mod env;
pub mod error;
pub mod funcapprox;
pub mod harness;
pub mod medoe;
pub mod overcooked;
pub mod ppo;
pub mod rng;

pub use error::{Error, Result};
