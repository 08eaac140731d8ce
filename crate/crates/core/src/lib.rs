//! Evolution-strategy training for feedforward and decision-transformer
//! policies, with a seed-only master/worker runtime.

pub mod cli;
pub mod dist;
pub mod dt;
pub mod envs;
pub mod error;
pub mod es;
pub mod nn;
pub mod pretrain;

pub use error::{Error, Result};
