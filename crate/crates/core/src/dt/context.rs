use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target return handed to the model at the start of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RtgConfig {
    /// Unscaled target return.
    pub initial_target: f64,
    /// Returns-to-go are divided by this before reaching the model.
    pub scale: f64,
}

impl RtgConfig {
    pub fn new(initial_target: f64, scale: f64) -> Result<Self> {
        let cfg = RtgConfig {
            initial_target,
            scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale > 0.0 && self.scale.is_finite() && self.initial_target.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "return-to-go scale must be positive and finite, got {}",
                self.scale
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    /// Scaled return-to-go at this timestep.
    pub rtg: f64,
    pub obs: Vec<f64>,
    pub act: Vec<f64>,
    pub timestep: usize,
}

/// Rolling window of the most recent `capacity` timesteps of one episode.
#[derive(Debug, Clone)]
pub struct EpisodeContext {
    capacity: usize,
    triplets: VecDeque<Triplet>,
    /// Unscaled remaining return for the current timestep.
    remaining: f64,
    scale: f64,
    timestep: usize,
}

/// Fresh context for a new episode holding at most `capacity` past timesteps.
pub fn init_context(cfg: RtgConfig, capacity: usize) -> Result<EpisodeContext> {
    cfg.validate()?;
    if capacity == 0 {
        return Err(Error::Config("context length must be at least 1".into()));
    }
    Ok(EpisodeContext {
        capacity,
        triplets: VecDeque::with_capacity(capacity + 1),
        remaining: cfg.initial_target,
        scale: cfg.scale,
        timestep: 0,
    })
}

impl EpisodeContext {
    /// Scaled return-to-go for the current (not yet recorded) timestep.
    pub fn current_rtg(&self) -> f64 {
        self.remaining / self.scale
    }

    pub fn timestep(&self) -> usize {
        self.timestep
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// Oldest first.
    pub fn triplets(&self) -> impl DoubleEndedIterator<Item = &Triplet> + ExactSizeIterator {
        self.triplets.iter()
    }

    /// Stores the finished timestep and moves on: the next return-to-go is the
    /// current one minus the reward just received.
    pub fn record_step(&mut self, obs: &[f64], action: &[f64], reward: f64) {
        self.push(obs, action);
        self.remaining -= reward;
    }

    /// Like [`record_step`](Self::record_step), but sets the next scaled
    /// return-to-go directly. Used when replaying logged trajectories.
    pub fn record_step_with_rtg(&mut self, obs: &[f64], action: &[f64], next_rtg: f64) {
        self.push(obs, action);
        self.remaining = next_rtg * self.scale;
    }

    fn push(&mut self, obs: &[f64], action: &[f64]) {
        if self.triplets.len() == self.capacity {
            self.triplets.pop_front();
        }
        self.triplets.push_back(Triplet {
            rtg: self.current_rtg(),
            obs: obs.to_vec(),
            act: action.to_vec(),
            timestep: self.timestep,
        });
        self.timestep += 1;
    }
}
