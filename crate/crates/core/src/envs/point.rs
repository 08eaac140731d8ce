use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Env, EnvStep};
use crate::error::{check_len, Error, Result};

/// Distance covered per step at full speed.
pub const POINT_STEP: f64 = 0.2;
pub const POINT_HORIZON: usize = 50;

/// A point on the plane steered towards the origin.
///
/// The start lies on the unit circle at an angle drawn from the seed. Actions
/// are velocities clipped to unit Euclidean norm and scaled by
/// [`POINT_STEP`]. The reward after each move is minus the distance to the
/// goal, and the observation is the offset from the goal.
#[derive(Debug, Clone)]
pub struct PointTarget {
    position: [f64; 2],
    goal: [f64; 2],
    t: usize,
    done: bool,
    started: bool,
}

impl Default for PointTarget {
    fn default() -> Self {
        Self::new()
    }
}

impl PointTarget {
    pub fn new() -> Self {
        PointTarget {
            position: [0.0; 2],
            goal: [0.0; 2],
            t: 0,
            done: false,
            started: false,
        }
    }

    /// Starts an episode from an explicit position instead of a seed.
    pub fn reset_to(&mut self, position: [f64; 2]) -> Vec<f64> {
        self.position = position;
        self.t = 0;
        self.done = false;
        self.started = true;
        self.observation()
    }

    pub fn position(&self) -> [f64; 2] {
        self.position
    }

    fn observation(&self) -> Vec<f64> {
        vec![
            self.position[0] - self.goal[0],
            self.position[1] - self.goal[1],
        ]
    }
}

/// Scales `a` down to unit Euclidean norm when it is longer.
pub fn clip_unit_norm(a: &[f64]) -> Vec<f64> {
    let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 1.0 {
        a.iter().map(|x| x / n).collect()
    } else if n.is_nan() {
        vec![0.0; a.len()]
    } else {
        a.to_vec()
    }
}

impl Env for PointTarget {
    fn name(&self) -> &'static str {
        "point_target"
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn act_dim(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        POINT_HORIZON
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let angle = ChaCha8Rng::seed_from_u64(seed).random_range(0.0..std::f64::consts::TAU);
        self.reset_to([angle.cos(), angle.sin()])
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep> {
        if !self.started || self.done {
            return Err(Error::Contract(
                "step called on a finished or unstarted episode".into(),
            ));
        }
        check_len("action", 2, action.len())?;
        let v = clip_unit_norm(action);
        self.position[0] += POINT_STEP * v[0];
        self.position[1] += POINT_STEP * v[1];
        self.t += 1;
        self.done = self.t >= POINT_HORIZON;
        let d = ((self.position[0] - self.goal[0]).powi(2)
            + (self.position[1] - self.goal[1]).powi(2))
        .sqrt();
        Ok(EnvStep {
            obs: self.observation(),
            reward: -d,
            done: self.done,
        })
    }
}
