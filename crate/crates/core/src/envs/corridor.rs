use super::{Env, EnvStep};
use crate::error::{check_len, Error, Result};

pub const CORRIDOR_CELLS: usize = 9;
pub const CORRIDOR_HORIZON: usize = 12;
pub const CORRIDOR_REWARD: f64 = 10.0;
const START: usize = CORRIDOR_CELLS / 2;

/// One-dimensional corridor whose rewarding end is announced only once.
///
/// The agent starts in the middle cell. The first observation carries the
/// signal (`+1` for an even seed, `-1` for an odd one); every later
/// observation shows `0` in its place. The first step is a cue step: the
/// action is ignored and the agent stays put. Afterwards the agent moves one
/// cell in the direction of the sign of its action. Reaching the right end
/// pays `+10` if the signal was `+1`, and the left end pays `+10` if it was
/// `-1`; the wrong end pays `-10`. Running out of time pays nothing.
///
/// Observation: `[(cell - 4) / 4, signal_or_zero]`.
#[derive(Debug, Clone, Default)]
pub struct KeyCorridor {
    cell: usize,
    signal: f64,
    t: usize,
    done: bool,
    started: bool,
}

impl KeyCorridor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn signal(&self) -> f64 {
        self.signal
    }

    fn observation(&self, show_signal: bool) -> Vec<f64> {
        let centre = START as f64;
        vec![
            (self.cell as f64 - centre) / centre,
            if show_signal { self.signal } else { 0.0 },
        ]
    }
}

impl Env for KeyCorridor {
    fn name(&self) -> &'static str {
        "key_corridor"
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn act_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        CORRIDOR_HORIZON
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.cell = START;
        self.signal = if seed.is_multiple_of(2) { 1.0 } else { -1.0 };
        self.t = 0;
        self.done = false;
        self.started = true;
        self.observation(true)
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep> {
        if !self.started || self.done {
            return Err(Error::Contract(
                "step called on a finished or unstarted episode".into(),
            ));
        }
        check_len("action", 1, action.len())?;
        if self.t > 0 {
            let a = action[0];
            if a > 0.0 {
                self.cell += 1;
            } else if a < 0.0 {
                self.cell -= 1;
            }
        }
        self.t += 1;
        let mut reward = 0.0;
        if self.cell == 0 || self.cell == CORRIDOR_CELLS - 1 {
            let right = self.cell == CORRIDOR_CELLS - 1;
            let correct = right == (self.signal > 0.0);
            reward = if correct {
                CORRIDOR_REWARD
            } else {
                -CORRIDOR_REWARD
            };
            self.done = true;
        } else if self.t >= CORRIDOR_HORIZON {
            self.done = true;
        }
        Ok(EnvStep {
            obs: self.observation(false),
            reward,
            done: self.done,
        })
    }
}
