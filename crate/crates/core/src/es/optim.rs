//! Ascent optimizers and decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "SGDM")]
    Sgdm,
    #[serde(rename = "Adam")]
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgdm" => Ok(OptimizerKind::Sgdm),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn sgdm(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgdm,
            learning_rate,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            ..Self::sgdm(learning_rate)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OptimizerState {
    Sgdm { velocity: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, t: u64 },
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, dim: usize) -> Self {
        match kind {
            OptimizerKind::Sgdm => OptimizerState::Sgdm {
                velocity: vec![0.0; dim],
            },
            OptimizerKind::Adam => OptimizerState::Adam {
                m: vec![0.0; dim],
                v: vec![0.0; dim],
                t: 0,
            },
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            OptimizerState::Sgdm { .. } => OptimizerKind::Sgdm,
            OptimizerState::Adam { .. } => OptimizerKind::Adam,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            OptimizerState::Sgdm { velocity } => velocity.len(),
            OptimizerState::Adam { m, .. } => m.len(),
        }
    }

    /// One ascent step along `update`.
    ///
    /// SGDM: `v = momentum * v + g; theta += lr * v`.
    /// Adam: bias-corrected moments, `theta += lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, cfg: &OptimizerConfig, theta: &mut [f64], update: &[f64]) -> Result<()> {
        check_len("optimizer update", theta.len(), update.len())?;
        check_len("optimizer state", theta.len(), self.dim())?;
        if self.kind() != cfg.kind {
            return Err(Error::Config(format!(
                "optimizer state is {:?} but config asks for {:?}",
                self.kind(),
                cfg.kind
            )));
        }
        let lr = cfg.learning_rate;
        match self {
            OptimizerState::Sgdm { velocity } => {
                for ((th, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(update) {
                    *v = cfg.momentum * *v + g;
                    *th += lr * *v;
                }
            }
            OptimizerState::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - cfg.beta1.powi(*t as i32);
                let c2 = 1.0 - cfg.beta2.powi(*t as i32);
                for (((th, m), v), g) in theta
                    .iter_mut()
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                    .zip(update)
                {
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *th += lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
                }
            }
        }
        Ok(())
    }
}

/// Multiplies every parameter by `factor`. Applied after the optimizer step,
/// never folded into the gradient.
pub fn decay_weights(theta: &mut [f64], factor: f64) -> Result<()> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::Config(format!(
            "weight decay factor must lie in (0, 1], got {factor}"
        )));
    }
    if factor != 1.0 {
        theta.iter_mut().for_each(|t| *t *= factor);
    }
    Ok(())
}
