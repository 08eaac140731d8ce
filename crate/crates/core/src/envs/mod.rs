//! Deterministic toy environments and the rollout harness that turns a
//! policy into a fitness value.

mod corridor;
mod point;

pub use corridor::{KeyCorridor, CORRIDOR_CELLS, CORRIDOR_HORIZON, CORRIDOR_REWARD};
pub use point::{clip_unit_norm, PointTarget, POINT_HORIZON, POINT_STEP};

use serde::{Deserialize, Serialize};

use crate::dt::{init_context, EpisodeContext, RtgConfig};
use crate::error::{check_len, Error, Result};
use crate::es::{EvalJob, Evaluation, Evaluator, VbnStats};
use crate::nn::{unflatten, PolicySpec, PolicyView};

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Episodic environment. Fully determined by the reset seed and the actions.
pub trait Env: Send {
    fn name(&self) -> &'static str;
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    /// Upper bound on episode length.
    fn horizon(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    /// Errors with [`Error::Contract`] before the first reset or after `done`.
    fn step(&mut self, action: &[f64]) -> Result<EnvStep>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvKind {
    #[serde(rename = "point_target")]
    PointTarget,
    #[serde(rename = "key_corridor")]
    KeyCorridor,
}

impl EnvKind {
    pub fn make(self) -> Box<dyn Env> {
        match self {
            EnvKind::PointTarget => Box::new(PointTarget::new()),
            EnvKind::KeyCorridor => Box::new(KeyCorridor::new()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::PointTarget => "point_target",
            EnvKind::KeyCorridor => "key_corridor",
        }
    }

    pub fn obs_dim(self) -> usize {
        2
    }

    pub fn act_dim(self) -> usize {
        match self {
            EnvKind::PointTarget => 2,
            EnvKind::KeyCorridor => 1,
        }
    }

    pub fn horizon(self) -> usize {
        match self {
            EnvKind::PointTarget => POINT_HORIZON,
            EnvKind::KeyCorridor => CORRIDOR_HORIZON,
        }
    }

    /// Return-to-go scale used unless the configuration overrides it.
    pub fn default_rtg_scale(self) -> f64 {
        match self {
            EnvKind::PointTarget => 1000.0,
            EnvKind::KeyCorridor => 1.0,
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point_target" => Ok(EnvKind::PointTarget),
            "key_corridor" => Ok(EnvKind::KeyCorridor),
            other => Err(Error::Config(format!("unknown env {other:?}"))),
        }
    }
}

/// Something that picks actions within one episode at a time.
pub trait Policy {
    fn begin_episode(&mut self) -> Result<()>;
    fn act(&mut self, obs: &[f64]) -> Result<Vec<f64>>;
    /// Called after every environment step with the observation the action
    /// was chosen from.
    fn observe(&mut self, _obs: &[f64], _action: &[f64], _reward: f64) {}
}

/// A parameterized network acting through [`crate::nn`] or [`crate::dt`].
/// Observations are normalized with `vbn` before the network sees them.
pub struct NeuralPolicy<'a> {
    view: PolicyView<'a>,
    vbn: &'a VbnStats,
    rtg: RtgConfig,
    context_len: usize,
    ctx: Option<EpisodeContext>,
    normalized: Vec<f64>,
}

impl<'a> NeuralPolicy<'a> {
    pub fn new(
        params: &'a [f64],
        spec: &PolicySpec,
        vbn: &'a VbnStats,
        rtg: RtgConfig,
    ) -> Result<Self> {
        check_len("vbn statistics", spec.obs_dim, vbn.dim())?;
        rtg.validate()?;
        Ok(NeuralPolicy {
            view: unflatten(params, spec)?,
            vbn,
            rtg,
            context_len: spec.dt().map_or(0, |d| d.context_len),
            ctx: None,
            normalized: Vec::new(),
        })
    }
}

impl Policy for NeuralPolicy<'_> {
    fn begin_episode(&mut self) -> Result<()> {
        self.ctx = match self.view {
            PolicyView::Transformer(_) => Some(init_context(self.rtg, self.context_len)?),
            PolicyView::Feedforward(_) => None,
        };
        Ok(())
    }

    fn act(&mut self, obs: &[f64]) -> Result<Vec<f64>> {
        self.normalized = self.vbn.normalize(obs)?;
        match &self.view {
            PolicyView::Feedforward(m) => Ok(m.forward(&self.normalized)),
            PolicyView::Transformer(v) => {
                let ctx = self
                    .ctx
                    .as_ref()
                    .ok_or_else(|| Error::Contract("act before begin_episode".into()))?;
                v.act(ctx, &self.normalized)
            }
        }
    }

    fn observe(&mut self, _obs: &[f64], action: &[f64], reward: f64) {
        if let Some(ctx) = self.ctx.as_mut() {
            ctx.record_step(&self.normalized, action, reward);
        }
    }
}

/// Always outputs zeros.
#[derive(Debug, Clone)]
pub struct ZeroPolicy(pub usize);

impl Policy for ZeroPolicy {
    fn begin_episode(&mut self) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, _obs: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; self.0])
    }
}

/// PointTarget teacher: velocity equal to minus the offset from the goal.
#[derive(Debug, Clone, Default)]
pub struct ProportionalController;

impl Policy for ProportionalController {
    fn begin_episode(&mut self) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(clip_unit_norm(&obs.iter().map(|x| -x).collect::<Vec<_>>()))
    }
}

/// KeyCorridor optimum: remembers the first observation's signal and walks
/// towards the end it names.
#[derive(Debug, Clone, Default)]
pub struct SignalFollower {
    signal: Option<f64>,
}

impl Policy for SignalFollower {
    fn begin_episode(&mut self) -> Result<()> {
        self.signal = None;
        Ok(())
    }

    fn act(&mut self, obs: &[f64]) -> Result<Vec<f64>> {
        let s = *self.signal.get_or_insert(obs[1]);
        Ok(vec![s])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Rollout {
    /// Sum of unscaled rewards.
    pub ret: f64,
    pub steps: usize,
    /// Raw observations the actions were chosen from, when captured.
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

/// Plays one episode from `seed`.
pub fn rollout(
    policy: &mut dyn Policy,
    env: &mut dyn Env,
    seed: u64,
    capture: bool,
) -> Result<Rollout> {
    policy.begin_episode()?;
    let mut obs = env.reset(seed);
    let mut out = Rollout::default();
    loop {
        let action = policy.act(&obs)?;
        check_len("action", env.act_dim(), action.len())?;
        let step = env.step(&action)?;
        policy.observe(&obs, &action, step.reward);
        out.ret += step.reward;
        out.steps += 1;
        if capture {
            out.observations.push(std::mem::take(&mut obs));
            out.actions.push(action);
            out.rewards.push(step.reward);
        }
        obs = step.obs;
        if step.done {
            return Ok(out);
        }
    }
}

/// Mean return over one episode per seed.
pub fn evaluate(policy: &mut dyn Policy, env: &mut dyn Env, seeds: &[u64]) -> Result<f64> {
    Ok(returns(policy, env, seeds)?.iter().sum::<f64>() / seeds.len() as f64)
}

/// Return of each episode, in seed order.
pub fn returns(policy: &mut dyn Policy, env: &mut dyn Env, seeds: &[u64]) -> Result<Vec<f64>> {
    if seeds.is_empty() {
        return Err(Error::Contract("evaluation needs at least one seed".into()));
    }
    seeds
        .iter()
        .map(|&s| rollout(policy, env, s, false).map(|r| r.ret))
        .collect()
}

/// Fitness of a parameter vector: mean return over the job's episode seeds.
pub struct EnvEvaluator {
    env: Box<dyn Env>,
    spec: PolicySpec,
    rtg: RtgConfig,
}

impl EnvEvaluator {
    pub fn new(kind: EnvKind, spec: PolicySpec, rtg: RtgConfig) -> Result<Self> {
        spec.validate()?;
        check_len("policy observation size", kind.obs_dim(), spec.obs_dim)?;
        check_len("policy action size", kind.act_dim(), spec.act_dim)?;
        rtg.validate()?;
        Ok(EnvEvaluator {
            env: kind.make(),
            spec,
            rtg,
        })
    }
}

impl Evaluator for EnvEvaluator {
    fn evaluate(
        &mut self,
        params: &[f64],
        vbn: &VbnStats,
        job: &EvalJob<'_>,
    ) -> Result<Evaluation> {
        let mut policy = NeuralPolicy::new(params, &self.spec, vbn, self.rtg)?;
        let mut total = 0.0;
        let mut steps = 0u64;
        let mut seen = Vec::new();
        for &seed in job.episode_seeds {
            let r = rollout(&mut policy, self.env.as_mut(), seed, job.collect_obs)?;
            total += r.ret;
            steps += r.steps as u64;
            seen.extend(r.observations);
        }
        let vbn = if job.collect_obs {
            Some(VbnStats::from_batch(self.spec.obs_dim, &seen)?)
        } else {
            None
        };
        Ok(Evaluation {
            fitness: total / job.episode_seeds.len().max(1) as f64,
            steps,
            vbn,
        })
    }
}
