//! Behavior cloning of a scripted teacher, optimized with the same ES loop:
//! the fitness of a parameter vector is the negated imitation error on a
//! fixed dataset of teacher trajectories.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::dist::wire::{Reader, Writer};
use crate::dt::{init_context, EpisodeContext, RtgConfig};
use crate::envs::{Env, Policy};
use crate::error::{check_len, Error, Result};
use crate::es::{EvalJob, Evaluation, Evaluator, VbnStats};
use crate::nn::{unflatten, PolicySpec, PolicyView};

const DATASET_MAGIC: &[u8; 8] = b"ESDTDSET";
const DATASET_VERSION: u32 = 1;

/// Learning rate and noise deviation for the RL phase that follows
/// pretraining. VBN statistics stay frozen in that phase.
pub const FOLLOWUP_LEARNING_RATE: f64 = 0.01;
pub const FOLLOWUP_NOISE_DEVIATION: f64 = 0.01;
pub const FOLLOWUP_VBN_PROBABILITY: f64 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherRecord {
    pub episode: u32,
    pub timestep: u32,
    /// Scaled return-to-go from this step to the end of the episode.
    pub rtg: f64,
    pub reward: f64,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherDataset {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub scale: f64,
    pub source: String,
    pub seeds: Vec<u64>,
    /// Grouped by episode, in time order within each episode.
    pub records: Vec<TeacherRecord>,
}

/// Runs `teacher` once per seed and records every step.
pub fn collect_teacher_dataset(
    teacher: &mut dyn Policy,
    source: &str,
    env: &mut dyn Env,
    seeds: &[u64],
    scale: f64,
) -> Result<TeacherDataset> {
    if seeds.is_empty() {
        return Err(Error::Contract(
            "teacher dataset needs at least one episode".into(),
        ));
    }
    RtgConfig::new(0.0, scale)?;
    let mut records = Vec::new();
    for (ep, &seed) in seeds.iter().enumerate() {
        let r = crate::envs::rollout(teacher, env, seed, true)?;
        let mut to_go = r.rewards.iter().sum::<f64>();
        for (t, ((obs, action), &reward)) in r
            .observations
            .into_iter()
            .zip(r.actions)
            .zip(&r.rewards)
            .enumerate()
        {
            records.push(TeacherRecord {
                episode: ep as u32,
                timestep: t as u32,
                rtg: to_go / scale,
                reward,
                obs,
                action,
            });
            to_go -= reward;
        }
    }
    Ok(TeacherDataset {
        obs_dim: env.obs_dim(),
        act_dim: env.act_dim(),
        scale,
        source: source.to_string(),
        seeds: seeds.to_vec(),
        records,
    })
}

impl TeacherDataset {
    /// Records split at episode boundaries.
    pub fn episodes(&self) -> impl Iterator<Item = &[TeacherRecord]> {
        self.records.chunk_by(|a, b| a.episode == b.episode)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.buf.extend_from_slice(DATASET_MAGIC);
        w.u32(DATASET_VERSION);
        w.u32(self.obs_dim as u32);
        w.u32(self.act_dim as u32);
        w.f64(self.scale);
        w.u64(self.records.len() as u64);
        w.str(&self.source);
        w.len_prefix(self.seeds.len());
        self.seeds.iter().for_each(|&s| w.u64(s));
        for r in &self.records {
            w.u32(r.episode);
            w.u32(r.timestep);
            w.f64(r.rtg);
            w.f64(r.reward);
            r.obs.iter().chain(&r.action).for_each(|&x| w.f64(x));
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(8)? != DATASET_MAGIC {
            return Err(Error::Config("not a teacher dataset file".into()));
        }
        let version = r.u32()?;
        if version != DATASET_VERSION {
            return Err(Error::Config(format!(
                "unsupported dataset version {version}"
            )));
        }
        let obs_dim = r.u32()? as usize;
        let act_dim = r.u32()? as usize;
        let scale = r.f64()?;
        let count = r.u64()? as usize;
        let source = r.str()?;
        let n_seeds = r.count(8)?;
        let seeds = (0..n_seeds).map(|_| r.u64()).collect::<Result<_, _>>()?;
        let per = 24 + 8 * (obs_dim + act_dim);
        if count.saturating_mul(per) > r.remaining() {
            return Err(crate::dist::DecodeError::Truncated {
                needed: count.saturating_mul(per),
                available: r.remaining(),
            }
            .into());
        }
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            records.push(TeacherRecord {
                episode: r.u32()?,
                timestep: r.u32()?,
                rtg: r.f64()?,
                reward: r.f64()?,
                obs: (0..obs_dim).map(|_| r.f64()).collect::<Result<_, _>>()?,
                action: (0..act_dim).map(|_| r.f64()).collect::<Result<_, _>>()?,
            });
        }
        r.finish()?;
        Ok(TeacherDataset {
            obs_dim,
            act_dim,
            scale,
            source,
            seeds,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// `-mean over records of |a - a_teacher|^2` for an arbitrary predictor.
///
/// Each episode is replayed in time order. `predict(ctx, obs)` receives the
/// normalized observation and a context of window `capacity` that holds the
/// preceding teacher steps of the same episode, with normalized observations
/// and the recorded returns-to-go.
pub fn imitation_error_with<F>(
    dataset: &TeacherDataset,
    vbn: &VbnStats,
    capacity: usize,
    mut predict: F,
) -> Result<f64>
where
    F: FnMut(&EpisodeContext, &[f64]) -> Result<Vec<f64>>,
{
    if dataset.records.is_empty() {
        return Err(Error::Contract("empty teacher dataset".into()));
    }
    let mut total = 0.0;
    for ep in dataset.episodes() {
        let cfg = RtgConfig::new(ep[0].rtg * dataset.scale, dataset.scale)?;
        let mut ctx = init_context(cfg, capacity)?;
        for (i, rec) in ep.iter().enumerate() {
            let obs = vbn.normalize(&rec.obs)?;
            let a = predict(&ctx, &obs)?;
            check_len("predicted action", dataset.act_dim, a.len())?;
            total += a
                .iter()
                .zip(&rec.action)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>();
            let next_rtg = ep
                .get(i + 1)
                .map_or(rec.rtg - rec.reward / dataset.scale, |n| n.rtg);
            ctx.record_step_with_rtg(&obs, &rec.action, next_rtg);
        }
    }
    Ok(-total / dataset.records.len() as f64)
}

/// Imitation fitness of a parameter vector. Observations are normalized with
/// `vbn` before reaching the network, as during rollouts.
pub fn imitation_fitness(
    params: &[f64],
    spec: &PolicySpec,
    vbn: &VbnStats,
    dataset: &TeacherDataset,
) -> Result<f64> {
    check_len("dataset observation size", spec.obs_dim, dataset.obs_dim)?;
    check_len("dataset action size", spec.act_dim, dataset.act_dim)?;
    match unflatten(params, spec)? {
        PolicyView::Feedforward(m) => {
            imitation_error_with(dataset, vbn, 1, |_, obs| Ok(m.forward(obs)))
        }
        PolicyView::Transformer(v) => {
            imitation_error_with(dataset, vbn, v.spec.context_len, |ctx, obs| v.act(ctx, obs))
        }
    }
}

/// ES evaluator scoring parameters by imitation fitness.
pub struct ImitationEvaluator {
    spec: PolicySpec,
    dataset: Arc<TeacherDataset>,
}

impl ImitationEvaluator {
    pub fn new(spec: PolicySpec, dataset: Arc<TeacherDataset>) -> Result<Self> {
        spec.validate()?;
        check_len("dataset observation size", spec.obs_dim, dataset.obs_dim)?;
        check_len("dataset action size", spec.act_dim, dataset.act_dim)?;
        Ok(ImitationEvaluator { spec, dataset })
    }
}

impl Evaluator for ImitationEvaluator {
    fn evaluate(
        &mut self,
        params: &[f64],
        vbn: &VbnStats,
        job: &EvalJob<'_>,
    ) -> Result<Evaluation> {
        let fitness = imitation_fitness(params, &self.spec, vbn, &self.dataset)?;
        let stats = if job.collect_obs {
            let obs: Vec<&[f64]> = self
                .dataset
                .records
                .iter()
                .map(|r| r.obs.as_slice())
                .collect();
            Some(VbnStats::from_batch(self.spec.obs_dim, &obs)?)
        } else {
            None
        };
        Ok(Evaluation {
            fitness,
            steps: self.dataset.records.len() as u64,
            vbn: stats,
        })
    }
}
