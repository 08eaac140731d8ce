//! Search-distribution state and the generation pipeline shared by the local
//! loop, the master and every worker.
//!
//! A generation is planned from `(rng_seed, iteration)` alone, evaluated
//! anywhere, and reduced into an [`UpdatePlan`] that every replica applies with
//! [`EsState::apply_update`]. The update touches only the plan and the noise
//! table, so replicas holding equal states stay bit-identical.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::gradient::gradient_estimate_batched;
use super::noise::{perturb_into, sample_offsets, NoiseTable, Perturbation};
use super::optim::{decay_weights, OptimizerConfig, OptimizerState};
use super::seeds::{derive_seed, episode_seeds, stream_rng, Purpose};
use super::shaping::centered_ranks;
use super::vbn::VbnStats;
use crate::error::{check_len, Error, Result};
use crate::nn::FlatParams;

const NOISE_SEED_TAG: u64 = 0x006e_6f69_7365;

/// Hyperparameters that stay fixed for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsSettings {
    pub population: usize,
    pub optimizer: OptimizerConfig,
    /// Multiplicative factor applied to theta after every step.
    pub weight_decay: f64,
    /// Number of shaped terms summed together before joining the total.
    pub batch_size: usize,
    /// Chance that an evaluation contributes its observations to VBN.
    pub vbn_probability: f64,
    pub episodes_per_eval: usize,
    pub noise_table_len: usize,
}

impl EsSettings {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || !self.population.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "size_of_population must be even and positive, got {}",
                self.population
            )));
        }
        if self.batch_size == 0 || self.batch_size > self.population {
            return Err(Error::Config(format!(
                "batch_size must lie in 1..={}, got {}",
                self.population, self.batch_size
            )));
        }
        if !(self.weight_decay > 0.0 && self.weight_decay <= 1.0) {
            return Err(Error::Config(format!(
                "weight_decay_factor must lie in (0, 1], got {}",
                self.weight_decay
            )));
        }
        if !(0.0..=1.0).contains(&self.vbn_probability) {
            return Err(Error::Config(format!(
                "update_vbn_stats_probability must lie in [0, 1], got {}",
                self.vbn_probability
            )));
        }
        if self.episodes_per_eval == 0 {
            return Err(Error::Config("episodes_per_eval must be positive".into()));
        }
        if !(self.optimizer.learning_rate > 0.0 && self.optimizer.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.optimizer.learning_rate
            )));
        }
        Ok(())
    }
}

/// Current search distribution: mean `theta`, fixed `sigma`, optimizer
/// buffers and observation statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsState {
    pub theta: FlatParams,
    pub sigma: f64,
    pub optimizer: OptimizerState,
    pub iteration: u64,
    pub vbn: VbnStats,
    pub rng_seed: u64,
}

impl EsState {
    pub fn new(
        theta: FlatParams,
        sigma: f64,
        optimizer: &OptimizerConfig,
        obs_dim: usize,
        rng_seed: u64,
    ) -> Result<Self> {
        let s = EsState {
            optimizer: OptimizerState::new(optimizer.kind, theta.len()),
            theta,
            sigma,
            iteration: 0,
            vbn: VbnStats::new(obs_dim),
            rng_seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_deviation must be positive, got {}",
                self.sigma
            )));
        }
        check_len("optimizer state", self.theta.len(), self.optimizer.dim())?;
        check_len("vbn m2", self.vbn.mean.len(), self.vbn.m2.len())
    }

    /// Seed of the noise table this run draws perturbations from.
    pub fn noise_seed(&self) -> u64 {
        derive_seed(self.rng_seed, NOISE_SEED_TAG)
    }

    pub fn noise_table(&self, settings: &EsSettings) -> Result<Arc<NoiseTable>> {
        NoiseTable::shared(
            self.noise_seed(),
            settings.noise_table_len,
            self.theta.len(),
        )
    }

    /// 64-bit fingerprint of the full replica: theta, sigma, optimizer
    /// buffers, iteration, VBN statistics and seed.
    pub fn digest(&self) -> u64 {
        let mut h = Sha256::new();
        let mut put = |v: &[f64]| {
            h.update((v.len() as u64).to_le_bytes());
            for x in v {
                h.update(x.to_le_bytes());
            }
        };
        put(self.theta.as_slice());
        put(&[self.sigma]);
        match &self.optimizer {
            OptimizerState::Sgdm { velocity } => {
                put(velocity);
            }
            OptimizerState::Adam { m, v, t } => {
                put(m);
                put(v);
                put(&[*t as f64]);
            }
        }
        put(&self.vbn.mean);
        put(&self.vbn.m2);
        h.update([self.optimizer.kind() as u8]);
        h.update(self.iteration.to_le_bytes());
        h.update(self.vbn.count.to_le_bytes());
        h.update(self.rng_seed.to_le_bytes());
        let out = h.finalize();
        let mut first = [0u8; 8];
        first.copy_from_slice(&out[..8]);
        u64::from_le_bytes(first)
    }

    /// One optimizer step from a reduced generation: gradient estimate in the
    /// canonical order, optimizer step, weight decay, VBN merge, iteration + 1.
    pub fn apply_update(
        &mut self,
        settings: &EsSettings,
        table: &NoiseTable,
        update: &UpdatePlan,
    ) -> Result<()> {
        if update.iteration != self.iteration {
            return Err(Error::Contract(format!(
                "update for iteration {} applied to state at iteration {}",
                update.iteration, self.iteration
            )));
        }
        let dim = self.theta.len();
        let g = gradient_estimate_batched(
            &update.weights,
            &update.entries,
            table,
            self.sigma,
            dim,
            settings.batch_size,
        )?;
        self.optimizer
            .step(&settings.optimizer, self.theta.as_mut_slice(), &g)?;
        decay_weights(self.theta.as_mut_slice(), settings.weight_decay)?;
        self.vbn.merge(&update.vbn_delta)?;
        self.iteration += 1;
        Ok(())
    }

    /// Shapes `report` and applies it. Returns the plan that replicas need.
    pub fn apply_generation(
        &mut self,
        settings: &EsSettings,
        table: &NoiseTable,
        report: &GenerationReport,
    ) -> Result<UpdatePlan> {
        let plan = report.reduce(self.iteration, self.vbn.dim())?;
        self.apply_update(settings, table, &plan)?;
        Ok(plan)
    }
}

/// Everything about a generation that follows from the seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationPlan {
    pub iteration: u64,
    pub entries: Vec<Perturbation>,
    /// Shared by every member so that comparisons are paired.
    pub episode_seeds: Vec<u64>,
    /// Whether each member reports its observations for VBN.
    pub collect_vbn: Vec<bool>,
}

pub fn plan_generation(state: &EsState, settings: &EsSettings) -> Result<GenerationPlan> {
    settings.validate()?;
    let entries = sample_offsets(
        state.rng_seed,
        state.iteration,
        settings.population,
        settings.noise_table_len,
        state.theta.len(),
    )?;
    let mut rng = stream_rng(state.rng_seed, state.iteration, Purpose::Vbn);
    let p = settings.vbn_probability;
    let collect_vbn = entries
        .iter()
        .map(|_| {
            let u: f64 = rng.random();
            u < p
        })
        .collect();
    Ok(GenerationPlan {
        iteration: state.iteration,
        entries,
        episode_seeds: episode_seeds(state.rng_seed, state.iteration, settings.episodes_per_eval),
        collect_vbn,
    })
}

/// What an evaluator is asked to do for one population member.
#[derive(Debug, Clone, Copy)]
pub struct EvalJob<'a> {
    pub iteration: u64,
    pub episode_seeds: &'a [u64],
    pub collect_obs: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    pub steps: u64,
    /// Statistics of the observations seen, when the job asked for them.
    pub vbn: Option<VbnStats>,
}

/// Scores one parameter vector.
pub trait Evaluator {
    fn evaluate(&mut self, params: &[f64], vbn: &VbnStats, job: &EvalJob<'_>)
        -> Result<Evaluation>;
}

impl<F> Evaluator for F
where
    F: FnMut(&[f64]) -> f64,
{
    fn evaluate(
        &mut self,
        params: &[f64],
        _vbn: &VbnStats,
        _job: &EvalJob<'_>,
    ) -> Result<Evaluation> {
        Ok(Evaluation {
            fitness: self(params),
            steps: 0,
            vbn: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub perturbation: Perturbation,
    pub fitness: f64,
    pub steps: u64,
    pub vbn: Option<VbnStats>,
}

/// Results of a full generation in offset-list order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GenerationReport {
    pub entries: Vec<ReportEntry>,
}

impl GenerationReport {
    /// Rank-shapes the fitnesses and merges VBN contributions in entry order.
    pub fn reduce(&self, iteration: u64, obs_dim: usize) -> Result<UpdatePlan> {
        if self.entries.is_empty() {
            return Err(Error::Contract("empty generation report".into()));
        }
        if let Some(e) = self.entries.iter().find(|e| !e.fitness.is_finite()) {
            return Err(Error::Contract(format!(
                "non-finite fitness {} at offset {}",
                e.fitness, e.perturbation.offset
            )));
        }
        let fitness: Vec<f64> = self.entries.iter().map(|e| e.fitness).collect();
        let mut vbn_delta = VbnStats::new(obs_dim);
        for v in self.entries.iter().filter_map(|e| e.vbn.as_ref()) {
            vbn_delta.merge(v)?;
        }
        Ok(UpdatePlan {
            iteration,
            entries: self.entries.iter().map(|e| e.perturbation).collect(),
            weights: centered_ranks(&fitness),
            vbn_delta,
        })
    }

    pub fn summary(&self) -> GenerationSummary {
        let n = self.entries.len().max(1) as f64;
        GenerationSummary {
            mean_fitness: self.entries.iter().map(|e| e.fitness).sum::<f64>() / n,
            max_fitness: self
                .entries
                .iter()
                .map(|e| e.fitness)
                .fold(f64::NEG_INFINITY, f64::max),
            min_fitness: self
                .entries
                .iter()
                .map(|e| e.fitness)
                .fold(f64::INFINITY, f64::min),
            total_steps: self.entries.iter().map(|e| e.steps).sum(),
        }
    }
}

/// The reduced generation: enough to reproduce the step on any replica.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdatePlan {
    pub iteration: u64,
    pub entries: Vec<Perturbation>,
    pub weights: Vec<f64>,
    pub vbn_delta: VbnStats,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationSummary {
    pub mean_fitness: f64,
    pub max_fitness: f64,
    pub min_fitness: f64,
    pub total_steps: u64,
}

/// Evaluates members `first..first + count` of `plan` against `state`.
pub fn evaluate_slice(
    state: &EsState,
    table: &NoiseTable,
    plan: &GenerationPlan,
    first: usize,
    count: usize,
    evaluator: &mut dyn Evaluator,
) -> Result<Vec<ReportEntry>> {
    let end = first
        .checked_add(count)
        .filter(|&e| e <= plan.entries.len())
        .ok_or_else(|| Error::Contract(format!("slice {first}+{count} outside the population")))?;
    let mut buf = Vec::with_capacity(state.theta.len());
    let mut out = Vec::with_capacity(count);
    for i in first..end {
        let p = plan.entries[i];
        perturb_into(state.theta.as_slice(), table, p, state.sigma, &mut buf)?;
        let job = EvalJob {
            iteration: plan.iteration,
            episode_seeds: &plan.episode_seeds,
            collect_obs: plan.collect_vbn[i],
        };
        let ev = evaluator.evaluate(&buf, &state.vbn, &job)?;
        out.push(ReportEntry {
            perturbation: p,
            fitness: ev.fitness,
            steps: ev.steps,
            vbn: if job.collect_obs { ev.vbn } else { None },
        });
    }
    Ok(out)
}

/// One full generation in the calling thread.
pub fn run_generation_local(
    state: &mut EsState,
    settings: &EsSettings,
    table: &NoiseTable,
    evaluator: &mut dyn Evaluator,
) -> Result<GenerationSummary> {
    let plan = plan_generation(state, settings)?;
    let entries = evaluate_slice(state, table, &plan, 0, plan.entries.len(), evaluator)?;
    let report = GenerationReport { entries };
    state.apply_generation(settings, table, &report)?;
    Ok(report.summary())
}
