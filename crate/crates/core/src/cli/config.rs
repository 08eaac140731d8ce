//! Run configuration: a TOML file whose keys map one-to-one onto
//! command-line overrides. Unknown keys are errors.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dt::RtgConfig;
use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::es::{EsSettings, OptimizerConfig, OptimizerKind};
use crate::nn::{DtSpec, PolicySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Feedforward,
    DecisionTransformer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    Inproc,
    Tcp,
}

/// What a population member is scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessKind {
    /// Mean episodic return.
    Return,
    /// Negated imitation error against the scripted teacher.
    Imitation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Unscaled return-to-go handed to a decision transformer.
    pub rtg: f64,
    pub size_of_population: usize,
    pub num_of_iterations: usize,
    pub noise_deviation: f64,
    pub weight_decay_factor: f64,
    pub batch_size: usize,
    pub update_vbn_stats_probability: f64,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,

    pub env: EnvKind,
    pub policy: PolicyKind,
    /// Divisor for returns-to-go. Defaults per environment when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtg_scale: Option<f64>,
    /// Hidden layer widths of the feedforward policy.
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub context_len: usize,
    pub ff_dim: usize,
    pub max_ep_len: usize,

    pub fitness: FitnessKind,
    pub episodes_per_eval: usize,
    /// Held-out episodes used to score the current mean after each iteration.
    pub eval_episodes: usize,
    /// Teacher episodes collected for imitation fitness.
    pub teacher_episodes: usize,
    pub noise_table_size: usize,

    pub workers: usize,
    pub transport: TransportKind,
    pub listen_addr: String,
    pub worker_timeout_s: f64,

    pub master_seed: u64,
    /// Stop early once the held-out score reaches this value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_eval: Option<f64>,
    /// Checkpoint to start from instead of a fresh initialization.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_checkpoint: Option<PathBuf>,
    pub checkpoint_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            rtg: 0.0,
            size_of_population: 200,
            num_of_iterations: 200,
            noise_deviation: 0.02,
            weight_decay_factor: 0.995,
            batch_size: 100,
            update_vbn_stats_probability: 0.01,
            optimizer: OptimizerKind::Sgdm,
            learning_rate: 0.05,
            env: EnvKind::PointTarget,
            policy: PolicyKind::DecisionTransformer,
            rtg_scale: None,
            hidden: vec![32, 32],
            embed_dim: 16,
            n_layers: 1,
            n_heads: 2,
            context_len: 4,
            ff_dim: 64,
            max_ep_len: 64,
            fitness: FitnessKind::Return,
            episodes_per_eval: 1,
            eval_episodes: 20,
            teacher_episodes: 20,
            noise_table_size: 1 << 21,
            workers: 1,
            transport: TransportKind::Inproc,
            listen_addr: "127.0.0.1:7070".into(),
            worker_timeout_s: 600.0,
            master_seed: 0,
            target_eval: None,
            init_checkpoint: None,
            checkpoint_dir: PathBuf::from("runs/default"),
        }
    }
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_overrides(&text, &[])
    }

    /// Parses `text` after replacing keys with `(key, value)` overrides.
    /// Values are read as TOML literals, falling back to plain strings.
    pub fn from_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        for (k, v) in overrides {
            let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(v.clone()));
            table.insert(k.replace('-', "_"), value);
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fully resolved configuration as TOML text.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.es_settings().validate()?;
        if !(self.noise_deviation > 0.0 && self.noise_deviation.is_finite()) {
            return Err(Error::Config(format!(
                "noise_deviation must be positive, got {}",
                self.noise_deviation
            )));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive".into()));
        }
        if !(self.worker_timeout_s > 0.0) {
            return Err(Error::Config("worker_timeout_s must be positive".into()));
        }
        self.rtg_config()?;
        let spec = self.policy_spec();
        spec.validate()?;
        if let Some(dt) = spec.dt() {
            if dt.max_ep_len < self.env.horizon() {
                return Err(Error::Config(format!(
                    "max_ep_len {} is shorter than the {} horizon of {}",
                    dt.max_ep_len,
                    self.env.name(),
                    self.env.horizon()
                )));
            }
        }
        if self.fitness == FitnessKind::Imitation && self.teacher_episodes == 0 {
            return Err(Error::Config("teacher_episodes must be positive".into()));
        }
        Ok(())
    }

    /// Halves (or otherwise scales) the population, keeping it even and the
    /// batch size within it.
    pub fn scale_population(&mut self, factor: f64) -> Result<()> {
        if !(factor > 0.0) {
            return Err(Error::Config(format!(
                "population scale must be positive, got {factor}"
            )));
        }
        let pop = ((self.size_of_population as f64 * factor / 2.0).round() as usize).max(1) * 2;
        self.size_of_population = pop;
        self.batch_size = self.batch_size.min(pop);
        self.validate()
    }

    pub fn policy_spec(&self) -> PolicySpec {
        let (obs, act) = (self.env.obs_dim(), self.env.act_dim());
        match self.policy {
            PolicyKind::Feedforward => PolicySpec::feedforward(obs, self.hidden.clone(), act),
            PolicyKind::DecisionTransformer => PolicySpec::decision_transformer(
                obs,
                act,
                DtSpec {
                    embed_dim: self.embed_dim,
                    n_layers: self.n_layers,
                    n_heads: self.n_heads,
                    context_len: self.context_len,
                    ff_dim: self.ff_dim,
                    max_ep_len: self.max_ep_len,
                },
            ),
        }
    }

    pub fn rtg_config(&self) -> Result<RtgConfig> {
        RtgConfig::new(
            self.rtg,
            self.rtg_scale.unwrap_or(self.env.default_rtg_scale()),
        )
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        match self.optimizer {
            OptimizerKind::Sgdm => OptimizerConfig::sgdm(self.learning_rate),
            OptimizerKind::Adam => OptimizerConfig::adam(self.learning_rate),
        }
    }

    pub fn es_settings(&self) -> EsSettings {
        EsSettings {
            population: self.size_of_population,
            optimizer: self.optimizer_config(),
            weight_decay: self.weight_decay_factor,
            batch_size: self.batch_size,
            vbn_probability: self.update_vbn_stats_probability,
            episodes_per_eval: self.episodes_per_eval,
            noise_table_len: self.noise_table_size,
        }
    }

    pub fn worker_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.worker_timeout_s)
    }
}

/// Splits `--key value` pairs. `--key=value` is accepted too.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let Some(key) = a.strip_prefix("--") else {
            return Err(Error::Config(format!("expected --key, found {a:?}")));
        };
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
        } else {
            let v = it
                .next()
                .ok_or_else(|| Error::Config(format!("missing value for --{key}")))?;
            out.push((key.to_string(), v.clone()));
        }
    }
    Ok(out)
}
