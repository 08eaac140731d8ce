//! Training, pretraining and evaluation drivers behind the command line.

use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use super::checkpoint::Checkpoint;
use super::config::{FitnessKind, RunConfig, TransportKind};
use super::log::{IterationRecord, LogWriter};
use crate::dist::{
    accept_workers, spawn_inproc_workers, worker_loop, EvaluatorFactory, Master, TcpTransport,
    Transport, WorkerLinks,
};
use crate::dt::RtgConfig;
use crate::envs::{
    self, EnvEvaluator, EnvKind, NeuralPolicy, Policy, ProportionalController, SignalFollower,
};
use crate::error::{Error, Result};
use crate::es::seeds::derive_seed;
use crate::es::{EsState, Evaluator, VbnStats};
use crate::nn::{init_params, PolicySpec};
use crate::pretrain::{
    collect_teacher_dataset, imitation_fitness, ImitationEvaluator, TeacherDataset,
    FOLLOWUP_LEARNING_RATE, FOLLOWUP_NOISE_DEVIATION, FOLLOWUP_VBN_PROBABILITY,
};

const INIT_TAG: u64 = 0x1417;
const EVAL_TAG: u64 = 0xE7A1;
const TEACHER_TAG: u64 = 0x7EAC;

pub const LOG_FILE: &str = "log.jsonl";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LATEST_CHECKPOINT: &str = "latest.ckpt";
pub const FOLLOWUP_CONFIG: &str = "followup.toml";
pub const TEACHER_DATASET: &str = "teacher.bin";

/// `n` consecutive seeds starting at an even base derived from `master_seed`
/// and `tag`.
fn seed_block(master_seed: u64, tag: u64, n: usize) -> Vec<u64> {
    let base = derive_seed(master_seed, tag) & !1 & (u64::MAX >> 1);
    (0..n as u64).map(|k| base + k).collect()
}

/// Held-out episode seeds used to score the mean policy after each iteration.
pub fn eval_seeds(master_seed: u64, n: usize) -> Vec<u64> {
    seed_block(master_seed, EVAL_TAG, n)
}

/// Scripted teacher for an environment, with its dataset source label.
pub fn teacher_for(env: EnvKind) -> (Box<dyn Policy>, &'static str) {
    match env {
        EnvKind::PointTarget => (Box::new(ProportionalController), "proportional_controller"),
        EnvKind::KeyCorridor => (Box::<SignalFollower>::default(), "signal_follower"),
    }
}

/// Teacher dataset for `cfg`, regenerated deterministically from its seeds.
pub fn teacher_dataset(cfg: &RunConfig) -> Result<TeacherDataset> {
    let (mut teacher, source) = teacher_for(cfg.env);
    let seeds = seed_block(cfg.master_seed, TEACHER_TAG, cfg.teacher_episodes);
    let scale = cfg.rtg_config()?.scale;
    collect_teacher_dataset(
        teacher.as_mut(),
        source,
        cfg.env.make().as_mut(),
        &seeds,
        scale,
    )
}

/// Fitness evaluator a worker builds from the resolved config text.
pub fn build_evaluator(cfg: &RunConfig) -> Result<Box<dyn Evaluator>> {
    let spec = cfg.policy_spec();
    Ok(match cfg.fitness {
        FitnessKind::Return => Box::new(EnvEvaluator::new(cfg.env, spec, cfg.rtg_config()?)?),
        FitnessKind::Imitation => Box::new(ImitationEvaluator::new(
            spec,
            Arc::new(teacher_dataset(cfg)?),
        )?),
    })
}

pub fn evaluator_factory() -> EvaluatorFactory {
    Arc::new(|text: &str| build_evaluator(&text.parse()?))
}

/// Starting replica: a fresh initialization, or the parameters and
/// normalization statistics of `init_checkpoint` with a fresh optimizer.
pub fn initial_state(cfg: &RunConfig, spec: &PolicySpec) -> Result<EsState> {
    let opt = cfg.optimizer_config();
    match &cfg.init_checkpoint {
        None => {
            let theta = init_params(spec, derive_seed(cfg.master_seed, INIT_TAG))?;
            EsState::new(
                theta,
                cfg.noise_deviation,
                &opt,
                spec.obs_dim,
                cfg.master_seed,
            )
        }
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            if &ckpt.spec != spec {
                return Err(Error::Config(format!(
                    "checkpoint {} holds a different architecture",
                    path.display()
                )));
            }
            let mut state = EsState::new(
                ckpt.state.theta,
                cfg.noise_deviation,
                &opt,
                spec.obs_dim,
                cfg.master_seed,
            )?;
            state.vbn = ckpt.state.vbn;
            Ok(state)
        }
    }
}

/// Score of the mean policy: held-out return, or imitation fitness when the
/// run optimizes imitation.
pub fn score(
    cfg: &RunConfig,
    spec: &PolicySpec,
    state: &EsState,
    dataset: Option<&TeacherDataset>,
) -> Result<f64> {
    match (cfg.fitness, dataset) {
        (FitnessKind::Imitation, Some(d)) => imitation_fitness(&state.theta.0, spec, &state.vbn, d),
        _ => mean_return(
            cfg.env,
            spec,
            &state.theta.0,
            &state.vbn,
            cfg.rtg_config()?,
            &eval_seeds(cfg.master_seed, cfg.eval_episodes),
        ),
    }
}

pub fn episode_returns(
    env: EnvKind,
    spec: &PolicySpec,
    theta: &[f64],
    vbn: &VbnStats,
    rtg: RtgConfig,
    seeds: &[u64],
) -> Result<Vec<f64>> {
    let mut policy = NeuralPolicy::new(theta, spec, vbn, rtg)?;
    envs::returns(&mut policy, env.make().as_mut(), seeds)
}

pub fn mean_return(
    env: EnvKind,
    spec: &PolicySpec,
    theta: &[f64],
    vbn: &VbnStats,
    rtg: RtgConfig,
    seeds: &[u64],
) -> Result<f64> {
    let r = episode_returns(env, spec, theta, vbn, rtg, seeds)?;
    Ok(r.iter().sum::<f64>() / r.len() as f64)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub spec: PolicySpec,
    pub initial: EsState,
    pub last: EsState,
    pub best: EsState,
    pub best_score: f64,
    pub records: Vec<IterationRecord>,
    /// Directory holding the log and checkpoints, when one was written.
    pub out_dir: Option<PathBuf>,
}

fn connect_workers(cfg: &RunConfig) -> Result<WorkerLinks> {
    match cfg.transport {
        TransportKind::Inproc => spawn_inproc_workers(cfg.workers, evaluator_factory()),
        TransportKind::Tcp => {
            let listener = TcpListener::bind(&cfg.listen_addr).map_err(|e| {
                Error::Transport(format!("cannot listen on {}: {e}", cfg.listen_addr))
            })?;
            log::info!("waiting for {} workers on {}", cfg.workers, cfg.listen_addr);
            let links = accept_workers(&listener, cfg.workers, cfg.worker_timeout())?;
            Ok((
                links
                    .into_iter()
                    .map(|t| Box::new(t) as Box<dyn Transport>)
                    .collect(),
                Vec::new(),
            ))
        }
    }
}

/// Runs `cfg.num_of_iterations` generations. With `write` set, the log and
/// the best and latest checkpoints go to `cfg.checkpoint_dir`.
pub fn train(cfg: &RunConfig, write: bool) -> Result<TrainOutcome> {
    cfg.validate()?;
    let spec = cfg.policy_spec();
    spec.validate()?;
    let initial = initial_state(cfg, &spec)?;
    let config_text = cfg.to_toml();
    let dataset = match cfg.fitness {
        FitnessKind::Imitation => Some(teacher_dataset(cfg)?),
        FitnessKind::Return => None,
    };

    let out_dir = write.then(|| cfg.checkpoint_dir.clone());
    let mut log = match &out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(LogWriter::create(&dir.join(LOG_FILE), cfg)?)
        }
        None => None,
    };
    let save = |name: &str, state: &EsState| -> Result<()> {
        match &out_dir {
            Some(dir) => Checkpoint::new(spec.clone(), state.clone(), config_text.clone())?
                .save(&dir.join(name)),
            None => Ok(()),
        }
    };

    let mut state = initial.clone();
    let mut best = initial.clone();
    let mut best_score = f64::NEG_INFINITY;
    let mut records = Vec::with_capacity(cfg.num_of_iterations);
    save(BEST_CHECKPOINT, &best)?;

    if cfg.num_of_iterations > 0 {
        let (links, handles) = connect_workers(cfg)?;
        let mut master = Master::start(
            links,
            cfg.es_settings(),
            &config_text,
            &state,
            cfg.worker_timeout(),
        )?;
        let start = Instant::now();
        let mut bytes_sent = 0u64;
        let run = (|| -> Result<()> {
            for _ in 0..cfg.num_of_iterations {
                let outcome = master.iteration(&mut state)?;
                bytes_sent += outcome.bytes;
                let eval = score(cfg, &spec, &state, dataset.as_ref())?;
                if eval > best_score {
                    best_score = eval;
                    best = state.clone();
                    save(BEST_CHECKPOINT, &best)?;
                }
                let rec = IterationRecord {
                    iteration: state.iteration,
                    eval_return: eval,
                    best_so_far: best_score,
                    mean_pop_fitness: outcome.summary.mean_fitness,
                    wall_clock_s: start.elapsed().as_secs_f64(),
                    bytes_sent,
                };
                log::info!(
                    "iteration {} eval {:.4} best {:.4} pop mean {:.4}",
                    rec.iteration,
                    rec.eval_return,
                    rec.best_so_far,
                    rec.mean_pop_fitness
                );
                if let Some(l) = log.as_mut() {
                    l.append(&rec)?;
                }
                records.push(rec);
                if cfg.target_eval.is_some_and(|t| eval >= t) {
                    break;
                }
            }
            Ok(())
        })();
        master.shutdown();
        for h in handles {
            match h.join() {
                Ok(r) => r?,
                Err(_) => return Err(Error::WorkerFailure("worker thread panicked".into())),
            }
        }
        run?;
    }
    save(LATEST_CHECKPOINT, &state)?;
    Ok(TrainOutcome {
        spec,
        initial,
        last: state,
        best,
        best_score,
        records,
        out_dir,
    })
}

/// Configuration for the RL phase that follows pretraining from `checkpoint`.
pub fn followup_config(pretrain: &RunConfig, checkpoint: &Path) -> RunConfig {
    RunConfig {
        fitness: FitnessKind::Return,
        learning_rate: FOLLOWUP_LEARNING_RATE,
        noise_deviation: FOLLOWUP_NOISE_DEVIATION,
        update_vbn_stats_probability: FOLLOWUP_VBN_PROBABILITY,
        init_checkpoint: Some(checkpoint.to_path_buf()),
        checkpoint_dir: pretrain.checkpoint_dir.join("followup"),
        ..pretrain.clone()
    }
}

/// Imitation pretraining. Writes the teacher dataset and the follow-up RL
/// config next to the checkpoints and returns the config with the outcome.
pub fn pretrain(cfg: &RunConfig, write: bool) -> Result<(TrainOutcome, RunConfig)> {
    let cfg = RunConfig {
        fitness: FitnessKind::Imitation,
        ..cfg.clone()
    };
    let outcome = train(&cfg, write)?;
    let followup = followup_config(&cfg, &cfg.checkpoint_dir.join(BEST_CHECKPOINT));
    if write {
        teacher_dataset(&cfg)?.save(&cfg.checkpoint_dir.join(TEACHER_DATASET))?;
        fs::write(cfg.checkpoint_dir.join(FOLLOWUP_CONFIG), followup.to_toml())?;
    }
    Ok((outcome, followup))
}

/// Connects to a master and serves tasks until told to shut down.
pub fn run_worker(addr: &str, cfg_timeout: std::time::Duration) -> Result<()> {
    let mut t = TcpTransport::connect(addr, cfg_timeout)?;
    worker_loop(&mut t, 0, &evaluator_factory())
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub returns: Vec<f64>,
    pub mean: f64,
    pub median: f64,
}

/// Evaluates a checkpoint on the same held-out seeds training used.
pub fn eval_checkpoint(ckpt: &Checkpoint, episodes: Option<usize>) -> Result<EvalSummary> {
    let cfg: RunConfig = ckpt.config_text.parse()?;
    let n = episodes.unwrap_or(cfg.eval_episodes);
    let returns = episode_returns(
        cfg.env,
        &ckpt.spec,
        &ckpt.state.theta.0,
        &ckpt.state.vbn,
        cfg.rtg_config()?,
        &eval_seeds(cfg.master_seed, n),
    )?;
    let mut sorted = returns.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(EvalSummary {
        mean: returns.iter().sum::<f64>() / returns.len() as f64,
        median: quantile(&sorted, 0.5),
        returns,
    })
}

pub const DEFAULT_SWEEP: [f64; 4] = [-1000.0, 0.0, 7000.0, 1e6];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rtg: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Return quartiles of a decision-transformer checkpoint for each
/// conditioning value.
pub fn rtg_sweep(
    ckpt: &Checkpoint,
    values: &[f64],
    episodes: Option<usize>,
) -> Result<Vec<SweepRow>> {
    if ckpt.spec.dt().is_none() {
        return Err(Error::Config(
            "return-to-go sweep needs a decision transformer checkpoint".into(),
        ));
    }
    let cfg: RunConfig = ckpt.config_text.parse()?;
    let seeds = eval_seeds(cfg.master_seed, episodes.unwrap_or(cfg.eval_episodes));
    values
        .iter()
        .map(|&rtg| {
            let rc = RunConfig { rtg, ..cfg.clone() }.rtg_config()?;
            let mut r = episode_returns(
                cfg.env,
                &ckpt.spec,
                &ckpt.state.theta.0,
                &ckpt.state.vbn,
                rc,
                &seeds,
            )?;
            r.sort_by(f64::total_cmp);
            Ok(SweepRow {
                rtg,
                q1: quantile(&r, 0.25),
                median: quantile(&r, 0.5),
                q3: quantile(&r, 0.75),
            })
        })
        .collect()
}
