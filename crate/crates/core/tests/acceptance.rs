//! Acceptance suite. Every criterion prints exactly one `PASS` or `FAIL`
//! line followed by the measurements behind it.
//!
//! Pass criterion numbers as arguments to run a subset, for example
//! `cargo test -p esdt-core --test acceptance -- 3 5`. A failing criterion
//! is reported but does not fail the target unless `ESDT_ACCEPTANCE_STRICT=1`
//! is set.

use std::fs;
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use esdt::cli::run::{
    eval_checkpoint, eval_seeds, pretrain, rtg_sweep, run_worker, train, TrainOutcome,
    BEST_CHECKPOINT, DEFAULT_SWEEP, LATEST_CHECKPOINT,
};
use esdt::cli::{Checkpoint, FitnessKind, PolicyKind, RunConfig, TransportKind};
use esdt::dist::{decode, encode};
use esdt::envs::{evaluate, EnvKind, ProportionalController, ZeroPolicy};
use esdt::es::{
    centered_ranks, decay_weights, gradient_estimate, perturb, run_generation_local,
    sample_offsets, EsSettings, EsState, NoiseTable, OptimizerConfig, OptimizerKind,
    OptimizerState, VbnStats,
};
use esdt::nn::{
    causal_self_attention, layout, param_count, unflatten, DtSpec, FlatParams, PolicySpec,
    PolicyView,
};
use proptest::test_runner::{Config as ProptestConfig, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{bytes_per_generation, checkpoint_strategy, free_port, message_strategy, tiny_run};

type Outcome = Result<Verdict, Box<dyn std::error::Error>>;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

/// Fraction of the way from the zero policy's return to the controller's.
const POINT_TARGET_FRACTION: f64 = 0.9;
const POINT_MAX_ITERATIONS: usize = 500;
const POINT_RUN_ITERATIONS: usize = 300;
/// Step size used for the decision-transformer runs. The configuration
/// default (0.05) diverges on PointTarget.
const DT_LEARNING_RATE: f64 = 0.002;

/// Held-out reference returns on the seeds a run evaluates on.
struct PointReference {
    controller: f64,
    zero: f64,
}

impl PointReference {
    fn measure(cfg: &RunConfig) -> esdt::Result<Self> {
        let seeds = eval_seeds(cfg.master_seed, cfg.eval_episodes);
        let mut env = EnvKind::PointTarget.make();
        Ok(PointReference {
            controller: evaluate(&mut ProportionalController, env.as_mut(), &seeds)?,
            zero: evaluate(&mut ZeroPolicy(2), env.as_mut(), &seeds)?,
        })
    }

    fn threshold(&self) -> f64 {
        self.zero + POINT_TARGET_FRACTION * (self.controller - self.zero)
    }
}

fn point_dt(dir: &Path) -> RunConfig {
    RunConfig {
        env: EnvKind::PointTarget,
        policy: PolicyKind::DecisionTransformer,
        embed_dim: 16,
        n_layers: 1,
        n_heads: 2,
        context_len: 4,
        size_of_population: 500,
        batch_size: 100,
        learning_rate: DT_LEARNING_RATE,
        noise_deviation: 0.02,
        num_of_iterations: POINT_RUN_ITERATIONS,
        eval_episodes: 20,
        master_seed: 0,
        checkpoint_dir: dir.to_path_buf(),
        ..RunConfig::default()
    }
}

/// The PointTarget decision transformer shared by criteria 3 and 5.
struct PointRun {
    outcome: TrainOutcome,
    checkpoint: Checkpoint,
    reference: PointReference,
    first_hit: Option<u64>,
    seconds: f64,
}

#[derive(Default)]
struct Shared {
    point: Option<PointRun>,
}

impl Shared {
    fn point_run(&mut self) -> esdt::Result<&PointRun> {
        if self.point.is_none() {
            let dir = tempfile::tempdir()?;
            let cfg = point_dt(dir.path());
            let reference = PointReference::measure(&cfg)?;
            let start = Instant::now();
            let outcome = train(&cfg, false)?;
            let seconds = start.elapsed().as_secs_f64();
            let threshold = reference.threshold();
            let first_hit = outcome
                .records
                .iter()
                .find(|r| r.eval_return >= threshold)
                .map(|r| r.iteration);
            let checkpoint =
                Checkpoint::new(outcome.spec.clone(), outcome.best.clone(), cfg.to_toml())?;
            self.point = Some(PointRun {
                outcome,
                checkpoint,
                reference,
                first_hit,
                seconds,
            });
        }
        Ok(self.point.as_ref().expect("point run initialized above"))
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn sphere_sanity(_: &mut Shared) -> Outcome {
    let dim = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let target: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let settings = EsSettings {
        population: 100,
        optimizer: OptimizerConfig::sgdm(0.05),
        weight_decay: 1.0,
        batch_size: 100,
        vbn_probability: 0.0,
        episodes_per_eval: 1,
        noise_table_len: 1 << 20,
    };
    let mut state = EsState::new(FlatParams(vec![0.0; dim]), 0.02, &settings.optimizer, 0, 1)?;
    let table = state.noise_table(&settings)?;
    let t = target.clone();
    let mut fitness = move |x: &[f64]| -x.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum::<f64>();

    let start = Instant::now();
    let initial = distance(&state.theta.0, &target);
    let mut best = initial;
    let mut reached = None;
    for it in 1..=300 {
        run_generation_local(&mut state, &settings, &table, &mut fitness)?;
        let d = distance(&state.theta.0, &target);
        best = best.min(d);
        if d < 0.1 && reached.is_none() {
            reached = Some(it);
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    let last = distance(&state.theta.0, &target);
    Ok(Verdict::new(
        reached.is_some() && seconds < 30.0,
        format!(
            "distance {initial:.3} -> final {last:.3}, best {best:.3}, first below 0.1: {}, {seconds:.1}s",
            reached.map_or("never".into(), |i| format!("iteration {i}"))
        ),
    ))
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt()
        * b.iter().map(|x| x * x).sum::<f64>().sqrt())
}

fn gradient_oracle(_: &mut Shared) -> Outcome {
    let dim = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let scales: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..3.0)).collect();
    let theta: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let f = |x: &[f64]| -x.iter().zip(&scales).map(|(v, s)| s * v * v).sum::<f64>();
    let analytic: Vec<f64> = theta
        .iter()
        .zip(&scales)
        .map(|(v, s)| -2.0 * s * v)
        .collect();

    let table = NoiseTable::create(13, 1 << 20, dim)?;
    let entries = sample_offsets(21, 0, 10_000, table.len(), dim)?;
    let base = FlatParams(theta);
    let mut fitness = Vec::with_capacity(entries.len());
    for &p in &entries {
        fitness.push(f(&perturb(&base, &table, p, 0.02)?.0));
    }
    let g = gradient_estimate(&centered_ranks(&fitness), &entries, &table, 0.02, dim)?;
    let c = cosine(&g, &analytic);
    Ok(Verdict::new(
        c > 0.9,
        format!("cosine {c:.4} at population 10000"),
    ))
}

fn trainability(shared: &mut Shared) -> Outcome {
    let run = shared.point_run()?;
    let threshold = run.reference.threshold();
    let params = param_count(&run.outcome.spec)?;
    let point_ok = run
        .first_hit
        .is_some_and(|i| i as usize <= POINT_MAX_ITERATIONS);
    let point_seconds = run.seconds;
    let point = format!(
        "PointTarget DT ({params} params) best {:.3}, controller {:.3}, zero {:.3}, target {threshold:.3}, reached at {}",
        run.outcome.best_score,
        run.reference.controller,
        run.reference.zero,
        run.first_hit.map_or("never".into(), |i| format!("iteration {i}")),
    );

    let dir = tempfile::tempdir()?;
    let corridor = |policy| RunConfig {
        env: EnvKind::KeyCorridor,
        policy,
        size_of_population: 500,
        batch_size: 100,
        learning_rate: DT_LEARNING_RATE,
        episodes_per_eval: 2,
        num_of_iterations: 50,
        eval_episodes: 20,
        checkpoint_dir: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    let start = Instant::now();
    let dt = train(
        &RunConfig {
            target_eval: Some(8.0),
            ..corridor(PolicyKind::DecisionTransformer)
        },
        false,
    )?;
    let ff = train(&corridor(PolicyKind::Feedforward), false)?;
    let corridor_seconds = start.elapsed().as_secs_f64();
    let ff_final = ff.records.last().map_or(f64::NAN, |r| r.eval_return);
    let ff_best = ff.best_score;

    let seconds = point_seconds + corridor_seconds;
    let pass = point_ok && dt.best_score >= 8.0 && ff_best <= 1.0 && seconds <= 1800.0;
    Ok(Verdict::new(
        pass,
        format!(
            "{point}; KeyCorridor DT best {:.1} after {} iterations; feedforward best {ff_best:.1} final {ff_final:.1}; {seconds:.0}s total on {} core(s)",
            dt.best_score,
            dt.records.len(),
            thread::available_parallelism().map_or(1, |n| n.get()),
        ),
    ))
}

fn population_effect(_: &mut Shared) -> Outcome {
    let mut rates = Vec::new();
    let mut details = Vec::new();
    for population in [500, 250] {
        let mut successes = 0;
        let mut hits = Vec::new();
        for seed in 1..=5u64 {
            let dir = tempfile::tempdir()?;
            let mut cfg = RunConfig {
                size_of_population: population,
                batch_size: 50,
                num_of_iterations: POINT_MAX_ITERATIONS,
                master_seed: seed,
                ..point_dt(dir.path())
            };
            let target = PointReference::measure(&cfg)?.threshold();
            cfg.target_eval = Some(target);
            let out = train(&cfg, false)?;
            if out.best_score >= target {
                successes += 1;
                hits.push(out.records.len().to_string());
            } else {
                hits.push("-".into());
            }
        }
        rates.push(successes);
        details.push(format!(
            "population {population}: {successes}/5 (iterations {})",
            hits.join(",")
        ));
    }
    let effect = if rates[1] < rates[0] {
        "lower"
    } else {
        "not lower"
    };
    Ok(Verdict::new(
        rates[0] >= 4,
        format!(
            "{}; halved population success rate is {effect}",
            details.join("; ")
        ),
    ))
}

fn rtg_insensitivity(shared: &mut Shared) -> Outcome {
    let run = shared.point_run()?;
    let rows = rtg_sweep(&run.checkpoint, &DEFAULT_SWEEP, None)?;
    let medians: Vec<f64> = rows.iter().map(|r| r.median).collect();
    let max = medians.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = medians.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = medians.iter().map(|m| m.abs()).sum::<f64>() / medians.len() as f64;
    let spread = (max - min) / scale;
    let listing: Vec<String> = rows
        .iter()
        .map(|r| format!("{}: {:.3}", r.rtg, r.median))
        .collect();
    Ok(Verdict::new(
        spread < 0.1,
        format!(
            "medians {}; relative spread {:.1}%",
            listing.join(", "),
            100.0 * spread
        ),
    ))
}

fn pretraining_brittleness(_: &mut Shared) -> Outcome {
    let dir = tempfile::tempdir()?;
    let cfg = RunConfig {
        fitness: FitnessKind::Imitation,
        size_of_population: 200,
        batch_size: 100,
        num_of_iterations: 60,
        teacher_episodes: 16,
        learning_rate: DT_LEARNING_RATE,
        ..point_dt(dir.path())
    };
    let (_, followup) = pretrain(&cfg, true)?;
    let level = eval_checkpoint(&Checkpoint::load(&dir.path().join(BEST_CHECKPOINT))?, None)?.mean;

    let run = |step: f64| -> esdt::Result<Vec<f64>> {
        let sub = tempfile::tempdir()?;
        let out = train(
            &RunConfig {
                learning_rate: step,
                noise_deviation: step,
                num_of_iterations: 20,
                checkpoint_dir: sub.path().to_path_buf(),
                ..followup.clone()
            },
            false,
        )?;
        Ok(out.records.iter().map(|r| r.eval_return).collect())
    };
    let high = run(0.05)?;
    let low = run(0.01)?;

    let broken = high[..5].iter().any(|&e| e < level);
    let floor = level - 0.1 * level.abs();
    let kept = low[..5].iter().all(|&e| e >= floor);
    let improved = low[5..].iter().any(|&e| e > level);
    let show = |v: &[f64]| {
        v.iter()
            .map(|e| format!("{e:.2}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    Ok(Verdict::new(
        broken && kept && improved,
        format!(
            "checkpoint {level:.3}; lr=sigma=0.05 drops below it in 5 iterations: {broken} [{}]; \
             lr=sigma=0.01 stays above {floor:.3}: {kept}, later improves: {improved} [{}]",
            show(&high),
            show(&low)
        ),
    ))
}

fn transport_equivalence(_: &mut Shared) -> Outcome {
    let a = tempfile::tempdir()?;
    let b = tempfile::tempdir()?;
    train(&tiny_run(a.path()), true)?;

    let addr = free_port();
    let cfg = RunConfig {
        workers: 4,
        transport: TransportKind::Tcp,
        listen_addr: addr.clone(),
        worker_timeout_s: 60.0,
        ..tiny_run(b.path())
    };
    let workers: Vec<_> = (0..4)
        .map(|_| {
            let addr = addr.clone();
            thread::spawn(move || run_worker(&addr, Duration::from_secs(30)))
        })
        .collect();
    train(&cfg, true)?;
    for w in workers {
        w.join().map_err(|_| "worker thread panicked")??;
    }
    let bytes_a = fs::read(a.path().join(LATEST_CHECKPOINT))?;
    let ca = Checkpoint::load(&a.path().join(LATEST_CHECKPOINT))?;
    let cb = Checkpoint::load(&b.path().join(LATEST_CHECKPOINT))?;
    // Config text records the transport, so compare the learned state bytes.
    let same_state = ca.spec == cb.spec
        && ca.state == cb.state
        && ca
            .state
            .theta
            .0
            .iter()
            .zip(&cb.state.theta.0)
            .all(|(x, y)| x.to_bits() == y.to_bits());
    Ok(Verdict::new(
        same_state,
        format!(
            "1 in-process worker vs 4 TCP workers, {} iterations, {} byte checkpoint: state identical {same_state}",
            ca.state.iteration,
            bytes_a.len()
        ),
    ))
}

fn seed_only_communication(_: &mut Shared) -> Outcome {
    let small = bytes_per_generation(1_000);
    let large = bytes_per_generation(100_000);
    let rel = (large as f64 - small as f64) / small as f64;
    Ok(Verdict::new(
        rel < 0.01,
        format!(
            "{small} bytes at 1e3 params, {large} bytes at 1e5 params, relative {:.3}%",
            100.0 * rel
        ),
    ))
}

fn block_params(spec: &PolicySpec, set: impl Fn(&str, usize) -> f64) -> esdt::Result<Vec<f64>> {
    let mut out = Vec::new();
    for t in layout(spec)? {
        out.extend((0..t.len()).map(|i| set(&t.name, i)));
    }
    Ok(out)
}

fn micro_oracles(_: &mut Shared) -> Outcome {
    let mut failed = Vec::new();

    // Two-token causal attention against a hand computation.
    let spec = PolicySpec::decision_transformer(
        1,
        1,
        DtSpec {
            embed_dim: 2,
            n_layers: 1,
            n_heads: 1,
            context_len: 2,
            ff_dim: 4,
            max_ep_len: 4,
        },
    );
    let p = block_params(&spec, |name, i| match name {
        "block0.query.weight" => [1.0, 0.0, 0.0, 1.0][i],
        "block0.key.weight" => [2.0, 0.0, 0.0, 1.0][i],
        "block0.value.weight" => [1.0, 1.0, 0.0, 2.0][i],
        "block0.out.weight" => [1.0, 0.0, 0.0, 1.0][i],
        _ => 0.0,
    })?;
    let PolicyView::Transformer(view) = unflatten(&p, &spec)? else {
        return Err("expected a transformer view".into());
    };
    let out = causal_self_attention(&view.blocks[0], &[1.0, 0.0, 0.0, 1.0])?;
    let w1 = 1.0 / (1.0 + (1.0 / 2f64.sqrt()).exp());
    let expected = [1.0, 0.0, 1.0, 2.0 * (1.0 - w1)];
    if out.iter().zip(expected).any(|(o, e)| (o - e).abs() > 1e-12) {
        failed.push("attention");
    }

    // Centered ranks: zero sum, bounded, permutation-equivariant.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v: Vec<f64> = (0..31).map(|_| rng.random_range(-5.0..5.0)).collect();
    let w = centered_ranks(&v);
    let mut rev = v.clone();
    rev.reverse();
    let mut wr = centered_ranks(&rev);
    wr.reverse();
    if w.iter().sum::<f64>().abs() > 1e-12 || w.iter().any(|x| x.abs() > 0.5) || w != wr {
        failed.push("centered ranks");
    }

    // Antithetic pairs with constant fitness give an exactly zero update.
    let table = NoiseTable::create(4, 4096, 9)?;
    let entries = sample_offsets(4, 0, 40, table.len(), 9)?;
    let g = gradient_estimate(&centered_ranks(&[3.5; 40]), &entries, &table, 0.02, 9)?;
    if g.iter().any(|&x| x != 0.0) {
        failed.push("antithetic zero update");
    }

    // Decoupled decay differs from the equivalent L2 penalty under Adam.
    let cfg = OptimizerConfig::adam(0.1);
    let grad = [1.0, -0.5, 0.25];
    let mut decoupled = vec![1.0, 2.0, -3.0];
    let mut coupled = decoupled.clone();
    let mut s1 = OptimizerState::new(OptimizerKind::Adam, 3);
    let mut s2 = OptimizerState::new(OptimizerKind::Adam, 3);
    let lambda = (1.0 - 0.9) / cfg.learning_rate;
    for _ in 0..2 {
        s1.step(&cfg, &mut decoupled, &grad)?;
        decay_weights(&mut decoupled, 0.9)?;
        let g: Vec<f64> = grad
            .iter()
            .zip(&coupled)
            .map(|(g, t)| g - lambda * t)
            .collect();
        s2.step(&cfg, &mut coupled, &g)?;
    }
    if distance(&decoupled, &coupled) < 1e-3 {
        failed.push("decoupled decay");
    }

    // Merged VBN statistics equal those of the concatenated batch.
    let a: Vec<[f64; 2]> = (0..17)
        .map(|_| [rng.random_range(-9.0..9.0), rng.random_range(0.0..1.0)])
        .collect();
    let b: Vec<[f64; 2]> = (0..5)
        .map(|_| [rng.random_range(-9.0..9.0), rng.random_range(0.0..1.0)])
        .collect();
    let mut merged = VbnStats::from_batch(2, &a)?;
    merged.merge(&VbnStats::from_batch(2, &b)?)?;
    let direct = VbnStats::from_batch(2, &[a, b].concat())?;
    let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| (p - q).abs() <= 1e-9);
    if merged.count != direct.count
        || !close(&merged.mean, &direct.mean)
        || !close(&merged.variance(), &direct.variance())
    {
        failed.push("vbn merge");
    }

    Ok(Verdict::new(
        failed.is_empty(),
        if failed.is_empty() {
            "attention, centered ranks, antithetic zero update, decoupled decay, vbn merge".into()
        } else {
            format!("failed: {}", failed.join(", "))
        },
    ))
}

fn round_trip_config() -> ProptestConfig {
    ProptestConfig {
        cases: 1000,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn round_trips(_: &mut Shared) -> Outcome {
    let dir = tempfile::tempdir()?;
    let mut runner = TestRunner::new(round_trip_config());
    let ckpt = runner.run(&checkpoint_strategy(), |ckpt| {
        let p = dir.path().join("c.ckpt");
        let bytes = ckpt.to_bytes();
        ckpt.save(&p)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        let back = Checkpoint::load(&p).map_err(|e| TestCaseError::fail(e.to_string()))?;
        if back != ckpt
            || back.to_bytes() != bytes
            || fs::read(&p).map_err(|e| TestCaseError::fail(e.to_string()))? != bytes
        {
            return Err(TestCaseError::fail(
                "checkpoint changed across a round trip",
            ));
        }
        Ok(())
    });
    let mut runner = TestRunner::new(round_trip_config());
    let msg = runner.run(&message_strategy(), |msg| {
        let bytes = encode(&msg);
        let back = decode(&bytes).map_err(|e| TestCaseError::fail(e.to_string()))?;
        if back != msg || encode(&back) != bytes {
            return Err(TestCaseError::fail("message changed across a round trip"));
        }
        Ok(())
    });
    let ckpt = ckpt.map_err(|e| e.to_string());
    let msg = msg.map_err(|e| e.to_string());
    let show = |r: &Result<(), String>| match r {
        Ok(()) => "1000/1000".to_string(),
        Err(e) => e.clone(),
    };
    Ok(Verdict::new(
        ckpt.is_ok() && msg.is_ok(),
        format!("checkpoints {}, messages {}", show(&ckpt), show(&msg)),
    ))
}

type Criterion = (u32, &'static str, fn(&mut Shared) -> Outcome);

const CRITERIA: [Criterion; 10] = [
    (1, "sphere sanity", sphere_sanity),
    (2, "gradient estimate oracle", gradient_oracle),
    (3, "decision transformer trainability", trainability),
    (4, "population size effect", population_effect),
    (5, "return-to-go insensitivity", rtg_insensitivity),
    (6, "pretraining brittleness", pretraining_brittleness),
    (7, "transport equivalence", transport_equivalence),
    (8, "seed-only communication", seed_only_communication),
    (9, "numeric micro-oracles", micro_oracles),
    (10, "checkpoint and message round trips", round_trips),
];

fn main() {
    // libtest flags such as `--nocapture` may be forwarded; keep only numbers.
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let strict = std::env::var("ESDT_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut shared = Shared::default();
    let (mut passed, mut ran) = (0, 0);
    for (id, name, check) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| check(&mut shared)));
        let seconds = start.elapsed().as_secs_f64();
        let (pass, detail) = match result {
            Ok(Ok(v)) => (v.pass, v.detail),
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".into()),
        };
        passed += usize::from(pass);
        println!(
            "criterion {id:>2} {:<4} {name} ({seconds:.1}s): {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    println!("acceptance: {passed}/{ran} criteria passed");
    if strict && passed < ran {
        std::process::exit(1);
    }
}
