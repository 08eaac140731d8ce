//! Proptest strategies and small run fixtures shared by the integration tests.
#![allow(dead_code)]

use esdt::cli::Checkpoint;
use esdt::dist::wire::{ResultEntry, ResultMessage, TaskMessage, UpdateEntry, UpdateMessage};
use esdt::dist::Message;
use esdt::es::{EsSettings, EsState, OptimizerConfig, OptimizerState, VbnStats};
use esdt::nn::{param_count, DtSpec, FlatParams, PolicySpec};
use proptest::prelude::*;
use std::net::TcpListener;
use std::sync::Arc;
use std::time::Duration;

use esdt::cli::{PolicyKind, RunConfig};
use esdt::dist::{spawn_inproc_workers, EvaluatorFactory, Master};
use esdt::es::Evaluator;

pub fn vbn_strategy(dim: usize) -> impl Strategy<Value = VbnStats> {
    (
        any::<u64>(),
        proptest::collection::vec(-1e6f64..1e6, dim),
        proptest::collection::vec(0.0f64..1e6, dim),
    )
        .prop_map(|(count, mean, m2)| VbnStats { count, mean, m2 })
}

pub fn state_strategy() -> impl Strategy<Value = EsState> {
    (1usize..20, 0usize..4, any::<bool>()).prop_flat_map(|(n, obs, adam)| {
        (
            proptest::collection::vec(-10.0f64..10.0, n),
            1e-6f64..1.0,
            proptest::collection::vec(-1.0f64..1.0, n),
            proptest::collection::vec(0.0f64..1.0, n),
            any::<u64>(),
            vbn_strategy(obs),
            any::<u64>(),
        )
            .prop_map(move |(theta, sigma, m, v, t, vbn, seed)| EsState {
                theta: FlatParams(theta),
                sigma,
                optimizer: if adam {
                    OptimizerState::Adam { m, v, t }
                } else {
                    OptimizerState::Sgdm { velocity: m }
                },
                iteration: t >> 3,
                vbn,
                rng_seed: seed,
            })
    })
}

pub fn settings_strategy() -> impl Strategy<Value = EsSettings> {
    (
        1usize..500,
        any::<bool>(),
        1e-4f64..1.0,
        0.5f64..=1.0,
        0.0f64..=1.0,
        1usize..5,
        1usize..1 << 20,
    )
        .prop_map(|(half, adam, lr, decay, p, eps, table)| {
            let population = 2 * half;
            EsSettings {
                population,
                optimizer: if adam {
                    OptimizerConfig::adam(lr)
                } else {
                    OptimizerConfig::sgdm(lr)
                },
                weight_decay: decay,
                batch_size: 1 + half % population,
                vbn_probability: p,
                episodes_per_eval: eps,
                noise_table_len: table,
            }
        })
}

pub fn message_strategy() -> impl Strategy<Value = Message> {
    let entry = (
        any::<u64>(),
        any::<bool>(),
        -1e9f64..1e9,
        any::<u64>(),
        proptest::option::of(vbn_strategy(2)),
    )
        .prop_map(|(offset, s, fitness, episode_steps, vbn)| ResultEntry {
            offset,
            sign: if s { 1 } else { -1 },
            fitness,
            episode_steps,
            vbn,
        });
    let update =
        (any::<u64>(), any::<bool>(), -1.0f64..1.0).prop_map(|(offset, s, weight)| UpdateEntry {
            offset,
            sign: if s { 1 } else { -1 },
            weight,
        });
    prop_oneof![
        (any::<u32>(), any::<u32>())
            .prop_map(|(worker_id, version)| Message::Hello { worker_id, version }),
        (
            any::<u32>(),
            settings_strategy(),
            "[ -~]{0,40}",
            state_strategy()
        )
            .prop_map(|(worker_id, settings, payload, state)| Message::Setup {
                worker_id,
                settings,
                payload,
                state
            }),
        (
            any::<u64>(),
            any::<u64>(),
            1e-6f64..1.0,
            any::<u32>(),
            any::<u32>(),
            any::<u32>(),
            any::<u64>()
        )
            .prop_map(
                |(
                    iteration,
                    rng_seed,
                    sigma,
                    episodes_per_eval,
                    first_index,
                    count,
                    theta_version,
                )| {
                    Message::Task(TaskMessage {
                        iteration,
                        rng_seed,
                        sigma,
                        episodes_per_eval,
                        first_index,
                        count,
                        theta_version,
                    })
                }
            ),
        (
            any::<u32>(),
            any::<u64>(),
            any::<u32>(),
            proptest::collection::vec(entry, 0..12)
        )
            .prop_map(
                |(worker_id, iteration, first_index, entries)| Message::Result(ResultMessage {
                    worker_id,
                    iteration,
                    first_index,
                    entries
                })
            ),
        (
            any::<u64>(),
            any::<u64>(),
            proptest::collection::vec(update, 0..40),
            vbn_strategy(3)
        )
            .prop_map(
                |(iteration, digest, entries, vbn)| Message::Update(UpdateMessage {
                    iteration,
                    digest,
                    entries,
                    vbn
                })
            ),
        (any::<u32>(), any::<u64>()).prop_map(|(worker_id, iteration)| Message::ResyncRequest {
            worker_id,
            iteration
        }),
        state_strategy().prop_map(|state| Message::Resync { state }),
        Just(Message::Shutdown),
    ]
}

pub fn spec_strategy() -> impl Strategy<Value = PolicySpec> {
    prop_oneof![
        (
            1usize..4,
            proptest::collection::vec(1usize..5, 0..3),
            1usize..3
        )
            .prop_map(|(o, h, a)| PolicySpec::feedforward(o, h, a)),
        (1usize..3, 1usize..3, 1usize..3, 1usize..4, 1usize..5).prop_map(|(o, a, heads, k, ff)| {
            PolicySpec::decision_transformer(
                o,
                a,
                DtSpec {
                    embed_dim: 2 * heads,
                    n_layers: 1,
                    n_heads: heads,
                    context_len: k,
                    ff_dim: ff,
                    max_ep_len: 2 * k,
                },
            )
        }),
    ]
}

pub fn checkpoint_strategy() -> impl Strategy<Value = Checkpoint> {
    (
        spec_strategy(),
        any::<u64>(),
        any::<bool>(),
        1e-6f64..1.0,
        any::<u64>(),
        "[ -~\n]{0,80}",
    )
        .prop_map(|(spec, seed, adam, sigma, iteration, text)| {
            let n = param_count(&spec).unwrap();
            let val = |i: usize, k: u64| {
                (((seed ^ k).wrapping_mul(i as u64 + 1) % 20_011) as f64 - 10_000.0) / 997.0
            };
            let theta: Vec<f64> = (0..n).map(|i| val(i, 1)).collect();
            let optimizer = if adam {
                OptimizerState::Adam {
                    m: (0..n).map(|i| val(i, 2)).collect(),
                    v: (0..n).map(|i| val(i, 3).abs()).collect(),
                    t: iteration % 1000,
                }
            } else {
                OptimizerState::Sgdm {
                    velocity: (0..n).map(|i| val(i, 4)).collect(),
                }
            };
            let d = spec.obs_dim;
            let state = EsState {
                theta: FlatParams(theta),
                sigma,
                optimizer,
                iteration,
                vbn: VbnStats {
                    count: seed % 1000,
                    mean: (0..d).map(|i| val(i, 5)).collect(),
                    m2: (0..d).map(|i| val(i, 6).abs()).collect(),
                },
                rng_seed: seed,
            };
            Checkpoint::new(spec, state, text).unwrap()
        })
}

pub fn sphere_factory() -> EvaluatorFactory {
    Arc::new(|_: &str| {
        let f = |x: &[f64]| -x.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>();
        Ok(Box::new(f) as Box<dyn Evaluator>)
    })
}

pub fn sphere_settings(population: usize, table: usize) -> EsSettings {
    EsSettings {
        population,
        optimizer: OptimizerConfig::sgdm(0.05),
        weight_decay: 0.995,
        batch_size: population / 2,
        vbn_probability: 0.0,
        episodes_per_eval: 1,
        noise_table_len: table,
    }
}

pub fn bytes_per_generation(dim: usize) -> u64 {
    let settings = sphere_settings(40, 1 << 18);
    let mut state =
        EsState::new(FlatParams(vec![0.0; dim]), 0.02, &settings.optimizer, 2, 1).unwrap();
    let (links, handles) = spawn_inproc_workers(2, sphere_factory()).unwrap();
    let mut master = Master::start(links, settings, "", &state, Duration::from_secs(60)).unwrap();
    master.iteration(&mut state).unwrap();
    let bytes = master.iteration(&mut state).unwrap().bytes;
    master.shutdown();
    for h in handles {
        h.join().unwrap().unwrap();
    }
    bytes
}

pub fn free_port() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().to_string()
}

pub fn tiny_run(dir: &std::path::Path) -> RunConfig {
    RunConfig {
        policy: PolicyKind::DecisionTransformer,
        embed_dim: 8,
        n_heads: 2,
        context_len: 2,
        ff_dim: 8,
        size_of_population: 12,
        batch_size: 5,
        num_of_iterations: 3,
        eval_episodes: 2,
        update_vbn_stats_probability: 0.3,
        noise_table_size: 1 << 14,
        master_seed: 21,
        checkpoint_dir: dir.to_path_buf(),
        ..RunConfig::default()
    }
}
