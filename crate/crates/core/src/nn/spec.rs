//! Policy architectures and the flat parameter layout.
//!
//! The layout returned by [`layout`] is the single description of how a flat
//! parameter vector is carved into tensors. Checkpoints, noise application and
//! the structured views in [`super::params`] all follow it.
//!
//! Every dense tensor is stored row-major as `[out][in]`, immediately followed
//! by its bias `[out]`. Layer-norm parameters are stored as scale then shift.
//!
//! Feedforward policies: one dense layer per consecutive pair in
//! `obs_dim, hidden..., act_dim`.
//!
//! Decision transformer, in order:
//!
//! | tensor            | shape                    |
//! |-------------------|--------------------------|
//! | `embed_rtg`       | `[E][1]` + `[E]`         |
//! | `embed_obs`       | `[E][obs]` + `[E]`       |
//! | `embed_act`       | `[E][act]` + `[E]`       |
//! | `position`        | `[max_ep_len][E]`        |
//! | per block `l`:    |                          |
//! | `ln1`             | `[E]` scale + `[E]` shift|
//! | `query`/`key`/`value`/`out` | `[E][E]` + `[E]` each |
//! | `ln2`             | `[E]` + `[E]`            |
//! | `ff1`             | `[F][E]` + `[F]`         |
//! | `ff2`             | `[E][F]` + `[E]`         |
//! | `ln_final`        | `[E]` + `[E]`            |
//! | `decode`          | `[act][E]` + `[act]`     |
//!
//! Head `h` of a block uses rows `h*d..(h+1)*d` of the query, key and value
//! matrices, with `d = E / n_heads`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub arch: Architecture,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// Tanh hidden layers, linear output.
    Feedforward {
        hidden: Vec<usize>,
    },
    DecisionTransformer(DtSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DtSpec {
    pub embed_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Number of timesteps (triplets) the model attends over, current one included.
    pub context_len: usize,
    pub ff_dim: usize,
    /// Size of the learned timestep table; episodes may not run longer.
    pub max_ep_len: usize,
}

impl DtSpec {
    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.n_heads
    }

    /// Longest token sequence the transformer accepts.
    pub fn max_tokens(&self) -> usize {
        3 * self.context_len
    }
}

/// What a tensor in the layout holds. Used by initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    Weight,
    OutputWeight,
    Bias,
    NormScale,
    NormShift,
    Position,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub role: TensorRole,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PolicySpec {
    pub fn feedforward(obs_dim: usize, hidden: Vec<usize>, act_dim: usize) -> Self {
        PolicySpec {
            obs_dim,
            act_dim,
            arch: Architecture::Feedforward { hidden },
        }
    }

    pub fn decision_transformer(obs_dim: usize, act_dim: usize, dt: DtSpec) -> Self {
        PolicySpec {
            obs_dim,
            act_dim,
            arch: Architecture::DecisionTransformer(dt),
        }
    }

    pub fn dt(&self) -> Option<&DtSpec> {
        match &self.arch {
            Architecture::DecisionTransformer(dt) => Some(dt),
            Architecture::Feedforward { .. } => None,
        }
    }

    pub fn is_transformer(&self) -> bool {
        self.dt().is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.act_dim == 0 {
            return Err(Error::Spec("obs_dim and act_dim must be positive".into()));
        }
        match &self.arch {
            Architecture::Feedforward { hidden } => {
                if hidden.contains(&0) {
                    return Err(Error::Spec("hidden layer sizes must be positive".into()));
                }
            }
            Architecture::DecisionTransformer(dt) => {
                let fields = [
                    ("embed_dim", dt.embed_dim),
                    ("n_layers", dt.n_layers),
                    ("n_heads", dt.n_heads),
                    ("context_len", dt.context_len),
                    ("ff_dim", dt.ff_dim),
                    ("max_ep_len", dt.max_ep_len),
                ];
                if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
                    return Err(Error::Spec(format!("{name} must be positive")));
                }
                if dt.embed_dim % dt.n_heads != 0 {
                    return Err(Error::Spec(format!(
                        "embed_dim {} is not divisible by n_heads {}",
                        dt.embed_dim, dt.n_heads
                    )));
                }
            }
        }
        Ok(())
    }
}

fn dense(out: &mut Vec<TensorSpec>, name: &str, rows: usize, cols: usize, role: TensorRole) {
    out.push(TensorSpec {
        name: format!("{name}.weight"),
        rows,
        cols,
        role,
    });
    out.push(TensorSpec {
        name: format!("{name}.bias"),
        rows,
        cols: 1,
        role: TensorRole::Bias,
    });
}

fn norm(out: &mut Vec<TensorSpec>, name: &str, width: usize) {
    out.push(TensorSpec {
        name: format!("{name}.scale"),
        rows: width,
        cols: 1,
        role: TensorRole::NormScale,
    });
    out.push(TensorSpec {
        name: format!("{name}.shift"),
        rows: width,
        cols: 1,
        role: TensorRole::NormShift,
    });
}

/// Ordered list of every tensor in the flat parameter vector.
pub fn layout(spec: &PolicySpec) -> Result<Vec<TensorSpec>> {
    spec.validate()?;
    let mut out = Vec::new();
    match &spec.arch {
        Architecture::Feedforward { hidden } => {
            let widths: Vec<usize> = std::iter::once(spec.obs_dim)
                .chain(hidden.iter().copied())
                .chain(std::iter::once(spec.act_dim))
                .collect();
            let last = widths.len() - 2;
            for (i, pair) in widths.windows(2).enumerate() {
                let role = if i == last {
                    TensorRole::OutputWeight
                } else {
                    TensorRole::Weight
                };
                dense(&mut out, &format!("layer{i}"), pair[1], pair[0], role);
            }
        }
        Architecture::DecisionTransformer(dt) => {
            let e = dt.embed_dim;
            dense(&mut out, "embed_rtg", e, 1, TensorRole::Weight);
            dense(&mut out, "embed_obs", e, spec.obs_dim, TensorRole::Weight);
            dense(&mut out, "embed_act", e, spec.act_dim, TensorRole::Weight);
            out.push(TensorSpec {
                name: "position".into(),
                rows: dt.max_ep_len,
                cols: e,
                role: TensorRole::Position,
            });
            for l in 0..dt.n_layers {
                norm(&mut out, &format!("block{l}.ln1"), e);
                for proj in ["query", "key", "value", "out"] {
                    dense(
                        &mut out,
                        &format!("block{l}.{proj}"),
                        e,
                        e,
                        TensorRole::Weight,
                    );
                }
                norm(&mut out, &format!("block{l}.ln2"), e);
                dense(
                    &mut out,
                    &format!("block{l}.ff1"),
                    dt.ff_dim,
                    e,
                    TensorRole::Weight,
                );
                dense(
                    &mut out,
                    &format!("block{l}.ff2"),
                    e,
                    dt.ff_dim,
                    TensorRole::Weight,
                );
            }
            norm(&mut out, "ln_final", e);
            dense(
                &mut out,
                "decode",
                spec.act_dim,
                e,
                TensorRole::OutputWeight,
            );
        }
    }
    Ok(out)
}

pub fn param_count(spec: &PolicySpec) -> Result<usize> {
    Ok(layout(spec)?.iter().map(TensorSpec::len).sum())
}
