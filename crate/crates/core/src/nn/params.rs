//! Flat parameter vectors and structured, borrowed views over them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::spec::{layout, Architecture, DtSpec, PolicySpec, TensorRole};
use crate::error::{check_len, Error, Result};

/// One individual: every weight of a policy, in layout order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FlatParams(pub Vec<f64>);

impl FlatParams {
    pub fn zeros(len: usize) -> Self {
        FlatParams(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for FlatParams {
    fn from(v: Vec<f64>) -> Self {
        FlatParams(v)
    }
}

/// Dense affine map, weights row-major `[rows][cols]`.
#[derive(Debug, Clone, Copy)]
pub struct Dense<'a> {
    pub weight: &'a [f64],
    pub bias: &'a [f64],
    pub rows: usize,
    pub cols: usize,
}

impl<'a> Dense<'a> {
    pub fn new(weight: &'a [f64], bias: &'a [f64], rows: usize, cols: usize) -> Result<Self> {
        check_len("dense weight", rows * cols, weight.len())?;
        check_len("dense bias", rows, bias.len())?;
        Ok(Dense {
            weight,
            bias,
            rows,
            cols,
        })
    }

    /// `out = W x + b`.
    #[inline]
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for ((o, row), b) in out
            .iter_mut()
            .zip(self.weight.chunks_exact(self.cols))
            .zip(self.bias)
        {
            *o = b + dot(row, x);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.apply(x, &mut out);
        out
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Layer-norm scale and shift.
#[derive(Debug, Clone, Copy)]
pub struct Norm<'a> {
    pub scale: &'a [f64],
    pub shift: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct MlpView<'a> {
    pub layers: Vec<Dense<'a>>,
}

#[derive(Debug, Clone)]
pub struct BlockView<'a> {
    pub ln1: Norm<'a>,
    pub query: Dense<'a>,
    pub key: Dense<'a>,
    pub value: Dense<'a>,
    pub out: Dense<'a>,
    pub ln2: Norm<'a>,
    pub ff1: Dense<'a>,
    pub ff2: Dense<'a>,
    pub n_heads: usize,
}

#[derive(Debug, Clone)]
pub struct DtView<'a> {
    pub spec: DtSpec,
    pub embed_rtg: Dense<'a>,
    pub embed_obs: Dense<'a>,
    pub embed_act: Dense<'a>,
    /// `[max_ep_len][embed_dim]`.
    pub position: &'a [f64],
    pub blocks: Vec<BlockView<'a>>,
    pub ln_final: Norm<'a>,
    pub decode: Dense<'a>,
}

#[derive(Debug, Clone)]
pub enum PolicyView<'a> {
    Feedforward(MlpView<'a>),
    Transformer(DtView<'a>),
}

impl<'a> PolicyView<'a> {
    /// Tensors in layout order.
    pub fn tensors(&self) -> Vec<&'a [f64]> {
        let mut out = Vec::new();
        let dense = |d: &Dense<'a>, out: &mut Vec<&'a [f64]>| {
            out.push(d.weight);
            out.push(d.bias);
        };
        let norm = |n: &Norm<'a>, out: &mut Vec<&'a [f64]>| {
            out.push(n.scale);
            out.push(n.shift);
        };
        match self {
            PolicyView::Feedforward(m) => m.layers.iter().for_each(|d| dense(d, &mut out)),
            PolicyView::Transformer(t) => {
                dense(&t.embed_rtg, &mut out);
                dense(&t.embed_obs, &mut out);
                dense(&t.embed_act, &mut out);
                out.push(t.position);
                for b in &t.blocks {
                    norm(&b.ln1, &mut out);
                    for d in [&b.query, &b.key, &b.value, &b.out] {
                        dense(d, &mut out);
                    }
                    norm(&b.ln2, &mut out);
                    dense(&b.ff1, &mut out);
                    dense(&b.ff2, &mut out);
                }
                norm(&t.ln_final, &mut out);
                dense(&t.decode, &mut out);
            }
        }
        out
    }
}

struct Cursor<'a> {
    rest: &'a [f64],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> &'a [f64] {
        let (head, tail) = self.rest.split_at(n);
        self.rest = tail;
        head
    }

    fn dense(&mut self, rows: usize, cols: usize) -> Dense<'a> {
        let weight = self.take(rows * cols);
        let bias = self.take(rows);
        Dense {
            weight,
            bias,
            rows,
            cols,
        }
    }

    fn norm(&mut self, width: usize) -> Norm<'a> {
        let scale = self.take(width);
        let shift = self.take(width);
        Norm { scale, shift }
    }
}

/// Splits a flat vector into per-tensor views following [`layout`].
pub fn unflatten<'a>(params: &'a [f64], spec: &PolicySpec) -> Result<PolicyView<'a>> {
    let expected = super::spec::param_count(spec)?;
    if params.len() != expected {
        return Err(Error::Layout {
            expected,
            actual: params.len(),
        });
    }
    let mut c = Cursor { rest: params };
    let view = match &spec.arch {
        Architecture::Feedforward { hidden } => {
            let mut layers = Vec::with_capacity(hidden.len() + 1);
            let mut fan_in = spec.obs_dim;
            for &width in hidden.iter().chain(std::iter::once(&spec.act_dim)) {
                layers.push(c.dense(width, fan_in));
                fan_in = width;
            }
            PolicyView::Feedforward(MlpView { layers })
        }
        Architecture::DecisionTransformer(dt) => {
            let e = dt.embed_dim;
            let embed_rtg = c.dense(e, 1);
            let embed_obs = c.dense(e, spec.obs_dim);
            let embed_act = c.dense(e, spec.act_dim);
            let position = c.take(dt.max_ep_len * e);
            let blocks = (0..dt.n_layers)
                .map(|_| BlockView {
                    ln1: c.norm(e),
                    query: c.dense(e, e),
                    key: c.dense(e, e),
                    value: c.dense(e, e),
                    out: c.dense(e, e),
                    ln2: c.norm(e),
                    ff1: c.dense(dt.ff_dim, e),
                    ff2: c.dense(e, dt.ff_dim),
                    n_heads: dt.n_heads,
                })
                .collect();
            let ln_final = c.norm(e);
            let decode = c.dense(spec.act_dim, e);
            PolicyView::Transformer(DtView {
                spec: *dt,
                embed_rtg,
                embed_obs,
                embed_act,
                position,
                blocks,
                ln_final,
                decode,
            })
        }
    };
    debug_assert!(c.rest.is_empty());
    Ok(view)
}

/// Concatenates views back into a flat vector.
pub fn flatten(view: &PolicyView<'_>) -> FlatParams {
    FlatParams(view.tensors().concat())
}

/// Gain applied to the output layer at initialization; keeps initial actions small.
const OUTPUT_GAIN: f64 = 0.1;
const POSITION_STD: f64 = 0.1;

/// Seeded initialization: scaled-normal dense weights, zero biases, unit norm scales.
pub fn init_params(spec: &PolicySpec, seed: u64) -> Result<FlatParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for t in layout(spec)? {
        match t.role {
            TensorRole::Weight | TensorRole::OutputWeight => {
                let gain = if t.role == TensorRole::OutputWeight {
                    OUTPUT_GAIN
                } else {
                    1.0
                };
                let std = gain / (t.cols as f64).sqrt();
                out.extend((0..t.len()).map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * std
                }));
            }
            TensorRole::Position => out.extend((0..t.len()).map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * POSITION_STD
            })),
            TensorRole::NormScale => out.extend(std::iter::repeat_n(1.0, t.len())),
            TensorRole::Bias | TensorRole::NormShift => {
                out.extend(std::iter::repeat_n(0.0, t.len()))
            }
        }
    }
    Ok(FlatParams(out))
}
