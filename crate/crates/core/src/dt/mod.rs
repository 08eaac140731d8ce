//! Decision transformer agent: return-to-go bookkeeping, token assembly and
//! action decoding on top of [`crate::nn`].
//!
//! For every timestep three tokens are embedded, each with its own dense map:
//! return-to-go, observation, action. All three receive the same learned
//! position row, indexed by the episode timestep. The current timestep
//! contributes a return-to-go token, an observation token and a placeholder
//! action token embedded from the zero vector. The window covers the current
//! timestep plus at most `context_len - 1` recorded ones, so sequences never
//! exceed `3 * context_len` tokens.

mod context;

pub use context::{init_context, EpisodeContext, RtgConfig, Triplet};

use crate::error::{check_len, Error, Result};
use crate::nn::params::{DtView, PolicyView};
use crate::nn::transformer::{layer_norm, transformer_forward_last};
use crate::nn::{unflatten, PolicySpec};

#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub embed_dim: usize,
    /// `[tokens][embed_dim]`, ordered rtg, obs, act per timestep.
    pub data: Vec<f64>,
    pub positions: Vec<usize>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn token(&self, i: usize) -> &[f64] {
        &self.data[i * self.embed_dim..(i + 1) * self.embed_dim]
    }
}

impl<'a> DtView<'a> {
    fn position_row(&self, t: usize) -> Result<&'a [f64]> {
        let e = self.spec.embed_dim;
        if t >= self.spec.max_ep_len {
            return Err(Error::Config(format!(
                "timestep {t} exceeds the position table of {} entries",
                self.spec.max_ep_len
            )));
        }
        Ok(&self.position[t * e..(t + 1) * e])
    }

    fn push_token(
        &self,
        out: &mut TokenSequence,
        embed: &crate::nn::params::Dense<'_>,
        input: &[f64],
        pos: &[f64],
        t: usize,
    ) {
        let start = out.data.len();
        out.data.resize(start + self.spec.embed_dim, 0.0);
        let slot = &mut out.data[start..];
        embed.apply(input, slot);
        slot.iter_mut().zip(pos).for_each(|(v, p)| *v += p);
        out.positions.push(t);
    }

    /// Embeds the context window plus the current timestep.
    pub fn build_tokens(&self, ctx: &EpisodeContext, current_obs: &[f64]) -> Result<TokenSequence> {
        let obs_dim = self.embed_obs.cols;
        let act_dim = self.embed_act.cols;
        check_len("observation", obs_dim, current_obs.len())?;
        let past = ctx.len().min(self.spec.context_len - 1);
        let mut out = TokenSequence {
            embed_dim: self.spec.embed_dim,
            data: Vec::with_capacity(3 * (past + 1) * self.spec.embed_dim),
            positions: Vec::with_capacity(3 * (past + 1)),
        };
        for tr in ctx.triplets().skip(ctx.len() - past) {
            check_len("recorded action", act_dim, tr.act.len())?;
            check_len("recorded observation", obs_dim, tr.obs.len())?;
            let pos = self.position_row(tr.timestep)?;
            self.push_token(&mut out, &self.embed_rtg, &[tr.rtg], pos, tr.timestep);
            self.push_token(&mut out, &self.embed_obs, &tr.obs, pos, tr.timestep);
            self.push_token(&mut out, &self.embed_act, &tr.act, pos, tr.timestep);
        }
        let t = ctx.timestep();
        let pos = self.position_row(t)?;
        self.push_token(&mut out, &self.embed_rtg, &[ctx.current_rtg()], pos, t);
        self.push_token(&mut out, &self.embed_obs, current_obs, pos, t);
        let placeholder = vec![0.0; act_dim];
        self.push_token(&mut out, &self.embed_act, &placeholder, pos, t);
        Ok(out)
    }

    /// Action for the current timestep, squashed into `[-1, 1]`.
    pub fn act(&self, ctx: &EpisodeContext, current_obs: &[f64]) -> Result<Vec<f64>> {
        let tokens = self.build_tokens(ctx, current_obs)?;
        let e = self.spec.embed_dim;
        // Decode from the observation token. The placeholder after it is
        // masked from that position, so it can be left out of the pass.
        let upto = (tokens.len() - 1) * e;
        let state = transformer_forward_last(self, &tokens.data[..upto])?;
        Ok(self.decode_state(&state))
    }

    /// Final layer norm, linear decoder and tanh.
    pub fn decode_state(&self, state: &[f64]) -> Vec<f64> {
        let mut normed = vec![0.0; state.len()];
        layer_norm(state, &self.ln_final, &mut normed);
        let mut a = self.decode.forward(&normed);
        a.iter_mut().for_each(|v| *v = v.tanh());
        a
    }
}

pub(crate) fn dt_view<'a>(params: &'a [f64], spec: &PolicySpec) -> Result<DtView<'a>> {
    match unflatten(params, spec)? {
        PolicyView::Transformer(v) => Ok(v),
        PolicyView::Feedforward(_) => Err(Error::Contract(
            "decision-transformer operation on a feedforward spec".into(),
        )),
    }
}

pub fn build_tokens(
    params: &[f64],
    spec: &PolicySpec,
    ctx: &EpisodeContext,
    current_obs: &[f64],
) -> Result<TokenSequence> {
    dt_view(params, spec)?.build_tokens(ctx, current_obs)
}

pub fn act(
    params: &[f64],
    spec: &PolicySpec,
    ctx: &EpisodeContext,
    current_obs: &[f64],
) -> Result<Vec<f64>> {
    dt_view(params, spec)?.act(ctx, current_obs)
}
