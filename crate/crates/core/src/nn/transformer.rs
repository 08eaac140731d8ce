//! Forward-only causal transformer over flat `[tokens][embed_dim]` buffers.
//!
//! Blocks are pre-norm: `h = x + attn(ln1(x))`, `y = h + ff2(tanh(ff1(ln2(h))))`.
//! Output row `i` is computed from rows `0..=i` only, so appending tokens never
//! changes earlier outputs.

use super::params::{dot, BlockView, DtView, Norm};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

pub fn layer_norm(x: &[f64], norm: &Norm<'_>, out: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    for (((o, v), s), b) in out.iter_mut().zip(x).zip(norm.scale).zip(norm.shift) {
        *o = (v - mean) * inv * s + b;
    }
}

/// Numerically stable in-place softmax.
pub fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
}

fn project_all(d: &super::params::Dense<'_>, seq: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * d.rows];
    for (x, o) in seq.chunks_exact(d.cols).zip(out.chunks_exact_mut(d.rows)) {
        d.apply(x, o);
    }
    out
}

/// Attention sublayer outputs (after the output projection) for query rows
/// `first..n`; keys and values come from rows `0..n`.
fn attention_rows(block: &BlockView<'_>, seq: &[f64], first: usize) -> Vec<f64> {
    let e = block.query.cols;
    let n = seq.len() / e;
    let heads = block.n_heads;
    let hd = e / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let keys = project_all(&block.key, seq, n);
    let values = project_all(&block.value, seq, n);

    let rows = n - first;
    let mut out = vec![0.0; rows * e];
    let mut q = vec![0.0; e];
    let mut mixed = vec![0.0; e];
    let mut logits = Vec::with_capacity(n);
    for (r, o) in out.chunks_exact_mut(e).enumerate() {
        let i = first + r;
        block.query.apply(&seq[i * e..(i + 1) * e], &mut q);
        mixed.iter_mut().for_each(|m| *m = 0.0);
        for h in 0..heads {
            let hs = h * hd..(h + 1) * hd;
            logits.clear();
            logits.extend((0..=i).map(|j| dot(&q[hs.clone()], &keys[j * e..][hs.clone()]) * scale));
            softmax_in_place(&mut logits);
            for (j, p) in logits.iter().enumerate() {
                let v = &values[j * e..][hs.clone()];
                for (m, vv) in mixed[hs.clone()].iter_mut().zip(v) {
                    *m += p * vv;
                }
            }
        }
        block.out.apply(&mixed, o);
    }
    out
}

/// Masked multi-head self-attention with output projection, applied to `seq`
/// as given (no normalization, no residual).
pub fn causal_self_attention(block: &BlockView<'_>, seq: &[f64]) -> Result<Vec<f64>> {
    let e = block.query.cols;
    if seq.is_empty() || !seq.len().is_multiple_of(e) {
        return Err(Error::Contract(format!(
            "attention input of {} values is not a nonempty multiple of embed_dim {e}",
            seq.len()
        )));
    }
    Ok(attention_rows(block, seq, 0))
}

/// Runs one block in place on rows `first..n`; rows before `first` are left as
/// they were (only valid when nothing downstream reads them).
fn block_forward(block: &BlockView<'_>, x: &mut [f64], first: usize) {
    let e = block.query.cols;
    let n = x.len() / e;
    let mut normed = vec![0.0; n * e];
    for (xi, ni) in x.chunks_exact(e).zip(normed.chunks_exact_mut(e)) {
        layer_norm(xi, &block.ln1, ni);
    }
    let attn = attention_rows(block, &normed, first);
    let mut h2 = vec![0.0; e];
    let mut hidden = vec![0.0; block.ff1.rows];
    let mut ff = vec![0.0; e];
    for (r, a) in attn.chunks_exact(e).enumerate() {
        let row = &mut x[(first + r) * e..(first + r + 1) * e];
        row.iter_mut().zip(a).for_each(|(v, a)| *v += a);
        layer_norm(row, &block.ln2, &mut h2);
        block.ff1.apply(&h2, &mut hidden);
        hidden.iter_mut().for_each(|v| *v = v.tanh());
        block.ff2.apply(&hidden, &mut ff);
        row.iter_mut().zip(&ff).for_each(|(v, f)| *v += f);
    }
}

fn check_tokens(view: &DtView<'_>, tokens: &[f64]) -> Result<usize> {
    let e = view.spec.embed_dim;
    if tokens.is_empty() || !tokens.len().is_multiple_of(e) {
        return Err(Error::Contract(format!(
            "token buffer of {} values is not a nonempty multiple of embed_dim {e}",
            tokens.len()
        )));
    }
    let n = tokens.len() / e;
    if n > view.spec.max_tokens() {
        return Err(Error::Contract(format!(
            "sequence of {n} tokens exceeds the {}-token context",
            view.spec.max_tokens()
        )));
    }
    Ok(n)
}

/// Output states for every token.
pub fn transformer_forward(view: &DtView<'_>, tokens: &[f64]) -> Result<Vec<f64>> {
    check_tokens(view, tokens)?;
    let mut x = tokens.to_vec();
    for block in &view.blocks {
        block_forward(block, &mut x, 0);
    }
    Ok(x)
}

/// Output state of the last token only. Equal to the last row of
/// [`transformer_forward`]; the final block skips rows nobody reads.
pub fn transformer_forward_last(view: &DtView<'_>, tokens: &[f64]) -> Result<Vec<f64>> {
    let n = check_tokens(view, tokens)?;
    let e = view.spec.embed_dim;
    let mut x = tokens.to_vec();
    let layers = view.blocks.len();
    for (l, block) in view.blocks.iter().enumerate() {
        let first = if l + 1 == layers { n - 1 } else { 0 };
        block_forward(block, &mut x, first);
    }
    Ok(x[(n - 1) * e..].to_vec())
}
