use super::noise::{NoiseTable, Perturbation};
use crate::error::{check_len, Error, Result};

/// Natural-gradient estimate `(1 / (n * sigma)) * sum_i w_i * sign_i * noise_i`.
///
/// Entries are summed in order, `batch_size` at a time; batch partial sums are
/// then added in batch order. The result is a pure function of its inputs, so
/// every node holding the same list reconstructs identical bits.
pub fn gradient_estimate_batched(
    weights: &[f64],
    entries: &[Perturbation],
    table: &NoiseTable,
    sigma: f64,
    dim: usize,
    batch_size: usize,
) -> Result<Vec<f64>> {
    check_len("shaped weights", entries.len(), weights.len())?;
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::Config(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let mut total = vec![0.0; dim];
    let mut batch = vec![0.0; dim];
    for (ws, es) in weights.chunks(batch_size).zip(entries.chunks(batch_size)) {
        batch.iter_mut().for_each(|b| *b = 0.0);
        for (&w, p) in ws.iter().zip(es) {
            let coef = w * f64::from(p.sign);
            if coef == 0.0 {
                continue;
            }
            let noise = table.slice(p.offset as usize, dim)?;
            for (b, &e) in batch.iter_mut().zip(noise) {
                *b += coef * f64::from(e);
            }
        }
        total.iter_mut().zip(&batch).for_each(|(t, b)| *t += b);
    }
    let scale = 1.0 / (entries.len() as f64 * sigma);
    total.iter_mut().for_each(|t| *t *= scale);
    Ok(total)
}

pub fn gradient_estimate(
    weights: &[f64],
    entries: &[Perturbation],
    table: &NoiseTable,
    sigma: f64,
    dim: usize,
) -> Result<Vec<f64>> {
    gradient_estimate_batched(weights, entries, table, sigma, dim, entries.len().max(1))
}
