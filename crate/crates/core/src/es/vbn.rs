//! Running observation statistics for virtual batch normalization.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};

/// Variance floor added before taking the square root.
pub const VBN_EPS: f64 = 1e-8;

/// Count, mean and sum of squared deviations, kept in the pairwise-merge form
/// so that partial statistics from different workers combine exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbnStats {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl VbnStats {
    pub fn new(dim: usize) -> Self {
        VbnStats {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Statistics of one batch, computed in two passes.
    pub fn from_batch<R: AsRef<[f64]>>(dim: usize, batch: &[R]) -> Result<Self> {
        let mut s = VbnStats::new(dim);
        if batch.is_empty() {
            return Ok(s);
        }
        for row in batch {
            let row = row.as_ref();
            check_len("vbn observation", dim, row.len())?;
            s.mean.iter_mut().zip(row).for_each(|(m, x)| *m += x);
        }
        let n = batch.len() as f64;
        s.mean.iter_mut().for_each(|m| *m /= n);
        for row in batch {
            for ((q, m), x) in s.m2.iter_mut().zip(&s.mean).zip(row.as_ref()) {
                let d = x - m;
                *q += d * d;
            }
        }
        s.count = batch.len() as u64;
        Ok(s)
    }

    /// Folds a batch of observations into the running statistics.
    pub fn update<R: AsRef<[f64]>>(&mut self, batch: &[R]) -> Result<()> {
        let b = Self::from_batch(self.dim(), batch)?;
        self.merge(&b)
    }

    /// Parallel combination of two statistic sets.
    pub fn merge(&mut self, other: &VbnStats) -> Result<()> {
        check_len("vbn merge", self.dim(), other.dim())?;
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        for i in 0..self.dim() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![0.0; self.dim()];
        }
        let n = self.count as f64;
        self.m2.iter().map(|q| q / n).collect()
    }

    /// `(obs - mean) / sqrt(var + eps)`; the identity while no data has been seen.
    pub fn normalize(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let mut out = obs.to_vec();
        self.normalize_in_place(&mut out)?;
        Ok(out)
    }

    pub fn normalize_in_place(&self, obs: &mut [f64]) -> Result<()> {
        check_len("vbn observation", self.dim(), obs.len())?;
        if self.count == 0 {
            return Ok(());
        }
        let n = self.count as f64;
        for ((x, m), q) in obs.iter_mut().zip(&self.mean).zip(&self.m2) {
            *x = (*x - m) / (q / n + VBN_EPS).sqrt();
        }
        Ok(())
    }
}
