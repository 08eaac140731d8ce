//! Return-conditioned fitness: an individual is scored by how closely the
//! returns it achieves match the returns it was asked for.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_len, Error, Result};

/// `-sum_k |return_k - desired_k|`. Zero is the maximum.
pub fn rtg_fitness(returns: &[f64], desired: &[f64]) -> Result<f64> {
    check_len("desired returns", returns.len(), desired.len())?;
    if returns.is_empty() {
        return Err(Error::Contract(
            "rtg_fitness needs at least one evaluation".into(),
        ));
    }
    Ok(-returns
        .iter()
        .zip(desired)
        .map(|(r, d)| (r - d).abs())
        .sum::<f64>())
}

/// Draws a target return from `Normal(mean + alpha * (best - mean), sigma_r)`.
pub fn sample_desired_return<R: Rng + ?Sized>(
    prev_best: f64,
    prev_mean: f64,
    alpha: f64,
    sigma_r: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    if !(sigma_r >= 0.0) {
        return Err(Error::Config(format!(
            "sigma_r must be non-negative, got {sigma_r}"
        )));
    }
    let mu = prev_mean + alpha * (prev_best - prev_mean);
    if sigma_r == 0.0 {
        return Ok(mu);
    }
    let dist = Normal::new(mu, sigma_r).map_err(|e| Error::Config(e.to_string()))?;
    Ok(dist.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fitness_examples() {
        assert_eq!(rtg_fitness(&[3.0, -1.0], &[3.0, -1.0]).unwrap(), 0.0);
        assert_eq!(rtg_fitness(&[5.0], &[7.0]).unwrap(), -2.0);
        let base = rtg_fitness(&[5.0], &[7.0]).unwrap();
        assert_eq!(rtg_fitness(&[5.0, 4.0], &[7.0, 4.0]).unwrap(), base);
        assert!(rtg_fitness(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rtg_fitness(&[], &[]).is_err());
    }

    #[test]
    fn deterministic_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            sample_desired_return(20.0, 10.0, 0.5, 0.0, &mut rng).unwrap(),
            15.0
        );
        assert_eq!(
            sample_desired_return(20.0, 10.0, 0.0, 0.0, &mut rng).unwrap(),
            10.0
        );
        assert_eq!(
            sample_desired_return(20.0, 10.0, 1.0, 0.0, &mut rng).unwrap(),
            20.0
        );
        assert!(sample_desired_return(20.0, 10.0, 1.5, 0.0, &mut rng).is_err());
    }

    #[test]
    fn monte_carlo_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| sample_desired_return(20.0, 10.0, 0.5, 2.0, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 15.0).abs() < 0.05, "{mean}");
    }
}
