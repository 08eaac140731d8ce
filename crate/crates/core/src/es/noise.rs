//! Shared Gaussian noise pool and perturbation sampling.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex, OnceLock, Weak};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::seeds::{stream_rng, Purpose};
use crate::error::{Error, Result};
use crate::nn::FlatParams;

/// Pregenerated standard-normal values. A perturbation of dimension `d` is the
/// slice `values[offset..offset + d]`, optionally negated.
#[derive(Debug, PartialEq)]
pub struct NoiseTable {
    seed: u64,
    values: Vec<f32>,
}

impl NoiseTable {
    pub fn new(seed: u64, length: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..length)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        NoiseTable { seed, values }
    }

    /// Table with explicit contents, for tests and external callers.
    pub fn from_values(seed: u64, values: Vec<f32>) -> Self {
        NoiseTable { seed, values }
    }

    /// Fails when the table cannot hold a single perturbation of `dim` values.
    pub fn create(seed: u64, length: usize, dim: usize) -> Result<Self> {
        check_size(length, dim)?;
        Ok(Self::new(seed, length))
    }

    /// Process-wide instance for `(seed, length)`, generated once and shared
    /// by every in-process worker while any of them holds it.
    pub fn shared(seed: u64, length: usize, dim: usize) -> Result<Arc<Self>> {
        check_size(length, dim)?;
        type Cache = Mutex<HashMap<(u64, usize), Weak<NoiseTable>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let mut cache = CACHE
            .get_or_init(Default::default)
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        if let Some(t) = cache.get(&(seed, length)).and_then(Weak::upgrade) {
            return Ok(t);
        }
        let t = Arc::new(Self::new(seed, length));
        cache.retain(|_, w| w.strong_count() > 0);
        cache.insert((seed, length), Arc::downgrade(&t));
        Ok(t)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn slice(&self, offset: usize, dim: usize) -> Result<&[f32]> {
        offset
            .checked_add(dim)
            .filter(|&end| end <= self.values.len())
            .map(|end| &self.values[offset..end])
            .ok_or_else(|| {
                Error::Contract(format!(
                    "noise offset {offset} + dim {dim} exceeds table of {}",
                    self.values.len()
                ))
            })
    }
}

fn check_size(length: usize, dim: usize) -> Result<()> {
    if length < dim || dim == 0 {
        return Err(Error::Config(format!(
            "noise table of {length} values cannot serve {dim}-dimensional perturbations"
        )));
    }
    Ok(())
}

/// One member of the population: noise slice start and direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Perturbation {
    pub offset: u64,
    pub sign: i8,
}

/// Mirrored sampling: `population / 2` distinct offsets, each emitted as a
/// `+1` entry immediately followed by its `-1` twin.
pub fn sample_offsets(
    rng_seed: u64,
    iteration: u64,
    population: usize,
    table_len: usize,
    dim: usize,
) -> Result<Vec<Perturbation>> {
    if population == 0 || !population.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "population must be even and positive, got {population}"
        )));
    }
    check_size(table_len, dim)?;
    let slots = (table_len - dim + 1) as u64;
    let pairs = population / 2;
    if (pairs as u64) > slots {
        return Err(Error::Config(format!(
            "noise table offers {slots} offsets, {pairs} needed"
        )));
    }
    let mut rng = stream_rng(rng_seed, iteration, Purpose::Offsets);
    let mut seen = HashSet::with_capacity(pairs);
    let mut out = Vec::with_capacity(population);
    while seen.len() < pairs {
        let offset = rng.random_range(0..slots);
        if seen.insert(offset) {
            out.push(Perturbation { offset, sign: 1 });
            out.push(Perturbation { offset, sign: -1 });
        }
    }
    Ok(out)
}

/// `out = theta + sign * sigma * noise[offset..]`.
pub fn perturb_into(
    theta: &[f64],
    table: &NoiseTable,
    p: Perturbation,
    sigma: f64,
    out: &mut Vec<f64>,
) -> Result<()> {
    let noise = table.slice(p.offset as usize, theta.len())?;
    let step = f64::from(p.sign) * sigma;
    out.clear();
    out.extend(
        theta
            .iter()
            .zip(noise)
            .map(|(t, &e)| t + step * f64::from(e)),
    );
    Ok(())
}

pub fn perturb(
    theta: &FlatParams,
    table: &NoiseTable,
    p: Perturbation,
    sigma: f64,
) -> Result<FlatParams> {
    let mut out = Vec::with_capacity(theta.len());
    perturb_into(theta.as_slice(), table, p, sigma, &mut out)?;
    Ok(FlatParams(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_table() {
        assert_eq!(NoiseTable::new(5, 1000), NoiseTable::new(5, 1000));
        let a = NoiseTable::new(5, 100);
        let b = NoiseTable::new(6, 100);
        assert_ne!(a.values(), b.values());
    }

    #[test]
    fn table_moments() {
        let t = NoiseTable::new(42, 1_000_000);
        let n = t.len() as f64;
        let mean = t.values().iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let var = t
            .values()
            .iter()
            .map(|&v| (f64::from(v) - mean).powi(2))
            .sum::<f64>()
            / n;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn too_small_table_rejected() {
        assert!(NoiseTable::create(1, 10, 11).is_err());
        assert!(NoiseTable::create(1, 10, 10).is_ok());
    }

    #[test]
    fn pair_sampling() {
        let p = sample_offsets(3, 0, 2, 1000, 10).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].offset, p[1].offset);
        assert_eq!((p[0].sign, p[1].sign), (1, -1));
        assert_eq!(p, sample_offsets(3, 0, 2, 1000, 10).unwrap());
        assert!(sample_offsets(3, 0, 3, 1000, 10).is_err());
        assert!(sample_offsets(3, 0, 0, 1000, 10).is_err());
    }

    #[test]
    fn thousand_members_are_500_mirrored_pairs() {
        let p = sample_offsets(9, 4, 1000, 100_000, 50).unwrap();
        let mut counts: HashMap<u64, (u32, u32)> = HashMap::new();
        for e in &p {
            assert!(e.offset as usize + 50 <= 100_000);
            let c = counts.entry(e.offset).or_default();
            if e.sign > 0 {
                c.0 += 1
            } else {
                c.1 += 1
            }
        }
        assert_eq!(counts.len(), 500);
        assert!(counts.values().all(|&c| c == (1, 1)));
    }

    #[test]
    fn perturb_hand_case() {
        let t = NoiseTable::from_values(0, vec![1.0, -2.0]);
        let out = perturb(
            &FlatParams::zeros(2),
            &t,
            Perturbation {
                offset: 0,
                sign: -1,
            },
            0.02,
        )
        .unwrap();
        assert_eq!(out.0, vec![-0.02, 0.04]);
    }

    #[test]
    fn perturb_arithmetic() {
        let t = NoiseTable::new(1, 64);
        let theta = FlatParams(vec![0.3; 8]);
        assert_eq!(
            perturb(&theta, &t, Perturbation { offset: 3, sign: 1 }, 0.0).unwrap(),
            theta
        );
        let plus = perturb(&theta, &t, Perturbation { offset: 3, sign: 1 }, 0.02).unwrap();
        let minus = perturb(
            &theta,
            &t,
            Perturbation {
                offset: 3,
                sign: -1,
            },
            0.02,
        )
        .unwrap();
        for ((p, m), t) in plus.0.iter().zip(&minus.0).zip(&theta.0) {
            assert!(((p + m) / 2.0 - t).abs() < 1e-15);
        }
        assert!(perturb(
            &theta,
            &t,
            Perturbation {
                offset: 57,
                sign: 1
            },
            0.02
        )
        .is_err());
    }
}
