use rand::Rng;

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-10;

/// Probability vector over a finite outcome alphabet `0..len`.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Distribution("empty alphabet".into()));
        }
        if let Some((z, &p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::Distribution(format!(
                "entry {z} is {p}, expected a finite nonnegative value"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::Distribution(format!("entries sum to {sum}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(len: usize) -> Self {
        Self {
            probs: vec![1.0 / len as f64; len],
        }
    }

    pub fn point_mass(len: usize, z: usize) -> Self {
        let mut probs = vec![0.0; len];
        probs[z] = 1.0;
        Self { probs }
    }

    /// Empirical frequencies of `samples` over an alphabet of `len` outcomes.
    pub fn empirical(samples: &[usize], len: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Distribution("no samples".into()));
        }
        let mut counts = vec![0usize; len];
        for &s in samples {
            if s >= len {
                return Err(Error::Index {
                    what: "sample outcome",
                    index: s,
                    len,
                });
            }
            counts[s] += 1;
        }
        let n = samples.len() as f64;
        Ok(Self {
            probs: counts.into_iter().map(|c| c as f64 / n).collect(),
        })
    }

    pub(crate) fn from_unchecked(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, z: usize) -> f64 {
        self.probs[z]
    }

    /// `Σ_z p(z) f(z)`.
    pub fn expect<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(z, p)| p * f(z))
            .sum()
    }

    /// One inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (z, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return z;
            }
        }
        // u landed in the roundoff gap above the cumulative sum
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

/// `count` i.i.d. draws from `q`.
pub fn sample_outcomes<R: Rng + ?Sized>(q: &Distribution, count: usize, rng: &mut R) -> Vec<usize> {
    (0..count).map(|_| q.sample(rng)).collect()
}

/// `D(p‖q) = Σ p ln(p/q)`; `+∞` when `q(z) = 0 < p(z)`.
pub fn relative_entropy(p: &Distribution, q: &Distribution) -> f64 {
    p.probs
        .iter()
        .zip(&q.probs)
        .filter(|(pz, _)| **pz > 0.0)
        .map(|(&pz, &qz)| {
            if qz <= 0.0 {
                f64::INFINITY
            } else {
                pz * (pz / qz).ln()
            }
        })
        .sum()
}

/// `Q_α(p‖q) = Σ p^α q^{1-α}`.
pub fn renyi_quasi_entropy(p: &Distribution, q: &Distribution, alpha: f64) -> f64 {
    p.probs
        .iter()
        .zip(&q.probs)
        .map(|(&pz, &qz)| {
            if pz == 0.0 && alpha > 0.0 {
                0.0
            } else {
                pz.powf(alpha) * qz.powf(1.0 - alpha)
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn validation() {
        assert!(Distribution::new(vec![0.25, 0.75]).is_ok());
        assert!(Distribution::new(vec![0.5, 0.6]).is_err());
        assert!(Distribution::new(vec![-0.1, 1.1]).is_err());
        assert!(Distribution::new(vec![]).is_err());
    }

    #[test]
    fn point_mass_sampling() {
        let q = Distribution::point_mass(4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_outcomes(&q, 1000, &mut rng).iter().all(|&z| z == 2));
    }

    #[test]
    fn law_of_large_numbers() {
        let q = Distribution::new(vec![0.25, 0.75]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_outcomes(&q, 100_000, &mut rng);
        let emp = Distribution::empirical(&s, 2).unwrap();
        assert!((emp.prob(0) - 0.25).abs() < 0.01);
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let q = Distribution::new(vec![0.1, 0.2, 0.7]).unwrap();
        let a = sample_outcomes(&q, 50, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_outcomes(&q, 50, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn relative_entropy_conventions() {
        let p = Distribution::new(vec![1.0, 0.0]).unwrap();
        let q = Distribution::new(vec![0.5, 0.5]).unwrap();
        assert!((relative_entropy(&p, &q) - 2f64.ln()).abs() < 1e-15);
        let zero = Distribution::point_mass(2, 1);
        assert_eq!(relative_entropy(&p, &zero), f64::INFINITY);
        assert_eq!(relative_entropy(&q, &q), 0.0);
    }

    #[test]
    fn renyi_of_identical_is_one() {
        let p = Distribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        for a in [0.5, 2.0, 3.7] {
            assert!((renyi_quasi_entropy(&p, &p, a) - 1.0).abs() < 1e-14);
        }
    }
}
