use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::vector::ModelVector;

/// Stream ids keep noise and batch sampling independent under one seed.
pub const NOISE_STREAM: u64 = 0;
pub const BATCH_STREAM: u64 = 1;

/// ChaCha8 generator for `(seed, stream)`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Zero-mean Gaussian noise with diagonal covariance.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    std_dev: Vec<f64>,
    seed: u64,
    rng: ChaCha8Rng,
}

impl NoiseModel {
    pub fn diagonal(variances: Vec<f64>, seed: u64) -> Result<Self> {
        if variances.is_empty() || variances.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(
                "noise variances must be non-empty, finite and >= 0".into(),
            ));
        }
        Ok(Self {
            std_dev: variances.iter().map(|v| v.sqrt()).collect(),
            seed,
            rng: seeded_rng(seed, NOISE_STREAM),
        })
    }

    /// `sigma2 · I`, split evenly across coordinates (so the total variance is
    /// `dim · sigma2`).
    pub fn isotropic(sigma2: f64, dim: usize, seed: u64) -> Result<Self> {
        Self::diagonal(vec![sigma2; dim], seed)
    }

    pub fn none(dim: usize) -> Self {
        Self::diagonal(vec![0.0; dim], 0).expect("zero variances are valid")
    }

    pub fn dim(&self) -> usize {
        self.std_dev.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn variances(&self) -> Vec<f64> {
        self.std_dev.iter().map(|s| s * s).collect()
    }

    /// `trace` of the covariance, the total variance `sigma²`.
    pub fn total_variance(&self) -> f64 {
        self.std_dev.iter().map(|s| s * s).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.std_dev.iter().all(|&s| s == 0.0)
    }

    pub fn sample(&mut self) -> ModelVector {
        let rng = &mut self.rng;
        ModelVector::from_vec_unchecked(
            self.std_dev
                .iter()
                .map(|&s| {
                    let z: f64 = StandardNormal.sample(rng);
                    s * z
                })
                .collect(),
        )
    }
}
