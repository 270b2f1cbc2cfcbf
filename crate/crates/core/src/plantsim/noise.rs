use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// White Gaussian noise of a given per-sample variance from a seeded ChaCha8 stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub noise_power: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(noise_power: f64, seed: u64) -> Self {
        Self { noise_power, seed }
    }

    pub fn source(&self) -> GaussianNoise {
        GaussianNoise::new(self.noise_power, self.seed)
    }
}

/// Stateful generator behind a [`NoiseSpec`].
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
}

impl GaussianNoise {
    /// Negative or non-finite power is treated as zero.
    pub fn new(noise_power: f64, seed: u64) -> Self {
        let normal = (noise_power.is_finite() && noise_power > 0.0)
            .then(|| Normal::new(0.0, noise_power.sqrt()).expect("finite positive standard deviation"));
        Self { rng: ChaCha8Rng::seed_from_u64(seed), normal }
    }

    pub fn sample(&mut self) -> f64 {
        match &self.normal {
            Some(n) => n.sample(&mut self.rng),
            None => 0.0,
        }
    }
}

pub fn sample_noise(spec: &NoiseSpec, count: usize) -> Vec<f64> {
    let mut src = spec.source();
    (0..count).map(|_| src.sample()).collect()
}
