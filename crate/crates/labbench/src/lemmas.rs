//! Randomized audit of the least-norm equivalence and the cost ordering
//! between DeePC and the Hankel-identified PEM-MPC.

use deepc_core::deepc::ControlConfig;
use deepc_core::hankel::{partition, recommended_length, InitWindow, TrajectoryData};
use deepc_core::plantsim::{random_stable_lti, Plant};
use deepc_core::sysid::least_norm_gap;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::BenchResult;
use crate::run::compare_optimization_costs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCase {
    pub seed: u64,
    pub order: usize,
    pub noisy: bool,
    pub lambda_g: f64,
    /// `‖Kφ − Y_f g'‖_∞` and its allowance `1e-8 (1 + ‖Y_f g'‖_∞)`.
    pub gap: f64,
    pub gap_allowance: f64,
    pub c_deepc: f64,
    pub c_pem_mpc: f64,
}

impl LemmaCase {
    pub fn least_norm_holds(&self) -> bool {
        self.gap <= self.gap_allowance
    }

    pub fn ordering_holds(&self) -> bool {
        self.c_deepc <= self.c_pem_mpc + 1e-9 * (1.0 + self.c_pem_mpc.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub cases: Vec<LemmaCase>,
}

impl LemmaReport {
    pub fn least_norm_violations(&self) -> usize {
        self.cases.iter().filter(|c| !c.least_norm_holds()).count()
    }

    pub fn ordering_violations(&self) -> usize {
        self.cases.iter().filter(|c| !c.ordering_holds()).count()
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// One random instance: plant of order 2–6, white-input data, a fresh
/// initial window and a random future input.
pub fn lemma_case(seed: u64, noisy: bool, lambda_g: f64) -> BenchResult<LemmaCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=6);
    let m = rng.random_range(1..=2);
    let p = rng.random_range(1..=2);
    let (t_ini, horizon) = (n, 5);
    let base = random_stable_lti(n, m, p, 0.9, seed)?;
    let mut plant = if noisy { base.with_measurement_noise(vec![1e-3; p], seed ^ 0x5eed)? } else { base };
    let length = recommended_length(m, t_ini, horizon, n) + 40;
    let mut data = TrajectoryData::empty(m, p);
    for _ in 0..length + t_ini {
        let u: Vec<f64> = (0..m).map(|_| gaussian(&mut rng)).collect();
        let y = plant.step(&u)?;
        data.push(&u, &y)?;
    }
    let blocks = partition(&data.slice(0, length)?, t_ini, horizon, Some(n))?;
    let w = InitWindow::from_data(&data, t_ini, length + t_ini)?;
    let u = DVector::from_fn(m * horizon, |_, _| gaussian(&mut rng));
    let (gap, scale) = least_norm_gap(&blocks, &w, &u)?;
    let reference: Vec<f64> = (0..p).map(|_| gaussian(&mut rng)).collect();
    let cfg = ControlConfig::simple(m, p, t_ini, horizon, 1.0, 10.0, &reference, 10.0, 100.0, lambda_g)?;
    let (c_deepc, c_pem_mpc) = compare_optimization_costs(&blocks, &w, &cfg)?;
    Ok(LemmaCase { seed, order: n, noisy, lambda_g, gap, gap_allowance: 1e-8 * (1.0 + scale), c_deepc, c_pem_mpc })
}

/// `cases` instances derived from `seed`, alternating noise and `λ_g ∈ {0.1, 10}`.
pub fn check_lemmas(seed: u64, cases: usize) -> BenchResult<LemmaReport> {
    let cases = (0..cases)
        .map(|i| {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            lemma_case(s, i % 2 == 1, if i % 4 < 2 { 0.1 } else { 10.0 })
        })
        .collect::<BenchResult<Vec<_>>>()?;
    Ok(LemmaReport { cases })
}
