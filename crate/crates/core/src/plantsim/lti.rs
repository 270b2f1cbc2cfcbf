use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::noise::GaussianNoise;
use super::Plant;
use crate::error::{invalid, Error, Result};
use crate::matquad::{check_finite, eigenvalues, rank_with_tolerance, DEFAULT_RTOL};

/// Discrete-time LTI plant with optional per-output measurement noise.
#[derive(Debug, Clone)]
pub struct LtiPlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    x: DVector<f64>,
    noise_std: Vec<f64>,
    noise: Option<GaussianNoise>,
}

impl LtiPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(invalid("A must be square and nonempty"));
        }
        let (m, p) = (b.ncols(), c.nrows());
        if b.nrows() != n || c.ncols() != n || d.shape() != (p, m) || m == 0 || p == 0 {
            return Err(invalid(format!(
                "inconsistent shapes: A {:?}, B {:?}, C {:?}, D {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        for (mat, name) in [(&a, "A"), (&b, "B"), (&c, "C"), (&d, "D")] {
            check_finite(mat, name)?;
        }
        Ok(Self { a, b, c, d, x: DVector::zeros(n), noise_std: vec![0.0; p], noise: None })
    }

    /// Adds white measurement noise with the given standard deviation per output.
    pub fn with_measurement_noise(mut self, std: Vec<f64>, seed: u64) -> Result<Self> {
        if std.len() != self.outputs() || std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(invalid("need one finite non-negative standard deviation per output"));
        }
        self.noise_std = std;
        self.noise = Some(GaussianNoise::new(1.0, seed));
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn state(&self) -> &DVector<f64> {
        &self.x
    }
    pub fn set_state(&mut self, x: DVector<f64>) -> Result<()> {
        if x.len() != self.order() {
            return Err(invalid("state dimension mismatch"));
        }
        self.x = x;
        Ok(())
    }

    /// Noise-free output for state `x` and input `u`.
    pub fn output_of(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.c * x + &self.d * u
    }
}

impl Plant for LtiPlant {
    fn inputs(&self) -> usize {
        self.b.ncols()
    }
    fn outputs(&self) -> usize {
        self.c.nrows()
    }
    fn step(&mut self, u: &[f64]) -> Result<Vec<f64>> {
        lti_step(self, u).map(|y| y.as_slice().to_vec())
    }
}

/// `y = Cx + Du + noise` from the pre-update state, then `x ← Ax + Bu`.
pub fn lti_step(plant: &mut LtiPlant, u: &[f64]) -> Result<DVector<f64>> {
    if u.len() != plant.inputs() {
        return Err(invalid(format!("input has {} entries, plant expects {}", u.len(), plant.inputs())));
    }
    if !u.iter().all(|v| v.is_finite()) {
        return Err(invalid("non-finite input"));
    }
    let u = DVector::from_column_slice(u);
    let mut y = plant.output_of(&plant.x, &u);
    if let Some(noise) = plant.noise.as_mut() {
        for (yi, s) in y.iter_mut().zip(&plant.noise_std) {
            *yi += s * noise.sample();
        }
    }
    plant.x = &plant.a * &plant.x + &plant.b * u;
    Ok(y)
}

/// `col(C, CA, ..., CA^(depth−1))`.
pub fn observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>, depth: usize) -> DMatrix<f64> {
    let (p, n) = c.shape();
    let mut out = DMatrix::zeros(p * depth, n);
    let mut block = c.clone();
    for k in 0..depth {
        out.rows_mut(k * p, p).copy_from(&block);
        block = &block * a;
    }
    out
}

/// Smallest `ℓ` with `rank 𝒪_ℓ(A, C) = n`.
pub fn lag(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<usize> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n || c.ncols() != n || c.nrows() == 0 {
        return Err(invalid("lag needs square A and C with matching columns"));
    }
    let full = observability_matrix(a, c, n);
    let p = c.nrows();
    for l in 1..=n {
        if rank_with_tolerance(&full.rows(0, p * l).clone_owned(), DEFAULT_RTOL)? == n {
            return Ok(l);
        }
    }
    Err(Error::NotObservable)
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().map(|(re, im)| re.hypot(*im)).fold(0.0, f64::max)
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// Random plant with `ρ(A)` equal to `spectral_radius`, `D = 0` and `(A, C)`
/// observable. `spectral_radius = 0` yields `A = 0` without the observability
/// requirement.
pub fn random_stable_lti(n: usize, m: usize, p: usize, radius: f64, seed: u64) -> Result<LtiPlant> {
    if n == 0 || m == 0 || p == 0 {
        return Err(invalid("n, m, p must be positive"));
    }
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(invalid("spectral radius must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let raw = gaussian(&mut rng, n, n);
        let b = gaussian(&mut rng, n, m);
        let c = gaussian(&mut rng, p, n);
        let a = if radius == 0.0 {
            DMatrix::zeros(n, n)
        } else {
            let rho = spectral_radius(&raw);
            if rho < 1e-8 {
                continue;
            }
            raw * (radius / rho)
        };
        if radius > 0.0 && lag(&a, &c).is_err() {
            continue;
        }
        return LtiPlant::new(a, b, c, DMatrix::zeros(p, m));
    }
    Err(Error::NoConvergence("could not draw an observable plant".into()))
}

/// One complex pole pair of a continuous-time prototype.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModalSpec {
    pub freq_hz: f64,
    pub damping: f64,
}

/// Order-`n` plant in real modal form sampled at `dt`: the listed modes first,
/// the remaining pole pairs well damped (ζ ∈ [0.3, 0.8], 2–15 Hz), `B` and `C`
/// Gaussian, `D = 0`.
pub fn lightly_damped_lti(n: usize, m: usize, p: usize, dt: f64, dominant: &[ModalSpec], seed: u64) -> Result<LtiPlant> {
    if n == 0 || !n.is_multiple_of(2) || m == 0 || p == 0 {
        return Err(invalid("n must be even and positive; m, p positive"));
    }
    if dominant.len() > n / 2 || !(dt > 0.0) {
        return Err(invalid("too many dominant modes or non-positive dt"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = dominant.to_vec();
    while modes.len() < n / 2 {
        modes.push(ModalSpec { freq_hz: rng.random_range(2.0..15.0), damping: rng.random_range(0.3..0.8) });
    }
    let mut a = DMatrix::zeros(n, n);
    for (k, mode) in modes.iter().enumerate() {
        let w = 2.0 * std::f64::consts::PI * mode.freq_hz;
        let r = (-mode.damping * w * dt).exp();
        let th = w * (1.0 - mode.damping * mode.damping).max(0.0).sqrt() * dt;
        let i = 2 * k;
        a[(i, i)] = r * th.cos();
        a[(i, i + 1)] = -r * th.sin();
        a[(i + 1, i)] = r * th.sin();
        a[(i + 1, i + 1)] = r * th.cos();
    }
    let b = gaussian(&mut rng, n, m);
    let c = gaussian(&mut rng, p, n);
    LtiPlant::new(a, b, c, DMatrix::zeros(p, m))
}
