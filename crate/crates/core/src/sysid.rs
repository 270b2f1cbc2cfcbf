//! N-step prediction-error identification.
//!
//! The transition matrix `K ∈ ℝ^{pN × (mT_ini + pT_ini + mN)}` maps the
//! regressor `φ = col(u_ini, y_ini, u)` to the `N` future outputs. It is fit by
//! batch least squares over spaced trajectories, from Hankel blocks in closed
//! form, or recursively.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hankel::{HankelBlocks, InitWindow, TrajectoryData};
use crate::matquad::{pinv_unchecked, DEFAULT_RTOL};

/// Window lengths and signal widths of a transition model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub t_ini: usize,
    pub horizon: usize,
    pub m: usize,
    pub p: usize,
}

impl ModelDims {
    pub fn new(t_ini: usize, horizon: usize, m: usize, p: usize) -> Result<Self> {
        if t_ini == 0 || horizon == 0 || m == 0 || p == 0 {
            return Err(invalid("model dimensions must be positive"));
        }
        Ok(Self { t_ini, horizon, m, p })
    }

    pub fn past_dim(&self) -> usize {
        (self.m + self.p) * self.t_ini
    }

    pub fn regressor_dim(&self) -> usize {
        self.past_dim() + self.m * self.horizon
    }

    pub fn output_dim(&self) -> usize {
        self.p * self.horizon
    }
}

/// One trajectory: regressor `φ = col(u_ini, y_ini, u)` and future outputs `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorSample {
    pub phi: DVector<f64>,
    pub y: DVector<f64>,
}

/// Trajectories starting at samples `0, spacing, 2·spacing, …`;
/// `⌊(T − T_ini − N)/spacing⌋ + 1` of them, or none (with a warning) when the
/// data is shorter than `T_ini + N`.
pub fn extract_trajectories(data: &TrajectoryData, t_ini: usize, horizon: usize, spacing: usize) -> Result<Vec<RegressorSample>> {
    if spacing == 0 || t_ini == 0 || horizon == 0 {
        return Err(invalid("spacing, T_ini and N must be positive"));
    }
    let (m, p, t) = (data.m(), data.p(), data.len());
    if t < t_ini + horizon {
        log::warn!("{t} samples cannot hold a trajectory of length {}", t_ini + horizon);
        return Ok(Vec::new());
    }
    let count = (t - t_ini - horizon) / spacing + 1;
    let (u, y) = (data.u(), data.y());
    Ok((0..count)
        .map(|j| {
            let s = j * spacing;
            let phi = u[s * m..(s + t_ini) * m]
                .iter()
                .chain(&y[s * p..(s + t_ini) * p])
                .chain(&u[(s + t_ini) * m..(s + t_ini + horizon) * m])
                .cloned();
            RegressorSample {
                phi: DVector::from_iterator((m + p) * t_ini + m * horizon, phi),
                y: DVector::from_column_slice(&y[(s + t_ini) * p..(s + t_ini + horizon) * p]),
            }
        })
        .collect())
}

/// Transition matrix `K = [K_p | K_u]` with its dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    k: DMatrix<f64>,
    dims: ModelDims,
}

impl TransitionModel {
    pub fn new(k: DMatrix<f64>, dims: ModelDims) -> Result<Self> {
        if k.shape() != (dims.output_dim(), dims.regressor_dim()) {
            return Err(invalid(format!(
                "K is {}x{}, expected {}x{}",
                k.nrows(),
                k.ncols(),
                dims.output_dim(),
                dims.regressor_dim()
            )));
        }
        crate::matquad::check_finite(&k, "K")?;
        Ok(Self { k, dims })
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }
    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    /// Columns acting on `col(u_ini, y_ini)`.
    pub fn past_block(&self) -> DMatrix<f64> {
        self.k.columns(0, self.dims.past_dim()).clone_owned()
    }

    /// Columns acting on the future inputs.
    pub fn future_block(&self) -> DMatrix<f64> {
        self.k.columns(self.dims.past_dim(), self.dims.m * self.dims.horizon).clone_owned()
    }

    /// `K · col(u_ini, y_ini, u)`.
    pub fn predict(&self, w: &InitWindow, u: &DVector<f64>) -> Result<DVector<f64>> {
        if (w.m(), w.p(), w.t_ini()) != (self.dims.m, self.dims.p, self.dims.t_ini) || u.len() != self.dims.m * self.dims.horizon {
            return Err(invalid("window or input length differs from the model"));
        }
        Ok(self.past_block() * w.past() + self.future_block() * u)
    }

    /// Header `K pN cols T_ini N m p`, then one row per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.dims;
        writeln!(w, "K {} {} {} {} {} {}", self.k.nrows(), self.k.ncols(), d.t_ini, d.horizon, d.m, d.p)?;
        for row in self.k.row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines.next().ok_or_else(|| invalid("empty model file"))?.map_err(|e| invalid(e.to_string()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 7 || fields[0] != "K" {
            return Err(invalid(format!("bad model header: {header}")));
        }
        let nums: Vec<usize> = fields[1..]
            .iter()
            .map(|s| s.parse::<usize>().map_err(|_| invalid(format!("bad header field {s}"))))
            .collect::<Result<_>>()?;
        let dims = ModelDims::new(nums[2], nums[3], nums[4], nums[5])?;
        let (rows, cols) = (nums[0], nums[1]);
        let mut k = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            let line = lines.next().ok_or_else(|| invalid(format!("model file ends before row {i}")))?.map_err(|e| invalid(e.to_string()))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| invalid(format!("bad number {s} in row {i}"))))
                .collect::<Result<_>>()?;
            if vals.len() != cols {
                return Err(invalid(format!("row {i} has {} entries, expected {cols}", vals.len())));
            }
            for (j, v) in vals.into_iter().enumerate() {
                k[(i, j)] = v;
            }
        }
        Self::new(k, dims)
    }
}

fn sample_matrices(samples: &[RegressorSample], dims: ModelDims) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if samples.is_empty() {
        return Err(invalid("at least one trajectory is required"));
    }
    let (nphi, ny) = (dims.regressor_dim(), dims.output_dim());
    let mut phi = DMatrix::zeros(nphi, samples.len());
    let mut y = DMatrix::zeros(ny, samples.len());
    for (j, s) in samples.iter().enumerate() {
        if s.phi.len() != nphi || s.y.len() != ny {
            return Err(invalid(format!("trajectory {j} has lengths ({}, {}), expected ({nphi}, {ny})", s.phi.len(), s.y.len())));
        }
        phi.set_column(j, &s.phi);
        y.set_column(j, &s.y);
    }
    crate::matquad::check_finite(&phi, "regressors")?;
    crate::matquad::check_finite(&y, "outputs")?;
    Ok((phi, y))
}

/// Batch least squares `K = [y_(1) … y_(N_trj)] · pinv([φ_(1) … φ_(N_trj)])`.
pub fn pem_batch(samples: &[RegressorSample], dims: ModelDims) -> Result<TransitionModel> {
    let (phi, y) = sample_matrices(samples, dims)?;
    if samples.len() <= dims.regressor_dim() {
        log::warn!(
            "{} trajectories do not exceed the regressor dimension {}; K is not uniquely determined",
            samples.len(),
            dims.regressor_dim()
        );
    }
    let (pinv, _) = pinv_unchecked(&phi, DEFAULT_RTOL);
    TransitionModel::new(y * pinv, dims)
}

/// `K = Y_f · pinv(col(U_P, Y_P, U_f))`.
pub fn k_from_hankel(blocks: &HankelBlocks) -> Result<TransitionModel> {
    let dims = ModelDims::new(blocks.t_ini(), blocks.horizon(), blocks.m(), blocks.p())?;
    let (pinv, _) = pinv_unchecked(&blocks.regressor(), DEFAULT_RTOL);
    TransitionModel::new(blocks.yf() * pinv, dims)
}

/// Streaming least-squares state; every output row shares the gain `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsState {
    k: DMatrix<f64>,
    p: DMatrix<f64>,
    samples_seen: usize,
    dims: ModelDims,
}

pub const DEFAULT_RLS_ALPHA: f64 = 1e6;

/// `K₀ = 0`, `P₀ = α I`.
pub fn rls_init(dims: ModelDims, alpha: f64) -> Result<RlsState> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(invalid("alpha must be finite and positive"));
    }
    let n = dims.regressor_dim();
    Ok(RlsState { k: DMatrix::zeros(dims.output_dim(), n), p: DMatrix::identity(n, n) * alpha, samples_seen: 0, dims })
}

/// `L = Pφ/(1 + φᵀPφ)`, `K ← K + (y − Kφ)Lᵀ`, `P ← P − LφᵀP`, then `P` is re-symmetrized.
pub fn rls_update(state: &mut RlsState, sample: &RegressorSample) -> Result<()> {
    let (nphi, ny) = (state.dims.regressor_dim(), state.dims.output_dim());
    if sample.phi.len() != nphi || sample.y.len() != ny {
        return Err(invalid("sample dimensions differ from the model"));
    }
    if !sample.phi.iter().chain(sample.y.iter()).all(|v| v.is_finite()) {
        return Err(invalid("non-finite sample rejected"));
    }
    let pphi = &state.p * &sample.phi;
    let denom = 1.0 + sample.phi.dot(&pphi);
    let gain = &pphi / denom;
    let err = &sample.y - &state.k * &sample.phi;
    state.k.ger(1.0, &err, &gain, 1.0);
    state.p.ger(-1.0 / denom, &pphi, &pphi, 1.0);
    let sym = (&state.p + state.p.transpose()) * 0.5;
    state.p = sym;
    state.samples_seen += 1;
    Ok(())
}

impl RlsState {
    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }
    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }
    pub fn samples_seen(&self) -> usize {
        self.samples_seen
    }
    pub fn dims(&self) -> ModelDims {
        self.dims
    }
    pub fn update(&mut self, sample: &RegressorSample) -> Result<()> {
        rls_update(self, sample)
    }
    pub fn model(&self) -> Result<TransitionModel> {
        TransitionModel::new(self.k.clone(), self.dims)
    }
}

/// Least-norm preimage `g' = pinv(col(U_P, Y_P, U_f)) · col(u_ini, y_ini, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LnSolution {
    pub g: DVector<f64>,
    /// `‖col(U_P, Y_P, U_f) g' − rhs‖_∞`.
    pub residual: f64,
    /// Residual within `1e-6 · (1 + ‖rhs‖_∞)`.
    pub consistent: bool,
}

pub fn ln_solve(blocks: &HankelBlocks, w: &InitWindow, u: &DVector<f64>) -> Result<LnSolution> {
    if (w.m(), w.p(), w.t_ini()) != (blocks.m(), blocks.p(), blocks.t_ini()) || u.len() != blocks.m() * blocks.horizon() {
        return Err(invalid("window or input length differs from the blocks"));
    }
    let a = blocks.regressor();
    let past = w.past();
    let rhs = DVector::from_iterator(past.len() + u.len(), past.iter().chain(u.iter()).cloned());
    let (pinv, _) = pinv_unchecked(&a, DEFAULT_RTOL);
    let g = pinv * &rhs;
    let residual = (&a * &g - &rhs).amax();
    Ok(LnSolution { consistent: residual <= 1e-6 * (1.0 + rhs.amax()), residual, g })
}

/// `‖K φ − Y_f g'‖_∞` and `‖Y_f g'‖_∞` with `K` from [`k_from_hankel`] and
/// `g'` from [`ln_solve`] for the same blocks, window and input.
pub fn least_norm_gap(blocks: &HankelBlocks, w: &InitWindow, u: &DVector<f64>) -> Result<(f64, f64)> {
    let model = k_from_hankel(blocks)?;
    let via_k = model.predict(w, u)?;
    let via_g = blocks.yf() * ln_solve(blocks, w, u)?.g;
    Ok(((via_k - &via_g).amax(), via_g.amax()))
}
