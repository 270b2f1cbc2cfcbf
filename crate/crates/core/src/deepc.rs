//! Regularized data-enabled predictive control.
//!
//! With Hankel blocks `U_P, Y_P, U_f, Y_f` and the latest window
//! `(u_ini, y_ini)`, each step solves
//!
//! ```text
//! minimize    ‖u‖²_R + ‖y − r‖²_Q + λ_g ‖g‖²
//! subject to  U_P g = u_ini,  Y_P g = y_ini,  u = U_f g,  y = Y_f g,
//!             u ∈ 𝒰,  y ∈ 𝒴
//! ```
//!
//! over `g` alone and applies the first `s_apply` inputs.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hankel::{HankelBlocks, InitWindow, TrajectoryData};
use crate::matquad::{QpFactorization, QpProblem, QpSettings, QpStatus};

/// Weight matrix as written in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSpec {
    /// `s · I`.
    Scalar(f64),
    /// Per-sample diagonal (length m or p, repeated over the horizon) or the full diagonal.
    Diagonal(Vec<f64>),
    /// Full matrix, row-major.
    Full(Vec<Vec<f64>>),
}

/// Box constraint as written in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSpec {
    Unbounded,
    /// `−b ≤ v ≤ b`.
    Symmetric(f64),
    /// `r − b ≤ y ≤ r + b`; outputs only.
    AroundReference(f64),
    /// Per-sample (length m or p) or full-horizon bounds.
    Box { lb: Vec<f64>, ub: Vec<f64> },
}

/// Serialized form of [`ControlConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    pub t_ini: usize,
    pub horizon: usize,
    pub m: usize,
    pub p: usize,
    pub r_weight: WeightSpec,
    pub q_weight: WeightSpec,
    /// Per-sample (length p) or full-horizon (length pN) reference.
    pub reference: Vec<f64>,
    pub u_bounds: BoundSpec,
    pub y_bounds: BoundSpec,
    pub lambda_g: f64,
    #[serde(default = "one")]
    pub s_apply: usize,
    /// Penalty weight of the optional `y_ini` slack; absent keeps the hard equality.
    #[serde(default)]
    pub slack_penalty: Option<f64>,
}

fn one() -> usize {
    1
}

/// Horizon lengths, weights, reference, boxes and regularization shared by
/// the DeePC and MPC controllers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ControlSpec", into = "ControlSpec")]
pub struct ControlConfig {
    pub t_ini: usize,
    pub horizon: usize,
    pub m: usize,
    pub p: usize,
    pub r_weight: DMatrix<f64>,
    pub q_weight: DMatrix<f64>,
    pub reference: DVector<f64>,
    pub u_lb: DVector<f64>,
    pub u_ub: DVector<f64>,
    pub y_lb: DVector<f64>,
    pub y_ub: DVector<f64>,
    pub lambda_g: f64,
    pub s_apply: usize,
    pub slack_penalty: Option<f64>,
}

fn expand_weight(w: &WeightSpec, per: usize, n: usize) -> Result<DMatrix<f64>> {
    let dim = per * n;
    match w {
        WeightSpec::Scalar(s) => Ok(DMatrix::identity(dim, dim) * *s),
        WeightSpec::Diagonal(d) if d.len() == per => Ok(DMatrix::from_diagonal(&DVector::from_fn(dim, |i, _| d[i % per]))),
        WeightSpec::Diagonal(d) if d.len() == dim => Ok(DMatrix::from_diagonal(&DVector::from_column_slice(d))),
        WeightSpec::Diagonal(d) => Err(invalid(format!("diagonal weight has length {}, expected {per} or {dim}", d.len()))),
        WeightSpec::Full(rows) => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(invalid(format!("full weight must be {dim}x{dim}")));
            }
            Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
        }
    }
}

fn expand_vector(v: &[f64], per: usize, n: usize, what: &str) -> Result<DVector<f64>> {
    if v.len() == per {
        Ok(DVector::from_fn(per * n, |i, _| v[i % per]))
    } else if v.len() == per * n {
        Ok(DVector::from_column_slice(v))
    } else {
        Err(invalid(format!("{what} has length {}, expected {per} or {}", v.len(), per * n)))
    }
}

fn expand_bounds(b: &BoundSpec, per: usize, n: usize, reference: Option<&DVector<f64>>) -> Result<(DVector<f64>, DVector<f64>)> {
    let dim = per * n;
    match b {
        BoundSpec::Unbounded => Ok((DVector::from_element(dim, f64::NEG_INFINITY), DVector::from_element(dim, f64::INFINITY))),
        BoundSpec::Symmetric(s) => Ok((DVector::from_element(dim, -s), DVector::from_element(dim, *s))),
        BoundSpec::AroundReference(s) => {
            let r = reference.ok_or_else(|| invalid("around_reference bounds apply to outputs only"))?;
            Ok((r.add_scalar(-s), r.add_scalar(*s)))
        }
        BoundSpec::Box { lb, ub } => Ok((expand_vector(lb, per, n, "lower bound")?, expand_vector(ub, per, n, "upper bound")?)),
    }
}

impl TryFrom<ControlSpec> for ControlConfig {
    type Error = Error;

    fn try_from(s: ControlSpec) -> Result<Self> {
        if s.m == 0 || s.p == 0 || s.t_ini == 0 || s.horizon == 0 {
            return Err(invalid("m, p, t_ini and horizon must be positive"));
        }
        let reference = expand_vector(&s.reference, s.p, s.horizon, "reference")?;
        let (u_lb, u_ub) = expand_bounds(&s.u_bounds, s.m, s.horizon, None)?;
        let (y_lb, y_ub) = expand_bounds(&s.y_bounds, s.p, s.horizon, Some(&reference))?;
        let cfg = Self {
            t_ini: s.t_ini,
            horizon: s.horizon,
            m: s.m,
            p: s.p,
            r_weight: expand_weight(&s.r_weight, s.m, s.horizon)?,
            q_weight: expand_weight(&s.q_weight, s.p, s.horizon)?,
            reference,
            u_lb,
            u_ub,
            y_lb,
            y_ub,
            lambda_g: s.lambda_g,
            s_apply: s.s_apply,
            slack_penalty: s.slack_penalty,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn box_spec(lb: &DVector<f64>, ub: &DVector<f64>) -> BoundSpec {
    if lb.iter().all(|v| *v == f64::NEG_INFINITY) && ub.iter().all(|v| *v == f64::INFINITY) {
        BoundSpec::Unbounded
    } else {
        BoundSpec::Box { lb: lb.as_slice().to_vec(), ub: ub.as_slice().to_vec() }
    }
}

fn full(m: &DMatrix<f64>) -> WeightSpec {
    WeightSpec::Full(m.row_iter().map(|r| r.iter().cloned().collect()).collect())
}

impl From<ControlConfig> for ControlSpec {
    fn from(c: ControlConfig) -> Self {
        Self {
            t_ini: c.t_ini,
            horizon: c.horizon,
            m: c.m,
            p: c.p,
            r_weight: full(&c.r_weight),
            q_weight: full(&c.q_weight),
            reference: c.reference.as_slice().to_vec(),
            u_bounds: box_spec(&c.u_lb, &c.u_ub),
            y_bounds: box_spec(&c.y_lb, &c.y_ub),
            lambda_g: c.lambda_g,
            s_apply: c.s_apply,
            slack_penalty: c.slack_penalty,
        }
    }
}

impl ControlConfig {
    /// Scalar weights, a per-sample reference and symmetric boxes (`|u| ≤ u_box`,
    /// `|y − r| ≤ y_box`).
    #[allow(clippy::too_many_arguments)]
    pub fn simple(
        m: usize,
        p: usize,
        t_ini: usize,
        horizon: usize,
        r: f64,
        q: f64,
        reference: &[f64],
        u_box: f64,
        y_box: f64,
        lambda_g: f64,
    ) -> Result<Self> {
        ControlSpec {
            t_ini,
            horizon,
            m,
            p,
            r_weight: WeightSpec::Scalar(r),
            q_weight: WeightSpec::Scalar(q),
            reference: reference.to_vec(),
            u_bounds: BoundSpec::Symmetric(u_box),
            y_bounds: BoundSpec::AroundReference(y_box),
            lambda_g,
            s_apply: 1,
            slack_penalty: None,
        }
        .try_into()
    }

    /// The converter configuration: `T_ini = 40`, `N = 30`, `R = I`, `Q = 400 I`,
    /// `r = 1_N ⊗ (1, 0, 1)`, `|u| ≤ 2`, `|y − r| ≤ 2`, `λ_g = 10`.
    pub fn converter() -> Self {
        Self::simple(2, 3, 40, 30, 1.0, 400.0, &[1.0, 0.0, 1.0], 2.0, 2.0, 10.0).expect("valid converter configuration")
    }

    pub fn to_spec(&self) -> ControlSpec {
        self.clone().into()
    }

    pub fn u_dim(&self) -> usize {
        self.m * self.horizon
    }

    pub fn y_dim(&self) -> usize {
        self.p * self.horizon
    }

    pub fn validate(&self) -> Result<()> {
        let (nu, ny) = (self.u_dim(), self.y_dim());
        if self.r_weight.shape() != (nu, nu) || self.q_weight.shape() != (ny, ny) {
            return Err(invalid(format!("R must be {nu}x{nu} and Q {ny}x{ny}")));
        }
        if self.reference.len() != ny || self.y_lb.len() != ny || self.y_ub.len() != ny {
            return Err(invalid("reference and output bounds must have length pN"));
        }
        if self.u_lb.len() != nu || self.u_ub.len() != nu {
            return Err(invalid("input bounds must have length mN"));
        }
        if !self.r_weight.iter().chain(self.q_weight.iter()).chain(self.reference.iter()).all(|v| v.is_finite()) {
            return Err(invalid("weights and reference must be finite"));
        }
        for (lb, ub, what) in [(&self.u_lb, &self.u_ub, "input"), (&self.y_lb, &self.y_ub, "output")] {
            if lb.iter().chain(ub.iter()).any(|v| v.is_nan()) || lb.iter().zip(ub.iter()).any(|(l, u)| l > u) {
                return Err(invalid(format!("{what} bounds are not ordered")));
            }
        }
        let sym = |m: &DMatrix<f64>| (m - m.transpose()).amax() <= 1e-10 * (1.0 + m.amax());
        if !sym(&self.r_weight) || self.r_weight.clone().cholesky().is_none() {
            return Err(invalid("R must be symmetric positive definite"));
        }
        if !sym(&self.q_weight) {
            return Err(invalid("Q must be symmetric"));
        }
        let min_q = crate::matquad::symmetric_eigen(&self.q_weight).0.first().copied().unwrap_or(0.0);
        if min_q < -1e-10 * (1.0 + self.q_weight.amax()) {
            return Err(invalid("Q must be positive semidefinite"));
        }
        if !(self.lambda_g.is_finite() && self.lambda_g >= 0.0) {
            return Err(invalid("lambda_g must be finite and non-negative"));
        }
        if self.s_apply == 0 || self.s_apply > self.horizon {
            return Err(invalid(format!("s_apply must lie in [1, {}]", self.horizon)));
        }
        if let Some(w) = self.slack_penalty {
            if !(w.is_finite() && w > 0.0) {
                return Err(invalid("slack penalty must be finite and positive"));
            }
        }
        Ok(())
    }

    fn check_blocks(&self, blocks: &HankelBlocks) -> Result<()> {
        if (blocks.m(), blocks.p(), blocks.t_ini(), blocks.horizon()) != (self.m, self.p, self.t_ini, self.horizon) {
            return Err(invalid(format!(
                "blocks (m, p, T_ini, N) = ({}, {}, {}, {}) differ from configuration ({}, {}, {}, {})",
                blocks.m(),
                blocks.p(),
                blocks.t_ini(),
                blocks.horizon(),
                self.m,
                self.p,
                self.t_ini,
                self.horizon
            )));
        }
        Ok(())
    }

    pub(crate) fn check_window(&self, w: &InitWindow) -> Result<()> {
        if (w.m(), w.p(), w.t_ini()) != (self.m, self.p, self.t_ini) {
            return Err(invalid("window dimensions differ from the configuration"));
        }
        Ok(())
    }
}

fn quad(x: &DVector<f64>, w: &DMatrix<f64>) -> f64 {
    x.dot(&(w * x))
}

/// `‖u‖²_R + ‖y − r‖²_Q`.
pub fn tracking_cost(u: &DVector<f64>, y: &DVector<f64>, cfg: &ControlConfig) -> Result<f64> {
    if u.len() != cfg.u_dim() || y.len() != cfg.y_dim() {
        return Err(invalid("u or y length differs from the configuration"));
    }
    Ok(quad(u, &cfg.r_weight) + quad(&(y - &cfg.reference), &cfg.q_weight))
}

/// `‖u‖²_R + ‖y − r‖²_Q + λ_g ‖g‖²`.
pub fn combined_cost(u: &DVector<f64>, y: &DVector<f64>, g: &DVector<f64>, cfg: &ControlConfig) -> Result<f64> {
    Ok(tracking_cost(u, y, cfg)? + cfg.lambda_g * g.norm_squared())
}

fn deepc_matrices(blocks: &HankelBlocks, cfg: &ControlConfig) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (uf, yf) = (blocks.uf(), blocks.yf());
    let cols = blocks.cols();
    let mut h = (uf.transpose() * &cfg.r_weight * uf + yf.transpose() * &cfg.q_weight * yf) * 2.0;
    for i in 0..cols {
        h[(i, i)] += 2.0 * cfg.lambda_g;
    }
    let a_eq = match cfg.slack_penalty {
        None => crate::hankel::stack(&[blocks.up(), blocks.yp()]),
        Some(w) => {
            h += blocks.yp().transpose() * blocks.yp() * (2.0 * w);
            blocks.up().clone()
        }
    };
    h = (&h + h.transpose()) * 0.5;
    let a_in = crate::hankel::stack(&[uf, yf]);
    (h, a_eq, a_in)
}

fn deepc_rhs(blocks: &HankelBlocks, w: &InitWindow, cfg: &ControlConfig) -> (DVector<f64>, DVector<f64>) {
    let mut f = -(blocks.yf().transpose() * (&cfg.q_weight * &cfg.reference)) * 2.0;
    let b_eq = match cfg.slack_penalty {
        None => w.past(),
        Some(pen) => {
            f -= blocks.yp().transpose() * w.y_ini() * (2.0 * pen);
            w.u_ini()
        }
    };
    (f, b_eq)
}

fn stacked_bounds(cfg: &ControlConfig) -> (DVector<f64>, DVector<f64>) {
    let cat = |a: &DVector<f64>, b: &DVector<f64>| DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).cloned());
    (cat(&cfg.u_lb, &cfg.y_lb), cat(&cfg.u_ub, &cfg.y_ub))
}

/// The DeePC program over `g`: `H = 2(U_fᵀRU_f + Y_fᵀQY_f + λ_g I)`,
/// `f = −2Y_fᵀQr`, `A_eq = [U_P; Y_P]`, box rows `[U_f; Y_f]`.
pub fn assemble_deepc_qp(blocks: &HankelBlocks, w: &InitWindow, cfg: &ControlConfig) -> Result<QpProblem> {
    cfg.validate()?;
    cfg.check_blocks(blocks)?;
    cfg.check_window(w)?;
    let (h, a_eq, a_in) = deepc_matrices(blocks, cfg);
    let (f, b_eq) = deepc_rhs(blocks, w, cfg);
    let (lb, ub) = stacked_bounds(cfg);
    QpProblem::new(h, f, a_eq, b_eq, a_in, lb, ub)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepcStepResult {
    pub u_star: DVector<f64>,
    pub y_star: DVector<f64>,
    pub g_star: DVector<f64>,
    pub combined_cost: f64,
    pub tracking_cost: f64,
    pub status: QpStatus,
    pub iterations: usize,
    /// `‖[U_P; Y_P; U_f; Y_f] g − [u_ini; y_ini; u; y]‖_∞`.
    pub constraint_residual: f64,
}

/// Outcome of one receding-horizon solve, common to DeePC and MPC.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedInputs {
    pub u_star: DVector<f64>,
    pub status: QpStatus,
    pub tracking_cost: f64,
    pub combined_cost: f64,
}

/// A controller solving one finite-horizon problem per window.
pub trait RecedingHorizon {
    fn config(&self) -> &ControlConfig;
    fn plan(&mut self, w: &InitWindow) -> Result<PlannedInputs>;
}

/// DeePC with the QP factorization cached across solves.
#[derive(Debug, Clone)]
pub struct DeepcController {
    blocks: HankelBlocks,
    cfg: ControlConfig,
    factorization: QpFactorization,
    lb: DVector<f64>,
    ub: DVector<f64>,
    settings: QpSettings,
}

impl DeepcController {
    pub fn new(blocks: HankelBlocks, cfg: ControlConfig) -> Result<Self> {
        cfg.validate()?;
        cfg.check_blocks(&blocks)?;
        let (h, a_eq, a_in) = deepc_matrices(&blocks, &cfg);
        // validates H, A_eq and A_in once
        QpProblem::new(
            h.clone(),
            DVector::zeros(h.nrows()),
            a_eq.clone(),
            DVector::zeros(a_eq.nrows()),
            a_in.clone(),
            DVector::from_element(a_in.nrows(), f64::NEG_INFINITY),
            DVector::from_element(a_in.nrows(), f64::INFINITY),
        )?;
        let (lb, ub) = stacked_bounds(&cfg);
        let factorization = QpFactorization::new(h, a_eq, a_in);
        Ok(Self { blocks, cfg, factorization, lb, ub, settings: QpSettings::default() })
    }

    pub fn with_settings(mut self, settings: QpSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn blocks(&self) -> &HankelBlocks {
        &self.blocks
    }

    pub fn step(&self, w: &InitWindow) -> Result<DeepcStepResult> {
        self.cfg.check_window(w)?;
        let (f, b_eq) = deepc_rhs(&self.blocks, w, &self.cfg);
        let sol = self.factorization.solve(&f, &b_eq, &self.lb, &self.ub, &self.settings);
        let g = sol.z;
        let u = self.blocks.uf() * &g;
        let y = self.blocks.yf() * &g;
        let tracking = tracking_cost(&u, &y, &self.cfg)?;
        let eq_res = (self.blocks.up() * &g - w.u_ini()).amax().max((self.blocks.yp() * &g - w.y_ini()).amax());
        Ok(DeepcStepResult {
            combined_cost: tracking + self.cfg.lambda_g * g.norm_squared(),
            tracking_cost: tracking,
            u_star: u,
            y_star: y,
            g_star: g,
            status: sol.status,
            iterations: sol.iterations,
            constraint_residual: eq_res,
        })
    }
}

impl RecedingHorizon for DeepcController {
    fn config(&self) -> &ControlConfig {
        &self.cfg
    }

    fn plan(&mut self, w: &InitWindow) -> Result<PlannedInputs> {
        let r = self.step(w)?;
        Ok(PlannedInputs { u_star: r.u_star, status: r.status, tracking_cost: r.tracking_cost, combined_cost: r.combined_cost })
    }
}

/// One DeePC solve without keeping the factorization.
pub fn deepc_step(blocks: &HankelBlocks, w: &InitWindow, cfg: &ControlConfig) -> Result<DeepcStepResult> {
    cfg.check_window(w)?;
    DeepcController::new(blocks.clone(), cfg.clone())?.step(w)
}

/// Applied inputs, measured outputs and per-solve diagnostics of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopLog {
    pub data: TrajectoryData,
    pub statuses: Vec<QpStatus>,
    pub solve_seconds: Vec<f64>,
    /// Solves whose input was replaced by the hold-last-input fallback.
    pub fallbacks: usize,
    /// Final initial-condition window.
    pub window: InitWindow,
}

/// Alternates solves, application of `s_apply` inputs through `plant` and
/// window updates for `steps` plant samples. A non-optimal solve aborts with
/// [`Error::Infeasible`] unless `hold_last_input` is set.
pub fn receding_horizon_run<C, F>(
    plant: F,
    controller: &mut C,
    w0: InitWindow,
    steps: usize,
    hold_last_input: bool,
) -> Result<ClosedLoopLog>
where
    C: RecedingHorizon + ?Sized,
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut plant = plant;
    let (m, p, s_apply) = {
        let c = controller.config();
        (c.m, c.p, c.s_apply)
    };
    controller.config().check_window(&w0)?;
    let mut log = ClosedLoopLog {
        data: TrajectoryData::empty(m, p),
        statuses: Vec::new(),
        solve_seconds: Vec::new(),
        fallbacks: 0,
        window: w0,
    };
    let mut last_u = vec![0.0; m];
    while log.data.len() < steps {
        let start = Instant::now();
        let plan = controller.plan(&log.window)?;
        log.solve_seconds.push(start.elapsed().as_secs_f64());
        log.statuses.push(plan.status);
        let inputs: Vec<Vec<f64>> = if plan.status == QpStatus::Optimal {
            (0..s_apply).map(|k| plan.u_star.rows(k * m, m).iter().cloned().collect()).collect()
        } else if hold_last_input {
            log::warn!("solve {} returned {:?}; holding the last input", log.statuses.len(), plan.status);
            log.fallbacks += 1;
            vec![last_u.clone()]
        } else {
            return Err(Error::Infeasible);
        };
        for u in inputs {
            if log.data.len() == steps {
                break;
            }
            let y = plant(&u)?;
            log.data.push(&u, &y)?;
            log.window.push(&u, &y)?;
            last_u = u;
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hankel::partition;

    fn scalar_data(t: usize) -> TrajectoryData {
        let mut y = 0.0;
        let mut us = Vec::new();
        let mut ys = Vec::new();
        for k in 0..t {
            let u = ((k * 7919) % 13) as f64 / 6.0 - 1.0 + if k % 3 == 0 { 0.4 } else { -0.2 };
            us.push(u);
            ys.push(y);
            y = 0.5 * y + u;
        }
        TrajectoryData::new(1, 1, us, ys).unwrap()
    }

    #[test]
    fn hessian_is_substituted_cost() {
        let blocks = partition(&scalar_data(40), 2, 3, None).unwrap();
        let mut cfg = ControlConfig::simple(1, 1, 2, 3, 1.0, 0.0, &[0.0], 10.0, 10.0, 0.0).unwrap();
        let qp = assemble_deepc_qp(&blocks, &InitWindow::zeros(1, 1, 2), &cfg).unwrap();
        let expect = blocks.uf().transpose() * blocks.uf() * 2.0;
        assert!((qp.h() - expect).amax() < 1e-12);
        assert!(qp.f().amax() == 0.0);
        assert_eq!(qp.a_eq().nrows(), 4);

        cfg.lambda_g = 10.0;
        cfg.q_weight = DMatrix::identity(3, 3) * 3.0;
        let qp = assemble_deepc_qp(&blocks, &InitWindow::zeros(1, 1, 2), &cfg).unwrap();
        let rest = qp.h() - DMatrix::identity(blocks.cols(), blocks.cols()) * 20.0;
        let min_eig = crate::matquad::symmetric_eigen(&rest).0[0];
        assert!(min_eig > -1e-9 * rest.amax());
    }

    #[test]
    fn converter_shapes() {
        let mut u = Vec::new();
        let mut y = Vec::new();
        for k in 0..500 {
            u.extend([(k as f64 * 0.37).sin(), (k as f64 * 1.3).cos()]);
            y.extend([(k as f64 * 0.11).sin(), 0.0, 1.0]);
        }
        let data = TrajectoryData::new(2, 3, u, y).unwrap();
        let blocks = partition(&data, 40, 30, None).unwrap();
        let qp = assemble_deepc_qp(&blocks, &InitWindow::zeros(2, 3, 40), &ControlConfig::converter()).unwrap();
        assert_eq!(qp.h().shape(), (431, 431));
        assert_eq!(qp.a_eq().nrows(), 200);
    }

    #[test]
    fn rest_is_optimal_at_zero_reference() {
        let blocks = partition(&scalar_data(60), 2, 4, None).unwrap();
        let cfg = ControlConfig::simple(1, 1, 2, 4, 1.0, 1.0, &[0.0], 1.0, 5.0, 0.0).unwrap();
        let r = deepc_step(&blocks, &InitWindow::zeros(1, 1, 2), &cfg).unwrap();
        assert_eq!(r.status, QpStatus::Optimal);
        assert!(r.u_star.amax() < 1e-9 && r.y_star.amax() < 1e-9);
    }

    #[test]
    fn cost_examples() {
        let cfg = ControlConfig::simple(1, 1, 1, 2, 1.0, 0.0, &[0.5], 1.0, 1.0, 0.0).unwrap();
        let u = DVector::from_vec(vec![1.0, 2.0]);
        let r = DVector::from_vec(vec![0.5, 0.5]);
        assert_eq!(combined_cost(&u, &r, &DVector::zeros(3), &cfg).unwrap(), 5.0);
        let mut cfg = cfg;
        cfg.lambda_g = 10.0;
        let g = DVector::from_vec(vec![0.3f64.sqrt(), 0.0]);
        assert!((combined_cost(&DVector::zeros(2), &r, &g, &cfg).unwrap() - 3.0).abs() < 1e-12);
        assert!(combined_cost(&DVector::zeros(3), &r, &g, &cfg).is_err());
    }

    #[test]
    fn infeasible_boxes_are_reported() {
        let blocks = partition(&scalar_data(60), 2, 3, None).unwrap();
        let mut cfg = ControlConfig::simple(1, 1, 2, 3, 1.0, 1.0, &[0.0], 10.0, 10.0, 1.0).unwrap();
        // window with a large output; the free response cannot reach a tiny output box
        let w = InitWindow::new(1, 1, 2, vec![0.0, 0.0], vec![8.0, 4.0]).unwrap();
        cfg.u_lb.fill(-1e-3);
        cfg.u_ub.fill(1e-3);
        cfg.y_lb.fill(-1e-3);
        cfg.y_ub.fill(1e-3);
        let r = deepc_step(&blocks, &w, &cfg).unwrap();
        assert_eq!(r.status, QpStatus::Infeasible);
    }

    #[test]
    fn spec_round_trip() {
        let cfg = ControlConfig::converter();
        let json = serde_json::to_string(&cfg.to_spec()).unwrap();
        let back: ControlSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(ControlConfig::try_from(back).unwrap(), cfg);
        let bad = ControlSpec { s_apply: 31, ..cfg.to_spec() };
        assert!(ControlConfig::try_from(bad).is_err());
        let neg = ControlSpec { r_weight: WeightSpec::Scalar(-1.0), ..cfg.to_spec() };
        assert!(ControlConfig::try_from(neg).is_err());
    }

    #[test]
    fn open_loop_when_applying_whole_horizon() {
        let data = scalar_data(80);
        let blocks = partition(&data, 2, 5, None).unwrap();
        let mut cfg = ControlConfig::simple(1, 1, 2, 5, 1.0, 10.0, &[1.0], 10.0, 10.0, 0.0).unwrap();
        cfg.s_apply = 5;
        let mut ctrl = DeepcController::new(blocks, cfg).unwrap();
        let plan = ctrl.step(&InitWindow::zeros(1, 1, 2)).unwrap();
        let mut y = 0.0;
        let log = receding_horizon_run(
            |u: &[f64]| {
                let out = y;
                y = 0.5 * y + u[0];
                Ok(vec![out])
            },
            &mut ctrl,
            InitWindow::zeros(1, 1, 2),
            5,
            false,
        )
        .unwrap();
        assert_eq!(log.statuses.len(), 1);
        for k in 0..5 {
            assert!((log.data.input(k)[0] - plan.u_star[k]).abs() < 1e-12);
            assert!((log.data.output(k)[0] - plan.y_star[k]).abs() < 1e-8);
        }
    }
}
