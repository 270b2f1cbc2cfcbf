//! Output-based MPC over an identified N-step transition matrix.
//!
//! With `K = [K_p | K_u]` the prediction `y = K_p·col(u_ini, y_ini) + K_u·u`
//! is substituted into the cost and the output box, leaving a QP in `u` only.

use nalgebra::{DMatrix, DVector};

use crate::deepc::{combined_cost, tracking_cost, ControlConfig, PlannedInputs, RecedingHorizon};
use crate::error::{invalid, Result};
use crate::hankel::{HankelBlocks, InitWindow};
use crate::matquad::{QpFactorization, QpProblem, QpSettings, QpStatus};
use crate::sysid::{k_from_hankel, ln_solve, ModelDims, TransitionModel};

fn check_dims(model: &TransitionModel, cfg: &ControlConfig) -> Result<()> {
    let d = model.dims();
    if d != (ModelDims { t_ini: cfg.t_ini, horizon: cfg.horizon, m: cfg.m, p: cfg.p }) {
        return Err(invalid(format!(
            "model (T_ini, N, m, p) = ({}, {}, {}, {}) differs from configuration ({}, {}, {}, {})",
            d.t_ini, d.horizon, d.m, d.p, cfg.t_ini, cfg.horizon, cfg.m, cfg.p
        )));
    }
    Ok(())
}

fn mpc_matrices(ku: &DMatrix<f64>, cfg: &ControlConfig) -> (DMatrix<f64>, DMatrix<f64>) {
    let nu = cfg.u_dim();
    let h = (&cfg.r_weight + ku.transpose() * &cfg.q_weight * ku) * 2.0;
    let h = (&h + h.transpose()) * 0.5;
    let mut a_in = DMatrix::zeros(nu + ku.nrows(), nu);
    a_in.view_mut((0, 0), (nu, nu)).fill_with_identity();
    a_in.view_mut((nu, 0), (ku.nrows(), nu)).copy_from(ku);
    (h, a_in)
}

/// `f = 2K_uᵀQ(K_p φ_p − r)` and the box rows shifted by the free response `K_p φ_p`.
fn mpc_rhs(kp: &DMatrix<f64>, ku: &DMatrix<f64>, w: &InitWindow, cfg: &ControlConfig) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let free = kp * w.past();
    let f = ku.transpose() * (&cfg.q_weight * (&free - &cfg.reference)) * 2.0;
    let nu = cfg.u_dim();
    let ny = cfg.y_dim();
    let mut lb = DVector::zeros(nu + ny);
    let mut ub = DVector::zeros(nu + ny);
    lb.rows_mut(0, nu).copy_from(&cfg.u_lb);
    ub.rows_mut(0, nu).copy_from(&cfg.u_ub);
    lb.rows_mut(nu, ny).copy_from(&(&cfg.y_lb - &free));
    ub.rows_mut(nu, ny).copy_from(&(&cfg.y_ub - &free));
    (f, lb, ub)
}

/// QP over `u`: `H = 2(R + K_uᵀQK_u)`, box rows `[I; K_u]`, no equalities.
pub fn assemble_mpc_qp(model: &TransitionModel, w: &InitWindow, cfg: &ControlConfig) -> Result<QpProblem> {
    cfg.validate()?;
    check_dims(model, cfg)?;
    cfg.check_window(w)?;
    let (kp, ku) = (model.past_block(), model.future_block());
    let (h, a_in) = mpc_matrices(&ku, cfg);
    let (f, lb, ub) = mpc_rhs(&kp, &ku, w, cfg);
    let n = h.nrows();
    QpProblem::new(h, f, DMatrix::zeros(0, n), DVector::zeros(0), a_in, lb, ub)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcStepResult {
    pub u_star: DVector<f64>,
    /// `K · col(u_ini, y_ini, u*)`.
    pub y_star: DVector<f64>,
    pub tracking_cost: f64,
    /// Combined cost with the least-norm `g'` of `u*`, when Hankel blocks are attached.
    pub combined_cost_via_ln: Option<f64>,
    pub status: QpStatus,
    pub iterations: usize,
}

/// MPC with the QP factorization cached across solves.
#[derive(Debug, Clone)]
pub struct MpcController {
    model: TransitionModel,
    cfg: ControlConfig,
    kp: DMatrix<f64>,
    ku: DMatrix<f64>,
    factorization: QpFactorization,
    blocks: Option<HankelBlocks>,
    settings: QpSettings,
}

impl MpcController {
    pub fn new(model: TransitionModel, cfg: ControlConfig) -> Result<Self> {
        cfg.validate()?;
        check_dims(&model, &cfg)?;
        let (kp, ku) = (model.past_block(), model.future_block());
        let (h, a_in) = mpc_matrices(&ku, &cfg);
        let n = h.nrows();
        QpProblem::new(
            h.clone(),
            DVector::zeros(n),
            DMatrix::zeros(0, n),
            DVector::zeros(0),
            a_in.clone(),
            DVector::from_element(a_in.nrows(), f64::NEG_INFINITY),
            DVector::from_element(a_in.nrows(), f64::INFINITY),
        )?;
        let factorization = QpFactorization::new(h, DMatrix::zeros(0, n), a_in);
        Ok(Self { model, cfg, kp, ku, factorization, blocks: None, settings: QpSettings::default() })
    }

    /// Attaches Hankel blocks so each step also reports the least-norm combined cost.
    pub fn with_blocks(mut self, blocks: HankelBlocks) -> Result<Self> {
        if (blocks.t_ini(), blocks.horizon(), blocks.m(), blocks.p()) != (self.cfg.t_ini, self.cfg.horizon, self.cfg.m, self.cfg.p) {
            return Err(invalid("blocks differ from the configuration"));
        }
        self.blocks = Some(blocks);
        Ok(self)
    }

    pub fn with_settings(mut self, settings: QpSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn model(&self) -> &TransitionModel {
        &self.model
    }

    pub fn step(&self, w: &InitWindow) -> Result<MpcStepResult> {
        self.cfg.check_window(w)?;
        let (f, lb, ub) = mpc_rhs(&self.kp, &self.ku, w, &self.cfg);
        let sol = self.factorization.solve(&f, &DVector::zeros(0), &lb, &ub, &self.settings);
        let u = sol.z;
        let y = &self.kp * w.past() + &self.ku * &u;
        let tracking = tracking_cost(&u, &y, &self.cfg)?;
        let combined_cost_via_ln = match &self.blocks {
            Some(b) => Some(combined_cost(&u, &y, &ln_solve(b, w, &u)?.g, &self.cfg)?),
            None => None,
        };
        Ok(MpcStepResult { u_star: u, y_star: y, tracking_cost: tracking, combined_cost_via_ln, status: sol.status, iterations: sol.iterations })
    }
}

impl RecedingHorizon for MpcController {
    fn config(&self) -> &ControlConfig {
        &self.cfg
    }

    fn plan(&mut self, w: &InitWindow) -> Result<PlannedInputs> {
        let r = self.step(w)?;
        Ok(PlannedInputs {
            combined_cost: r.combined_cost_via_ln.unwrap_or(r.tracking_cost),
            u_star: r.u_star,
            status: r.status,
            tracking_cost: r.tracking_cost,
        })
    }
}

/// One MPC solve without keeping the factorization.
pub fn mpc_step(model: &TransitionModel, w: &InitWindow, cfg: &ControlConfig) -> Result<MpcStepResult> {
    cfg.check_window(w)?;
    MpcController::new(model.clone(), cfg.clone())?.step(w)
}

/// `C(u'*, y'*, g'*)` of the concatenated PEM-MPC: `u'*` from the MPC over
/// `model`, `y'* = K φ` and `g'*` the least-norm preimage of `u'*`. The model
/// must equal [`k_from_hankel`] of `blocks` within `1e-9 · (1 + max|K|)`.
pub fn pem_mpc_combined_cost(blocks: &HankelBlocks, model: &TransitionModel, w: &InitWindow, cfg: &ControlConfig) -> Result<f64> {
    let reference = k_from_hankel(blocks)?;
    if reference.dims() != model.dims() || (reference.k() - model.k()).amax() > 1e-9 * (1.0 + reference.k().amax()) {
        return Err(invalid("model is not the Hankel-based transition matrix of these blocks"));
    }
    let r = mpc_step(model, w, cfg)?;
    if r.status != QpStatus::Optimal {
        return Err(crate::Error::Infeasible);
    }
    let g = ln_solve(blocks, w, &r.u_star)?.g;
    combined_cost(&r.u_star, &r.y_star, &g, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model(ku_scale: f64) -> TransitionModel {
        let dims = ModelDims::new(2, 3, 1, 1).unwrap();
        let k = DMatrix::from_fn(3, 7, |i, j| if j >= 4 { ku_scale * (1.0 + i as f64 - (j - 4) as f64).max(0.0) } else { 0.2 * (i + j) as f64 });
        TransitionModel::new(k, dims).unwrap()
    }

    #[test]
    fn zero_tracking_weight_projects_zero() {
        let mut cfg = ControlConfig::simple(1, 1, 2, 3, 1.0, 0.0, &[1.0], 1.0, 100.0, 0.0).unwrap();
        let qp = assemble_mpc_qp(&toy_model(1.0), &InitWindow::zeros(1, 1, 2), &cfg).unwrap();
        assert!((qp.h() - DMatrix::identity(3, 3) * 2.0).amax() < 1e-15);
        assert_eq!(qp.f().amax(), 0.0);
        cfg.u_lb.fill(0.5);
        cfg.u_ub.fill(2.0);
        let r = mpc_step(&toy_model(1.0), &InitWindow::zeros(1, 1, 2), &cfg).unwrap();
        assert!((r.u_star.add_scalar(-0.5)).amax() < 1e-9);
    }

    #[test]
    fn inputs_without_effect_stay_at_zero() {
        let cfg = ControlConfig::simple(1, 1, 2, 3, 1.0, 5.0, &[1.0], 1.0, 100.0, 0.0).unwrap();
        let w = InitWindow::new(1, 1, 2, vec![1.0, 0.5], vec![0.2, 0.1]).unwrap();
        let r = mpc_step(&toy_model(0.0), &w, &cfg).unwrap();
        assert!(r.u_star.amax() < 1e-12);
        assert!((r.y_star.clone() - toy_model(0.0).predict(&w, &r.u_star).unwrap()).amax() == 0.0);
    }

    #[test]
    fn converter_dimension() {
        let dims = ModelDims::new(40, 30, 2, 3).unwrap();
        let model = TransitionModel::new(DMatrix::zeros(90, 260), dims).unwrap();
        let qp = assemble_mpc_qp(&model, &InitWindow::zeros(2, 3, 40), &ControlConfig::converter()).unwrap();
        assert_eq!(qp.dim(), 60);
        assert_eq!(qp.a_eq().nrows(), 0);
    }

    #[test]
    fn relaxing_boxes_never_hurts() {
        let w = InitWindow::new(1, 1, 2, vec![1.0, -0.5], vec![0.4, 0.9]).unwrap();
        let mut last = f64::INFINITY;
        for b in [0.05, 0.1, 0.3, 1.0, 10.0] {
            let cfg = ControlConfig::simple(1, 1, 2, 3, 1.0, 5.0, &[1.0], b, 100.0, 0.0).unwrap();
            let r = mpc_step(&toy_model(1.0), &w, &cfg).unwrap();
            assert_eq!(r.status, QpStatus::Optimal);
            assert!(r.tracking_cost <= last + 1e-12);
            last = r.tracking_cost;
        }
    }

    #[test]
    fn mismatched_model_is_rejected() {
        let cfg = ControlConfig::simple(1, 2, 2, 3, 1.0, 1.0, &[0.0, 0.0], 1.0, 1.0, 0.0).unwrap();
        assert!(mpc_step(&toy_model(1.0), &InitWindow::zeros(1, 2, 2), &cfg).is_err());
    }
}
