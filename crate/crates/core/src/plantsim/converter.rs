use nalgebra::{DMatrix, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::noise::GaussianNoise;
use super::Plant;
use crate::error::{invalid, Error, Result};
use crate::matquad::eigenvalues;

pub const CONVERTER_ORDER: usize = 10;

const DIVERGENCE_NORM: f64 = 1e3;

type StateVec = SVector<f64, CONVERTER_ORDER>;

/// Per-unit converter, filter, grid and control parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConverterParams {
    pub l_f: f64,
    pub c_f: f64,
    pub l_g: f64,
    pub r_g: f64,
    pub kp_pll: f64,
    pub ki_pll: f64,
    pub kp_cc: f64,
    pub ki_cc: f64,
    pub f_b: f64,
    pub v_grid_mag: f64,
    pub sim_dt: f64,
    pub meas_noise_power: f64,
    /// Feed the PLL-frame capacitor voltage forward into the converter voltage reference.
    pub voltage_feedforward: bool,
}

impl Default for ConverterParams {
    fn default() -> Self {
        Self {
            l_f: 0.05,
            c_f: 0.05,
            l_g: 0.35,
            r_g: 0.02,
            kp_pll: 103.1,
            ki_pll: 5311.5,
            kp_cc: 0.3,
            ki_cc: 10.0,
            f_b: 50.0,
            v_grid_mag: 1.0,
            sim_dt: 1e-5,
            meas_noise_power: 5e-6,
            voltage_feedforward: true,
        }
    }
}

impl ConverterParams {
    pub fn with_grid_inductance(mut self, l_g: f64) -> Self {
        self.l_g = l_g;
        self
    }

    pub fn omega_b(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f_b
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("l_f", self.l_f),
            ("c_f", self.c_f),
            ("l_g", self.l_g),
            ("kp_pll", self.kp_pll),
            ("ki_pll", self.ki_pll),
            ("kp_cc", self.kp_cc),
            ("ki_cc", self.ki_cc),
            ("f_b", self.f_b),
            ("v_grid_mag", self.v_grid_mag),
            ("sim_dt", self.sim_dt),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be finite and positive, got {v}")));
            }
        }
        if !(self.r_g.is_finite() && self.r_g >= 0.0) {
            return Err(invalid("r_g must be finite and non-negative"));
        }
        if !(self.meas_noise_power.is_finite() && self.meas_noise_power >= 0.0) {
            return Err(invalid("meas_noise_power must be finite and non-negative"));
        }
        if self.sim_dt > 1e-4 {
            return Err(invalid(format!("sim_dt {} exceeds 1e-4 s", self.sim_dt)));
        }
        Ok(())
    }
}

/// Converter states; electrical quantities in the grid synchronous frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConverterState {
    pub i_conv: [f64; 2],
    pub v_cap: [f64; 2],
    pub i_grid: [f64; 2],
    /// PLL angle minus grid angle.
    pub delta: f64,
    pub x_pll: f64,
    pub gamma: [f64; 2],
}

impl ConverterState {
    pub fn to_vector(&self) -> SVector<f64, CONVERTER_ORDER> {
        SVector::from([
            self.i_conv[0],
            self.i_conv[1],
            self.v_cap[0],
            self.v_cap[1],
            self.i_grid[0],
            self.i_grid[1],
            self.delta,
            self.x_pll,
            self.gamma[0],
            self.gamma[1],
        ])
    }

    pub fn from_vector(x: &SVector<f64, CONVERTER_ORDER>) -> Self {
        Self {
            i_conv: [x[0], x[1]],
            v_cap: [x[2], x[3]],
            i_grid: [x[4], x[5]],
            delta: x[6],
            x_pll: x[7],
            gamma: [x[8], x[9]],
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    /// Capacitor voltage and converter current seen in the PLL frame.
    pub fn outputs(&self) -> ConverterOutputs {
        let (v, i) = (to_pll(self.v_cap, self.delta), to_pll(self.i_conv, self.delta));
        ConverterOutputs { v_d: v[0], v_q: v[1], i_d: i[0] }
    }
}

/// Measured `(V_d, V_q, I_d)` in the PLL frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConverterOutputs {
    pub v_d: f64,
    pub v_q: f64,
    pub i_d: f64,
}

impl ConverterOutputs {
    pub fn to_array(&self) -> [f64; 3] {
        [self.v_d, self.v_q, self.i_d]
    }
}

fn to_pll(x: [f64; 2], delta: f64) -> [f64; 2] {
    let (s, c) = delta.sin_cos();
    [c * x[0] + s * x[1], -s * x[0] + c * x[1]]
}

fn to_grid(x: [f64; 2], delta: f64) -> [f64; 2] {
    let (s, c) = delta.sin_cos();
    [c * x[0] - s * x[1], s * x[0] + c * x[1]]
}

fn vector_field(p: &ConverterParams, x: &StateVec, i_ref: [f64; 2]) -> StateVec {
    let wb = p.omega_b();
    let wg = 1.0;
    let delta = x[6];
    let (ic, vc, ig) = ([x[0], x[1]], [x[2], x[3]], [x[4], x[5]]);
    let ic_pll = to_pll(ic, delta);
    let vc_pll = to_pll(vc, delta);
    let e = [i_ref[0] - ic_pll[0], i_ref[1] - ic_pll[1]];
    let ff = if p.voltage_feedforward { vc_pll } else { [0.0, 0.0] };
    let v_conv_pll = [
        p.kp_cc * e[0] + x[8] + ff[0] - wg * p.l_f * ic_pll[1],
        p.kp_cc * e[1] + x[9] + ff[1] + wg * p.l_f * ic_pll[0],
    ];
    let v_conv = to_grid(v_conv_pll, delta);
    let vg = [p.v_grid_mag, 0.0];
    let mut dx = StateVec::zeros();
    for k in 0..2 {
        // J·a = (a_q, −a_d)
        let sgn = if k == 0 { 1.0 } else { -1.0 };
        let o = 1 - k;
        dx[k] = wb / p.l_f * (v_conv[k] - vc[k]) + wb * wg * sgn * ic[o];
        dx[2 + k] = wb / p.c_f * (ic[k] - ig[k]) + wb * wg * sgn * vc[o];
        dx[4 + k] = wb / p.l_g * (vc[k] - vg[k] - p.r_g * ig[k]) + wb * wg * sgn * ig[o];
        dx[8 + k] = p.ki_cc * wb * e[k];
    }
    dx[7] = p.ki_pll * vc_pll[1];
    dx[6] = p.kp_pll * vc_pll[1] + x[7];
    dx
}

/// Time derivative of the closed-loop converter at fixed current references.
pub fn converter_vector_field(params: &ConverterParams, state: &ConverterState, i_ref: [f64; 2]) -> SVector<f64, CONVERTER_ORDER> {
    vector_field(params, &state.to_vector(), i_ref)
}

fn rk4(p: &ConverterParams, x: &StateVec, i_ref: [f64; 2], h: f64) -> StateVec {
    let k1 = vector_field(p, x, i_ref);
    let k2 = vector_field(p, &(x + k1 * (h / 2.0)), i_ref);
    let k3 = vector_field(p, &(x + k2 * (h / 2.0)), i_ref);
    let k4 = vector_field(p, &(x + k3 * h), i_ref);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn substeps(sim_dt: f64, dt_ctrl: f64) -> Result<usize> {
    let ratio = dt_ctrl / sim_dt;
    let n = ratio.round();
    if !(n >= 1.0) || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(invalid(format!("dt_ctrl {dt_ctrl} is not an integer multiple of sim_dt {sim_dt}")));
    }
    Ok(n as usize)
}

/// Advances one controller period with the references held. Outputs are
/// measured from the state at the start of the period. A state norm above
/// 1e3 p.u. yields [`Error::Divergence`] with `time` relative to the step start.
pub fn converter_step(
    state: &ConverterState,
    params: &ConverterParams,
    i_ref: [f64; 2],
    dt_ctrl: f64,
    noise: Option<&mut GaussianNoise>,
) -> Result<(ConverterState, ConverterOutputs)> {
    if !(i_ref[0].is_finite() && i_ref[1].is_finite()) {
        return Err(invalid("non-finite current reference"));
    }
    let n = substeps(params.sim_dt, dt_ctrl)?;
    let mut out = state.outputs();
    if let Some(src) = noise {
        out.v_d += src.sample();
        out.v_q += src.sample();
        out.i_d += src.sample();
    }
    let mut x = state.to_vector();
    for k in 0..n {
        x = rk4(params, &x, i_ref, params.sim_dt);
        let norm = x.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Divergence { time: (k + 1) as f64 * params.sim_dt, norm });
        }
    }
    Ok((ConverterState::from_vector(&x), out))
}

/// Operating point for the given references by damped Newton iteration from
/// the zero-current seed (capacitor at grid voltage, PLL aligned).
pub fn converter_equilibrium(params: &ConverterParams, i_d_ref: f64, i_q_ref: f64) -> Result<ConverterState> {
    params.validate()?;
    let i_ref = [i_d_ref, i_q_ref];
    let seed = ConverterState {
        v_cap: [params.v_grid_mag, 0.0],
        ..Default::default()
    };
    let mut x = seed.to_vector();
    let mut f = vector_field(params, &x, i_ref);
    for _ in 0..100 {
        if f.amax() <= 1e-10 {
            return Ok(ConverterState::from_vector(&x));
        }
        let jac = jacobian(params, &x, i_ref, 1e-7);
        let Some(step) = jac.lu().solve(&(-f)) else {
            return Err(Error::NoConvergence("singular Jacobian in equilibrium search".into()));
        };
        let mut t = 1.0;
        loop {
            let trial = x + step * t;
            let ft = vector_field(params, &trial, i_ref);
            if ft.norm() < f.norm() || t < 1e-6 {
                x = trial;
                f = ft;
                break;
            }
            t *= 0.5;
        }
    }
    if f.amax() <= 1e-10 {
        return Ok(ConverterState::from_vector(&x));
    }
    let (idx, worst) = f.iter().enumerate().fold((0, 0.0f64), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
    Err(Error::NoConvergence(format!("equilibrium residual of state {idx} is {worst:.3e} after 100 Newton steps")))
}

fn jacobian(p: &ConverterParams, x: &StateVec, i_ref: [f64; 2], h: f64) -> SMatrix<f64, CONVERTER_ORDER, CONVERTER_ORDER> {
    let mut jac = SMatrix::<f64, CONVERTER_ORDER, CONVERTER_ORDER>::zeros();
    for j in 0..CONVERTER_ORDER {
        let mut xp = *x;
        let mut xm = *x;
        xp[j] += h;
        xm[j] -= h;
        let col = (vector_field(p, &xp, i_ref) - vector_field(p, &xm, i_ref)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Central-difference Jacobian of the closed-loop vector field (default `h = 1e-6`).
pub fn linearize(params: &ConverterParams, equilibrium: &ConverterState, i_ref: [f64; 2], h: f64) -> Result<DMatrix<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid("finite-difference step must be positive"));
    }
    let jac = jacobian(params, &equilibrium.to_vector(), i_ref, h);
    Ok(DMatrix::from_column_slice(CONVERTER_ORDER, CONVERTER_ORDER, jac.as_slice()))
}

/// Largest real part among the eigenvalues of `a`.
pub fn dominant_real_part(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max)
}

/// Reactive-current reference giving capacitor voltage `v_d` at active current `i_d`, by secant iteration.
pub fn rated_reactive_current(params: &ConverterParams, i_d: f64, v_d: f64) -> Result<f64> {
    let residual = |i_q: f64| converter_equilibrium(params, i_d, i_q).map(|e| e.outputs().v_d - v_d);
    let (mut a, mut b) = (0.0, -0.3);
    let (mut fa, mut fb) = (residual(a)?, residual(b)?);
    for _ in 0..60 {
        if fb.abs() < 1e-12 {
            return Ok(b);
        }
        if fb == fa {
            break;
        }
        let c = b - fb * (b - a) / (fb - fa);
        a = b;
        fa = fb;
        b = c;
        fb = residual(b)?;
    }
    if fb.abs() < 1e-9 {
        return Ok(b);
    }
    Err(Error::NoConvergence(format!("no reactive current reaches V_d = {v_d} at I_d = {i_d}")))
}

/// How the constant current references of an open-loop run are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatingPoint {
    /// Fixed `(I_d, I_q)` references.
    Fixed { i_d: f64, i_q: f64 },
    /// `I_d` fixed and `I_q` solved so the capacitor voltage settles at `v_d`.
    RatedVoltage { i_d: f64, v_d: f64 },
}

impl Default for OperatingPoint {
    fn default() -> Self {
        OperatingPoint::RatedVoltage { i_d: 1.0, v_d: 1.0 }
    }
}

impl OperatingPoint {
    pub fn references(&self, params: &ConverterParams) -> Result<[f64; 2]> {
        match *self {
            OperatingPoint::Fixed { i_d, i_q } => Ok([i_d, i_q]),
            OperatingPoint::RatedVoltage { i_d, v_d } => Ok([i_d, rated_reactive_current(params, i_d, v_d)?]),
        }
    }
}

/// Dominant eigenvalue real part of the linearization at `op` for grid inductance `l_g`.
pub fn stability_margin(params: &ConverterParams, l_g: f64, op: OperatingPoint) -> Result<f64> {
    let p = params.clone().with_grid_inductance(l_g);
    let i_ref = op.references(&p)?;
    let eq = converter_equilibrium(&p, i_ref[0], i_ref[1])?;
    Ok(dominant_real_part(&linearize(&p, &eq, i_ref, 1e-6)?))
}

/// Grid inductance where the dominant linearized mode crosses the imaginary
/// axis, by bisection on `[lo, hi]` down to an interval of width `tol`.
pub fn critical_grid_inductance(params: &ConverterParams, op: OperatingPoint, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(lo > 0.0 && hi > lo && tol > 0.0) {
        return Err(invalid("need 0 < lo < hi and tol > 0"));
    }
    let (mut a, mut b) = (lo, hi);
    if stability_margin(params, a, op)? >= 0.0 {
        return Err(invalid(format!("converter is already unstable at L_g = {lo}")));
    }
    if stability_margin(params, b, op)? < 0.0 {
        return Err(invalid(format!("converter is still stable at L_g = {hi}")));
    }
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if stability_margin(params, mid, op)? < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Converter driven by current references with PLL-frame voltage/current measurements.
#[derive(Debug, Clone)]
pub struct ConverterPlant {
    params: ConverterParams,
    state: ConverterState,
    dt_ctrl: f64,
    time: f64,
    noise: GaussianNoise,
}

impl ConverterPlant {
    pub fn new(params: ConverterParams, state: ConverterState, dt_ctrl: f64, noise_seed: u64) -> Result<Self> {
        params.validate()?;
        substeps(params.sim_dt, dt_ctrl)?;
        let noise = GaussianNoise::new(params.meas_noise_power, noise_seed);
        Ok(Self { params, state, dt_ctrl, time: 0.0, noise })
    }

    /// Starts at the equilibrium for the given references.
    pub fn at_equilibrium(params: ConverterParams, i_ref: [f64; 2], dt_ctrl: f64, noise_seed: u64) -> Result<Self> {
        let eq = converter_equilibrium(&params, i_ref[0], i_ref[1])?;
        Self::new(params, eq, dt_ctrl, noise_seed)
    }

    pub fn params(&self) -> &ConverterParams {
        &self.params
    }
    pub fn state(&self) -> &ConverterState {
        &self.state
    }
    pub fn time(&self) -> f64 {
        self.time
    }
    pub fn dt_ctrl(&self) -> f64 {
        self.dt_ctrl
    }

    /// Changes the grid inductance mid-run.
    pub fn set_grid_inductance(&mut self, l_g: f64) -> Result<()> {
        if !(l_g.is_finite() && l_g > 0.0) {
            return Err(invalid("grid inductance must be positive"));
        }
        self.params.l_g = l_g;
        Ok(())
    }
}

impl Plant for ConverterPlant {
    fn inputs(&self) -> usize {
        2
    }
    fn outputs(&self) -> usize {
        3
    }
    fn step(&mut self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != 2 {
            return Err(invalid("converter expects (I_d_ref, I_q_ref)"));
        }
        let (next, out) = converter_step(&self.state, &self.params, [u[0], u[1]], self.dt_ctrl, Some(&mut self.noise))
            .map_err(|e| match e {
                Error::Divergence { time, norm } => Error::Divergence { time: self.time + time, norm },
                other => other,
            })?;
        self.state = next;
        self.time += self.dt_ctrl;
        Ok(out.to_array().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(l_g: f64) -> ConverterParams {
        ConverterParams { l_g, meas_noise_power: 0.0, ..Default::default() }
    }

    #[test]
    fn zero_reference_equilibrium() {
        let p = quiet(0.35);
        let eq = converter_equilibrium(&p, 0.0, 0.0).unwrap();
        assert!(converter_vector_field(&p, &eq, [0.0, 0.0]).amax() <= 1e-10);
        assert!(eq.i_conv[0].abs() < 1e-10 && eq.i_conv[1].abs() < 1e-10);
        assert!(eq.outputs().v_q.abs() < 1e-10);
        assert!(eq.x_pll.abs() < 1e-10);
        // only the capacitor charging current flows through the grid inductor
        let charging = p.c_f * p.v_grid_mag;
        assert!((eq.i_grid[0].hypot(eq.i_grid[1]) - charging).abs() < 0.02 * charging);
        assert!((eq.v_cap[0].hypot(eq.v_cap[1]) - 1.0).abs() < 0.03);
    }

    #[test]
    fn rated_current_equilibrium() {
        let p = quiet(0.35);
        let eq = converter_equilibrium(&p, 1.0, 0.0).unwrap();
        assert!(converter_vector_field(&p, &eq, [1.0, 0.0]).amax() <= 1e-10);
        assert!(eq.outputs().v_q.abs() < 1e-10);
        assert!((eq.outputs().i_d - 1.0).abs() < 1e-10);
    }

    #[test]
    fn equilibrium_is_stationary() {
        let p = quiet(0.1);
        let eq = converter_equilibrium(&p, 1.0, 0.0).unwrap();
        let mut s = eq;
        let y0 = eq.outputs().to_array();
        for _ in 0..100 {
            let (next, out) = converter_step(&s, &p, [1.0, 0.0], 1e-3, None).unwrap();
            s = next;
            for (a, b) in out.to_array().iter().zip(&y0) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn strong_grid_current_step() {
        let p = quiet(0.05);
        assert!(dominant_real_part(&linearize(&p, &converter_equilibrium(&p, 1.0, 0.0).unwrap(), [1.0, 0.0], 1e-6).unwrap()) < 0.0);
        let mut s = converter_equilibrium(&p, 0.0, 0.0).unwrap();
        let mut settled_at = None;
        for k in 0..100 {
            let (next, out) = converter_step(&s, &p, [1.0, 0.0], 1e-3, None).unwrap();
            s = next;
            if (out.i_d - 1.0).abs() > 0.02 {
                settled_at = None;
            } else if settled_at.is_none() {
                settled_at = Some(k);
            }
        }
        assert!(settled_at.unwrap() < 50, "settled at {settled_at:?} ms");
    }

    #[test]
    fn jacobian_is_second_order() {
        let p = quiet(0.2);
        let eq = converter_equilibrium(&p, 1.0, 0.0).unwrap();
        let a = linearize(&p, &eq, [1.0, 0.0], 1e-6).unwrap();
        let x = eq.to_vector();
        let v = StateVec::from_fn(|i, _| ((i * 7 + 3) % 5) as f64 - 2.0).normalize();
        let av = SVector::<f64, 10>::from_column_slice((&a * nalgebra::DVector::from_column_slice(v.as_slice())).as_slice());
        let err = |h: f64| (vector_field(&p, &(x + v * h), [1.0, 0.0]) - vector_field(&p, &x, [1.0, 0.0]) - av * h).norm();
        let ratio = err(1e-3) / err(5e-4);
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = quiet(0.2);
        let s = ConverterState::default();
        assert!(converter_step(&s, &p, [f64::NAN, 0.0], 1e-3, None).is_err());
        assert!(converter_step(&s, &p, [0.0, 0.0], 1.5e-5, None).is_err());
        assert!(ConverterParams { sim_dt: 1e-3, ..quiet(0.2) }.validate().is_err());
        assert!(ConverterParams { r_g: 0.0, ..quiet(0.2) }.validate().is_ok());
    }
}
