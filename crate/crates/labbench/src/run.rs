//! Timeline execution: excitation, identification, receding-horizon control and disturbances.

use std::collections::VecDeque;
use std::time::Instant;

use deepc_core::deepc::{deepc_step, ControlConfig, DeepcController, RecedingHorizon};
use deepc_core::hankel::{partition, HankelBlocks, InitWindow, TrajectoryData};
use deepc_core::matquad::QpStatus;
use deepc_core::mpc::{pem_mpc_combined_cost, MpcController};
use deepc_core::plantsim::{
    critical_grid_inductance, lightly_damped_lti, random_stable_lti, ConverterParams, ConverterPlant, GaussianNoise, LtiPlant,
    NoiseSpec, OperatingPoint, Plant,
};
use deepc_core::sysid::{extract_trajectories, k_from_hankel, pem_batch, rls_init, ModelDims, TransitionModel};
use deepc_core::Error;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cost::time_domain_cost;
use crate::error::{BenchError, BenchResult};
use crate::scenario::{Action, ControllerSpec, DataSource, Identification, Inductance, LtiModel, PlantSpec, Scenario};

const LTI_DIVERGENCE: f64 = 1e8;

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Diverged { time: f64, norm: f64 },
    /// A non-optimal solve without the hold-last-input fallback.
    Stopped { time: f64, status: QpStatus },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Applied inputs and measured outputs, one row per controller period.
    pub data: TrajectoryData,
    /// Solver status at the steps where a solve happened.
    pub statuses: Vec<Option<QpStatus>>,
    /// Wall-clock seconds per solve, in solve order.
    pub solve_seconds: Vec<f64>,
    /// Per-sample output reference of the time-domain cost.
    pub reference: Vec<f64>,
    pub r_step: DMatrix<f64>,
    pub q_step: DMatrix<f64>,
    /// Cost window in seconds.
    pub cost_window: (f64, f64),
    /// Infinite when the run diverged inside the cost window.
    pub time_domain_cost: f64,
    pub c_deepc: Option<f64>,
    pub c_pem_mpc: Option<f64>,
    pub outcome: Outcome,
    pub critical_inductance: Option<f64>,
    pub fallbacks: usize,
    pub dt: f64,
    pub planned_steps: usize,
    pub activation_step: Option<usize>,
}

impl RunResult {
    pub fn diverged(&self) -> bool {
        matches!(self.outcome, Outcome::Diverged { .. })
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

enum SimPlant {
    Converter(ConverterPlant),
    Lti(LtiPlant),
}

impl SimPlant {
    fn step(&mut self, u: &[f64], time: f64) -> deepc_core::Result<Vec<f64>> {
        match self {
            SimPlant::Converter(c) => c.step(u),
            SimPlant::Lti(l) => {
                let y = l.step(u)?;
                let norm = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if !norm.is_finite() || norm > LTI_DIVERGENCE {
                    return Err(Error::Divergence { time, norm });
                }
                Ok(y)
            }
        }
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> BenchResult<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if rows.iter().any(|x| x.len() != c) {
        return Err(BenchError::Invalid(format!("matrix {what} has ragged rows")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn build_lti(model: &LtiModel, noise_std: f64, plant_seed: Option<u64>, noise_seed: u64) -> BenchResult<LtiPlant> {
    let seed = plant_seed.unwrap_or(0);
    let plant = match model {
        LtiModel::RandomStable { n, m, p, spectral_radius } => random_stable_lti(*n, *m, *p, *spectral_radius, seed)?,
        LtiModel::LightlyDamped { n, m, p, dt, dominant } => lightly_damped_lti(*n, *m, *p, *dt, dominant, seed)?,
        LtiModel::Explicit { a, b, c, d } => LtiPlant::new(matrix(a, "a")?, matrix(b, "b")?, matrix(c, "c")?, matrix(d, "d")?)?,
    };
    if noise_std > 0.0 {
        let p = plant.c().nrows();
        return Ok(plant.with_measurement_noise(vec![noise_std; p], noise_seed)?);
    }
    Ok(plant)
}

/// Plant, its open-loop setpoint and its noiseless initial output.
fn build_plant(
    spec: &PlantSpec,
    l_g: Option<f64>,
    plant_seed: Option<u64>,
    noise_seed: u64,
    dt: f64,
) -> BenchResult<(SimPlant, Vec<f64>, Vec<f64>)> {
    match spec {
        PlantSpec::Converter { params, operating_point, .. } => {
            let params = params.clone().with_grid_inductance(l_g.expect("converter inductance resolved"));
            let setpoint = operating_point.references(&params)?;
            let plant = ConverterPlant::at_equilibrium(params, setpoint, dt, noise_seed)?;
            let y0 = plant.state().outputs().to_array().to_vec();
            Ok((SimPlant::Converter(plant), setpoint.to_vec(), y0))
        }
        PlantSpec::Lti { model, noise_std, setpoint } => {
            let plant = build_lti(model, *noise_std, plant_seed, noise_seed)?;
            let m = plant.b().ncols();
            let setpoint = if setpoint.is_empty() { vec![0.0; m] } else { setpoint.clone() };
            let y0 = plant.output_of(plant.state(), &DVector::from_column_slice(&setpoint)).as_slice().to_vec();
            Ok((SimPlant::Lti(plant), setpoint, y0))
        }
    }
}

fn inductances(s: &Scenario) -> Vec<Inductance> {
    let mut v = Vec::new();
    if let PlantSpec::Converter { grid_inductance, .. } = &s.plant {
        v.push(*grid_inductance);
    }
    for e in &s.events {
        let Action::SetGridInductance { value } = &e.action;
        v.push(*value);
    }
    if let Some((DataSource::Pretraining { grid_inductance: Some(l), .. }, _)) = s.controller.data() {
        v.push(*l);
    }
    v
}

/// Bisection-located critical grid inductance on `[0.05, 1.0]` p.u.
pub fn locate_critical(params: &ConverterParams, op: OperatingPoint) -> BenchResult<f64> {
    Ok(critical_grid_inductance(params, op, 0.05, 1.0, 1e-4)?)
}

fn excitation_record(
    s: &Scenario,
    l_g: Option<f64>,
    samples: usize,
    noise_power: f64,
    seeds: &[u64],
) -> BenchResult<TrajectoryData> {
    let (m, p) = s.plant.io_dims();
    let (mut plant, setpoint, _) = build_plant(&s.plant, l_g, s.seeds.plant, seeds[m], s.dt)?;
    let mut tau: Vec<GaussianNoise> = seeds[..m].iter().map(|&sd| NoiseSpec::new(noise_power, sd).source()).collect();
    let mut data = TrajectoryData::empty(m, p);
    for k in 0..samples {
        let u: Vec<f64> = setpoint.iter().zip(tau.iter_mut()).map(|(r, t)| r + t.sample()).collect();
        let y = plant.step(&u, k as f64 * s.dt)?;
        data.push(&u, &y)?;
    }
    Ok(data)
}

fn truncate(data: TrajectoryData, length: Option<usize>) -> BenchResult<TrajectoryData> {
    match length {
        None => Ok(data),
        Some(t) if t <= data.len() => Ok(data.slice(0, t)?),
        Some(t) => Err(BenchError::Invalid(format!("data_length {t} exceeds the {} recorded samples", data.len()))),
    }
}

/// Identified N-step model from `data`.
pub fn identify(data: &TrajectoryData, cfg: &ControlConfig, spacing: usize, method: Identification) -> BenchResult<TransitionModel> {
    if (data.m(), data.p()) != (cfg.m, cfg.p) {
        return Err(BenchError::Invalid("data dimensions differ from the configuration".into()));
    }
    let alpha = match method {
        Identification::Batch => None,
        Identification::Rls { alpha } => Some(alpha),
    };
    identify_from_data(data, cfg.t_ini, cfg.horizon, spacing, alpha)
}

/// Batch or RLS (with the given `α`) transition matrix of a recorded CSV.
pub fn identify_from_data(data: &TrajectoryData, t_ini: usize, horizon: usize, spacing: usize, rls_alpha: Option<f64>) -> BenchResult<TransitionModel> {
    let dims = ModelDims::new(t_ini, horizon, data.m(), data.p())?;
    let samples = extract_trajectories(data, t_ini, horizon, spacing)?;
    if samples.is_empty() {
        return Err(BenchError::Invalid(format!("{} samples hold no trajectory of length T_ini + N", data.len())));
    }
    match rls_alpha {
        None => Ok(pem_batch(&samples, dims)?),
        Some(alpha) => {
            let mut state = rls_init(dims, alpha)?;
            for sample in &samples {
                state.update(sample)?;
            }
            Ok(state.model()?)
        }
    }
}

/// Combined costs of DeePC and of the Hankel-identified PEM-MPC on the same blocks and window.
pub fn compare_optimization_costs(blocks: &HankelBlocks, w: &InitWindow, cfg: &ControlConfig) -> BenchResult<(f64, f64)> {
    let d = deepc_step(blocks, w, cfg)?;
    if d.status != QpStatus::Optimal {
        return Err(Error::Infeasible.into());
    }
    let model = k_from_hankel(blocks)?;
    let c_pem = pem_mpc_combined_cost(blocks, &model, w, cfg)?;
    Ok((d.combined_cost, c_pem))
}

fn build_controller(spec: &ControllerSpec, data: &TrajectoryData) -> BenchResult<Box<dyn RecedingHorizon + Send>> {
    match spec {
        ControllerSpec::None => unreachable!("no controller to build"),
        ControllerSpec::Deepc { config, .. } => {
            let blocks = partition(data, config.t_ini, config.horizon, None)?;
            Ok(Box::new(DeepcController::new(blocks, config.clone())?))
        }
        ControllerSpec::PemMpc { config, spacing, identification, .. } => {
            let model = identify(data, config, *spacing, *identification)?;
            Ok(Box::new(MpcController::new(model, config.clone())?))
        }
    }
}

struct CostSetup {
    r_step: DMatrix<f64>,
    q_step: DMatrix<f64>,
    reference: Vec<f64>,
    window: (f64, f64),
}

fn cost_setup(s: &Scenario, y0: &[f64]) -> BenchResult<CostSetup> {
    let (m, p) = s.plant.io_dims();
    let cfg = s.controller.config();
    let diag = |v: &Option<Vec<f64>>, n: usize, what: &str| -> BenchResult<Option<DMatrix<f64>>> {
        match v {
            None => Ok(None),
            Some(d) if d.len() == n => Ok(Some(DMatrix::from_diagonal(&DVector::from_column_slice(d)))),
            Some(d) => Err(BenchError::Invalid(format!("cost {what} has length {}, expected {n}", d.len()))),
        }
    };
    let r_step = match diag(&s.cost.r_step, m, "r_step")? {
        Some(r) => r,
        None => cfg.map_or_else(|| DMatrix::zeros(m, m), |c| c.r_weight.view((0, 0), (m, m)).clone_owned()),
    };
    let q_step = match diag(&s.cost.q_step, p, "q_step")? {
        Some(q) => q,
        None => cfg.map_or_else(|| DMatrix::identity(p, p), |c| c.q_weight.view((0, 0), (p, p)).clone_owned()),
    };
    let reference = match &s.cost.reference {
        Some(r) if r.len() == p => r.clone(),
        Some(r) => return Err(BenchError::Invalid(format!("cost reference has length {}, expected {p}", r.len()))),
        None => cfg.map_or_else(|| y0.to_vec(), |c| c.reference.rows(0, p).iter().cloned().collect()),
    };
    let start = s.cost.start.or(s.activation).unwrap_or(0.0);
    let end = s.cost.end.unwrap_or(s.duration);
    Ok(CostSetup { r_step, q_step, reference, window: (start, end) })
}

/// Executes the scenario timeline.
pub fn run_scenario(s: &Scenario) -> BenchResult<RunResult> {
    s.validate()?;
    let (m, p) = s.plant.io_dims();
    let critical = match &s.plant {
        PlantSpec::Converter { params, operating_point, .. } if inductances(s).iter().any(|l| l.is_relative()) => {
            Some(locate_critical(params, *operating_point)?)
        }
        _ => None,
    };
    let l_g0 = match &s.plant {
        PlantSpec::Converter { grid_inductance, .. } => Some(grid_inductance.resolve(critical)?),
        _ => None,
    };
    let (mut plant, setpoint, y0) = build_plant(&s.plant, l_g0, s.seeds.plant, s.seeds.measurement, s.dt)?;
    let costs = cost_setup(s, &y0)?;

    let pretraining = match s.controller.data() {
        Some((DataSource::Pretraining { samples, noise_power, grid_inductance }, _)) => {
            let l_g = match grid_inductance {
                Some(l) => Some(l.resolve(critical)?),
                None => l_g0,
            };
            let seeds = s.seeds.pretraining.as_ref().expect("validated");
            Some(excitation_record(s, l_g, *samples, *noise_power, seeds)?)
        }
        _ => None,
    };

    let steps = s.steps();
    let (ex_start, ex_end) = s.excitation.map_or((usize::MAX, usize::MAX), |e| (s.step_at(e.start), s.step_at(e.end)));
    let mut tau: Vec<GaussianNoise> = match &s.excitation {
        Some(e) => s.seeds.excitation.iter().map(|&sd| NoiseSpec::new(e.noise_power, sd).source()).collect(),
        None => Vec::new(),
    };
    let act = s.activation.filter(|_| s.controller.config().is_some()).map(|a| s.step_at(a));
    let mut events: VecDeque<(usize, &Action)> = s.events.iter().map(|e| (s.step_at(e.time), &e.action)).collect();

    let mut result = RunResult {
        data: TrajectoryData::empty(m, p),
        statuses: Vec::with_capacity(steps),
        solve_seconds: Vec::new(),
        reference: costs.reference.clone(),
        r_step: costs.r_step.clone(),
        q_step: costs.q_step.clone(),
        cost_window: costs.window,
        time_domain_cost: f64::NAN,
        c_deepc: None,
        c_pem_mpc: None,
        outcome: Outcome::Completed,
        critical_inductance: critical,
        fallbacks: 0,
        dt: s.dt,
        planned_steps: steps,
        activation_step: act,
    };
    let mut controller: Option<Box<dyn RecedingHorizon + Send>> = None;
    let mut queue: VecDeque<Vec<f64>> = VecDeque::new();
    let mut last_u = setpoint.clone();

    for k in 0..steps {
        let t = k as f64 * s.dt;
        while events.front().is_some_and(|(ke, _)| *ke <= k) {
            let (_, action) = events.pop_front().expect("nonempty");
            match action {
                Action::SetGridInductance { value } => {
                    if let SimPlant::Converter(c) = &mut plant {
                        c.set_grid_inductance(value.resolve(critical)?)?;
                    }
                }
            }
        }
        let mut status = None;
        let u = if act.is_some_and(|a| k >= a) {
            if controller.is_none() {
                let (source, length) = s.controller.data().expect("controller configured");
                let data = match source {
                    DataSource::Excitation => result.data.slice(ex_start, ex_end - ex_start)?,
                    DataSource::Pretraining { .. } => pretraining.clone().expect("pre-training record"),
                };
                let data = truncate(data, length)?;
                let cfg = s.controller.config().expect("controller configured");
                if s.compare_costs {
                    let blocks = partition(&data, cfg.t_ini, cfg.horizon, None)?;
                    let w = InitWindow::from_data(&result.data, cfg.t_ini, k)?;
                    let (cd, cp) = compare_optimization_costs(&blocks, &w, cfg)?;
                    result.c_deepc = Some(cd);
                    result.c_pem_mpc = Some(cp);
                }
                controller = Some(build_controller(&s.controller, &data)?);
            }
            if queue.is_empty() {
                let ctrl = controller.as_mut().expect("built above");
                let cfg = ctrl.config().clone();
                let w = InitWindow::from_data(&result.data, cfg.t_ini, k)?;
                let start = Instant::now();
                let plan = ctrl.plan(&w)?;
                result.solve_seconds.push(start.elapsed().as_secs_f64());
                status = Some(plan.status);
                if plan.status == QpStatus::Optimal {
                    queue.extend((0..cfg.s_apply).map(|j| plan.u_star.rows(j * m, m).iter().cloned().collect::<Vec<_>>()));
                } else if s.hold_last_input {
                    log::warn!("solve at t = {t:.4} s returned {:?}; holding the last input", plan.status);
                    result.fallbacks += 1;
                    queue.push_back(last_u.clone());
                } else {
                    result.statuses.push(status);
                    result.outcome = Outcome::Stopped { time: t, status: plan.status };
                    break;
                }
            }
            queue.pop_front().expect("queued input")
        } else if k >= ex_start && k < ex_end {
            setpoint.iter().zip(tau.iter_mut()).map(|(r, n)| r + n.sample()).collect()
        } else {
            setpoint.clone()
        };
        match plant.step(&u, t) {
            Ok(y) => {
                result.data.push(&u, &y)?;
                result.statuses.push(status);
                last_u = u;
            }
            Err(Error::Divergence { time, norm }) => {
                result.outcome = Outcome::Diverged { time, norm };
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    result.statuses.truncate(result.data.len());
    result.time_domain_cost = time_domain_cost(&result, &costs.r_step, &costs.q_step, &DVector::from_vec(costs.reference), costs.window)?;
    Ok(result)
}
