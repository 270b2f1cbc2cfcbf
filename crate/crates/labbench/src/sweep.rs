//! One-parameter sweeps over independent runs.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, BenchResult};
use crate::run::run_scenario;
use crate::scenario::{ControllerSpec, PlantSpec, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Data length used by the controller.
    #[serde(rename = "T")]
    DataLength,
    #[serde(rename = "lambda_g")]
    LambdaG,
    #[serde(rename = "T_ini")]
    TIni,
    /// Converter grid inductance, in the unit of the scenario's own value.
    #[serde(rename = "L_g")]
    GridInductance,
}

impl FromStr for SweepParam {
    type Err = BenchError;

    fn from_str(s: &str) -> BenchResult<Self> {
        match s {
            "T" => Ok(SweepParam::DataLength),
            "lambda_g" => Ok(SweepParam::LambdaG),
            "T_ini" => Ok(SweepParam::TIni),
            "L_g" => Ok(SweepParam::GridInductance),
            other => Err(BenchError::Invalid(format!("unknown sweep parameter `{other}`; expected T, lambda_g, T_ini or L_g"))),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::DataLength => "T",
            SweepParam::LambdaG => "lambda_g",
            SweepParam::TIni => "T_ini",
            SweepParam::GridInductance => "L_g",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    /// `None` when the run failed or diverged.
    pub time_domain_cost: Option<f64>,
    pub c_deepc: Option<f64>,
    pub c_pem_mpc: Option<f64>,
    pub diverged: bool,
    pub error: Option<String>,
}

fn count(v: f64, what: &str) -> BenchResult<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v.is_finite() {
        Ok(v as usize)
    } else {
        Err(BenchError::Invalid(format!("{what} must be a positive integer, got {v}")))
    }
}

/// `base` with `param` set to `value`.
pub fn apply_parameter(base: &Scenario, param: SweepParam, value: f64) -> BenchResult<Scenario> {
    let mut s = base.clone();
    match param {
        SweepParam::DataLength => match &mut s.controller {
            ControllerSpec::Deepc { data_length, .. } | ControllerSpec::PemMpc { data_length, .. } => *data_length = Some(count(value, "T")?),
            ControllerSpec::None => return Err(BenchError::Invalid("T needs a controller".into())),
        },
        SweepParam::LambdaG => {
            let cfg = s.controller.config_mut().ok_or_else(|| BenchError::Invalid("lambda_g needs a controller".into()))?;
            cfg.lambda_g = value;
            cfg.validate()?;
        }
        SweepParam::TIni => {
            let cfg = s.controller.config_mut().ok_or_else(|| BenchError::Invalid("T_ini needs a controller".into()))?;
            cfg.t_ini = count(value, "T_ini")?;
        }
        SweepParam::GridInductance => match &mut s.plant {
            PlantSpec::Converter { grid_inductance, .. } => *grid_inductance = grid_inductance.with_value(value),
            _ => return Err(BenchError::Invalid("L_g needs a converter plant".into())),
        },
    }
    s.validate()?;
    Ok(s)
}

fn point(base: &Scenario, param: SweepParam, value: f64) -> SweepRow {
    let outcome = apply_parameter(base, param, value).and_then(|s| run_scenario(&s));
    match outcome {
        Ok(r) => SweepRow {
            value,
            time_domain_cost: r.time_domain_cost.is_finite().then_some(r.time_domain_cost),
            c_deepc: r.c_deepc,
            c_pem_mpc: r.c_pem_mpc,
            diverged: r.diverged(),
            error: None,
        },
        Err(e) => SweepRow { value, time_domain_cost: None, c_deepc: None, c_pem_mpc: None, diverged: false, error: Some(e.to_string()) },
    }
}

/// One independent run per grid value, in parallel; rows follow grid order.
pub fn sweep(base: &Scenario, param: SweepParam, grid: &[f64]) -> BenchResult<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(BenchError::Invalid("sweep grid is empty".into()));
    }
    base.validate()?;
    Ok(grid.par_iter().map(|&v| point(base, param, v)).collect())
}
