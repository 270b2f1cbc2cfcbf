//! Scenario files: plant, controller, timeline and seeds.

use deepc_core::deepc::ControlConfig;
use deepc_core::plantsim::{ConverterParams, ModalSpec, OperatingPoint};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, BenchResult};

/// Grid inductance in p.u., or an offset from the bisection-located critical value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Inductance {
    Absolute(f64),
    AboveCritical { above_critical: f64 },
}

impl Inductance {
    pub fn resolve(&self, critical: Option<f64>) -> BenchResult<f64> {
        match *self {
            Inductance::Absolute(v) => Ok(v),
            Inductance::AboveCritical { above_critical } => critical
                .map(|c| c + above_critical)
                .ok_or_else(|| BenchError::Invalid("critical grid inductance was not located".into())),
        }
    }

    pub fn is_relative(&self) -> bool {
        matches!(self, Inductance::AboveCritical { .. })
    }

    /// Same kind with a new numeric value.
    pub fn with_value(&self, v: f64) -> Self {
        match self {
            Inductance::Absolute(_) => Inductance::Absolute(v),
            Inductance::AboveCritical { .. } => Inductance::AboveCritical { above_critical: v },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LtiModel {
    /// Gaussian `A` rescaled to the given spectral radius; needs `seeds.plant`.
    RandomStable { n: usize, m: usize, p: usize, spectral_radius: f64 },
    /// Modal plant with the listed dominant pairs; needs `seeds.plant`.
    LightlyDamped { n: usize, m: usize, p: usize, dt: f64, dominant: Vec<ModalSpec> },
    /// Explicit matrices, row-major.
    Explicit { a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, c: Vec<Vec<f64>>, d: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantSpec {
    Converter {
        #[serde(default)]
        params: ConverterParams,
        grid_inductance: Inductance,
        /// Open-loop references and bisection operating point.
        #[serde(default)]
        operating_point: OperatingPoint,
    },
    Lti {
        model: LtiModel,
        /// Standard deviation of white output noise, all channels.
        #[serde(default)]
        noise_std: f64,
        /// Open-loop input; zeros when empty.
        #[serde(default)]
        setpoint: Vec<f64>,
    },
}

impl PlantSpec {
    pub fn io_dims(&self) -> (usize, usize) {
        match self {
            PlantSpec::Converter { .. } => (2, 3),
            PlantSpec::Lti { model, .. } => match model {
                LtiModel::RandomStable { m, p, .. } | LtiModel::LightlyDamped { m, p, .. } => (*m, *p),
                LtiModel::Explicit { b, c, .. } => (b.first().map_or(0, |r| r.len()), c.len()),
            },
        }
    }
}

/// Where the controller's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// The samples recorded during the scenario's excitation window.
    #[default]
    Excitation,
    /// A separate open-loop record of `samples` steps with white setpoint noise,
    /// simulated before the run; needs `seeds.pretraining`.
    Pretraining {
        samples: usize,
        noise_power: f64,
        #[serde(default)]
        grid_inductance: Option<Inductance>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Identification {
    #[default]
    Batch,
    Rls {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
}

fn default_alpha() -> f64 {
    deepc_core::sysid::DEFAULT_RLS_ALPHA
}

fn default_spacing() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerSpec {
    None,
    Deepc {
        config: ControlConfig,
        #[serde(default)]
        data: DataSource,
        /// Number of leading data samples used (`T`); all when absent.
        #[serde(default)]
        data_length: Option<usize>,
    },
    PemMpc {
        config: ControlConfig,
        #[serde(default)]
        data: DataSource,
        #[serde(default)]
        data_length: Option<usize>,
        #[serde(default = "default_spacing")]
        spacing: usize,
        #[serde(default)]
        identification: Identification,
    },
}

impl ControllerSpec {
    pub fn config(&self) -> Option<&ControlConfig> {
        match self {
            ControllerSpec::None => None,
            ControllerSpec::Deepc { config, .. } | ControllerSpec::PemMpc { config, .. } => Some(config),
        }
    }

    pub fn config_mut(&mut self) -> Option<&mut ControlConfig> {
        match self {
            ControllerSpec::None => None,
            ControllerSpec::Deepc { config, .. } | ControllerSpec::PemMpc { config, .. } => Some(config),
        }
    }

    pub fn data(&self) -> Option<(&DataSource, Option<usize>)> {
        match self {
            ControllerSpec::None => None,
            ControllerSpec::Deepc { data, data_length, .. } | ControllerSpec::PemMpc { data, data_length, .. } => Some((data, *data_length)),
        }
    }
}

/// White setpoint noise on every input between `start` and `end` (seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Excitation {
    pub start: f64,
    pub end: f64,
    pub noise_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    /// Changes the converter grid inductance without informing the controller.
    SetGridInductance { value: Inductance },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    /// Measurement noise of the run.
    pub measurement: u64,
    /// One stream per input for the excitation window.
    #[serde(default)]
    pub excitation: Vec<u64>,
    /// Random plant generation.
    #[serde(default)]
    pub plant: Option<u64>,
    /// One stream per input, then the measurement-noise stream of the pre-training record.
    #[serde(default)]
    pub pretraining: Option<Vec<u64>>,
}

impl Seeds {
    /// Every seed, in a fixed order.
    pub fn all(&self) -> Vec<u64> {
        let mut v = vec![self.measurement];
        v.extend(&self.excitation);
        v.extend(self.plant);
        v.extend(self.pretraining.iter().flatten());
        v
    }
}

/// Weights, reference and window of the time-domain cost. Missing weights and
/// reference default to the first-sample blocks of the controller
/// configuration; the window defaults to activation until the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CostSpec {
    #[serde(default)]
    pub r_step: Option<Vec<f64>>,
    #[serde(default)]
    pub q_step: Option<Vec<f64>>,
    #[serde(default)]
    pub reference: Option<Vec<f64>>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub end: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub plant: PlantSpec,
    pub controller: ControllerSpec,
    #[serde(default)]
    pub excitation: Option<Excitation>,
    #[serde(default)]
    pub activation: Option<f64>,
    #[serde(default)]
    pub events: Vec<Event>,
    /// Run length in seconds.
    pub duration: f64,
    /// Controller sample period in seconds.
    pub dt: f64,
    pub seeds: Seeds,
    #[serde(default)]
    pub cost: CostSpec,
    /// Evaluate both DeePC and PEM-MPC optimization costs at activation.
    #[serde(default)]
    pub compare_costs: bool,
    /// Hold the last input after a non-optimal solve instead of stopping.
    #[serde(default)]
    pub hold_last_input: bool,
}

fn time_ok(t: f64) -> bool {
    t.is_finite() && t >= 0.0
}

impl Scenario {
    pub fn from_json(text: &str) -> BenchResult<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| BenchError::Invalid(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Index of the first sample at or after time `t`.
    pub fn step_at(&self, t: f64) -> usize {
        (t / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self) -> BenchResult<()> {
        let bad = |m: String| Err(BenchError::Invalid(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        let (m, p) = self.plant.io_dims();
        if m == 0 || p == 0 {
            return bad("plant needs at least one input and one output".into());
        }
        if let PlantSpec::Lti { model, noise_std, setpoint } = &self.plant {
            if !setpoint.is_empty() && setpoint.len() != m {
                return bad(format!("setpoint has length {}, plant has {m} inputs", setpoint.len()));
            }
            if !(noise_std.is_finite() && *noise_std >= 0.0) {
                return bad("noise_std must be non-negative".into());
            }
            if !matches!(model, LtiModel::Explicit { .. }) && self.seeds.plant.is_none() {
                return bad("random LTI plants need seeds.plant".into());
            }
        }
        if let Some(ex) = &self.excitation {
            if !(time_ok(ex.start) && ex.end > ex.start && ex.end <= self.duration) {
                return bad(format!("excitation window [{}, {}] is not inside the run", ex.start, ex.end));
            }
            if !(ex.noise_power.is_finite() && ex.noise_power >= 0.0) {
                return bad("excitation noise_power must be non-negative".into());
            }
            if self.seeds.excitation.len() != m {
                return bad(format!("seeds.excitation needs {m} entries, one per input"));
            }
            if let Some(a) = self.activation {
                if ex.end > a + 1e-12 {
                    return bad(format!("excitation ends at {} after activation at {a}", ex.end));
                }
            }
        }
        if let Some(a) = self.activation {
            if !(time_ok(a) && a < self.duration) {
                return bad(format!("activation {a} is outside the run"));
            }
        }
        let mut last = 0.0;
        for e in &self.events {
            if !(time_ok(e.time) && e.time <= self.duration) {
                return bad(format!("event at {} is outside the run", e.time));
            }
            if e.time < last {
                return bad("events must be time-ordered".into());
            }
            last = e.time;
            if matches!(e.action, Action::SetGridInductance { .. }) && !matches!(self.plant, PlantSpec::Converter { .. }) {
                return bad("grid inductance events need a converter plant".into());
            }
        }
        if let Some(cfg) = self.controller.config() {
            if (cfg.m, cfg.p) != (m, p) {
                return bad(format!("controller has (m, p) = ({}, {}), plant has ({m}, {p})", cfg.m, cfg.p));
            }
            let Some(a) = self.activation else {
                return bad("a controller needs an activation time".into());
            };
            if self.step_at(a) < cfg.t_ini {
                return bad(format!("activation at {a} leaves fewer than T_ini = {} samples", cfg.t_ini));
            }
            let (data, _) = self.controller.data().expect("controller has data");
            match data {
                DataSource::Excitation if self.excitation.is_none() => return bad("controller data needs an excitation window".into()),
                DataSource::Pretraining { .. } if self.seeds.pretraining.as_ref().map(|s| s.len()) != Some(m + 1) => {
                    return bad(format!("seeds.pretraining needs {} entries", m + 1));
                }
                _ => {}
            }
        }
        if self.compare_costs && self.controller.config().is_none() {
            return bad("compare_costs needs a controller configuration".into());
        }
        if let (Some(s), Some(e)) = (self.cost.start, self.cost.end) {
            if e <= s {
                return bad("cost window is empty".into());
            }
        }
        Ok(())
    }
}
