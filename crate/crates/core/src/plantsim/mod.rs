//! Simulated plants.
//!
//! * [`LtiPlant`]: discrete-time `x⁺ = Ax + Bu`, `y = Cx + Du` with optional measurement noise.
//! * [`ConverterPlant`]: the 10-state grid-connected converter with LCL filter,
//!   synchronous-frame PLL and PI current loop, integrated with fixed-step RK4.
//! * Benchmark generators for random and lightly damped high-order LTI plants.

mod converter;
mod lti;
mod noise;

pub use converter::{
    converter_equilibrium, converter_step, converter_vector_field, critical_grid_inductance, dominant_real_part, linearize, rated_reactive_current, stability_margin, ConverterOutputs,
    ConverterParams, ConverterPlant, ConverterState, OperatingPoint, CONVERTER_ORDER,
};
pub use lti::{lag, lightly_damped_lti, lti_step, observability_matrix, random_stable_lti, spectral_radius, LtiPlant, ModalSpec};
pub use noise::{sample_noise, GaussianNoise, NoiseSpec};

/// A sampled plant driven by a controller: one call per controller period.
pub trait Plant {
    fn inputs(&self) -> usize;
    fn outputs(&self) -> usize;
    /// Applies `u` for one period and returns the measured output of the sample.
    fn step(&mut self, u: &[f64]) -> crate::Result<Vec<f64>>;
}
