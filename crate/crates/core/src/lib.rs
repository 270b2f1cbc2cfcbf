//! Data-driven predictive control toolkit.
//!
//! * [`matquad`]: dense linear algebra and the convex QP solver.
//! * [`hankel`]: trajectory data, block-Hankel matrices, persistency of excitation.
//! * [`deepc`]: the regularized data-enabled predictive controller.
//! * [`sysid`]: N-step prediction-error identification (batch, Hankel and recursive).
//! * [`mpc`]: output-based MPC over an identified transition matrix.
//! * [`plantsim`]: LTI and grid-connected converter simulators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod deepc;
pub mod error;
pub mod hankel;
pub mod matquad;
pub mod mpc;
pub mod plantsim;
pub mod sysid;

pub use error::{Error, Result};
