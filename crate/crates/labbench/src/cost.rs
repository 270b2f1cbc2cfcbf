//! Time-domain cost of a recorded run.

use nalgebra::{DMatrix, DVector};

use crate::error::{BenchError, BenchResult};
use crate::run::{Outcome, RunResult};

/// `Σ_k u_kᵀ R u_k + (y_k − r)ᵀ Q (y_k − r)` over the samples with `t_k ∈ [start, end)`.
///
/// Infinite when the run diverged or stopped before the end of the window.
pub fn time_domain_cost(
    res: &RunResult,
    r_step: &DMatrix<f64>,
    q_step: &DMatrix<f64>,
    r: &DVector<f64>,
    window: (f64, f64),
) -> BenchResult<f64> {
    let (m, p) = (res.data.m(), res.data.p());
    if r_step.shape() != (m, m) || q_step.shape() != (p, p) || r.len() != p {
        return Err(BenchError::Invalid(format!("cost weights must be {m}x{m} and {p}x{p} with a length-{p} reference")));
    }
    let (start, end) = window;
    let run_end = res.planned_steps as f64 * res.dt;
    if !(start >= 0.0 && end <= run_end + 1e-9 && end > start) {
        return Err(BenchError::Invalid(format!("cost window [{start}, {end}) is not inside the run [0, {run_end})")));
    }
    let k0 = (start / res.dt - 1e-9).ceil() as usize;
    let k1 = ((end / res.dt - 1e-9).ceil() as usize).min(res.planned_steps);
    if k0 >= k1 {
        return Err(BenchError::Invalid("cost window holds no samples".into()));
    }
    if k1 > res.data.len() {
        if res.outcome != Outcome::Completed {
            return Ok(f64::INFINITY);
        }
        return Err(BenchError::Invalid(format!("cost window ends at sample {k1} but the run stopped at {}", res.data.len())));
    }
    let mut total = 0.0;
    for k in k0..k1 {
        let u = DVector::from_column_slice(res.data.input(k));
        let e = DVector::from_column_slice(res.data.output(k)) - r;
        total += (u.transpose() * r_step * &u)[(0, 0)] + (e.transpose() * q_step * &e)[(0, 0)];
    }
    Ok(total)
}
