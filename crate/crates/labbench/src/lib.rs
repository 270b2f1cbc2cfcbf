//! Scripted experiments on the predictive controllers: scenario files, a
//! timeline runner, time-domain costs, parameter sweeps and result export.

pub mod cost;
pub mod error;
pub mod export;
pub mod lemmas;
pub mod run;
pub mod scenario;
pub mod sweep;

pub use cost::time_domain_cost;
pub use error::{BenchError, BenchResult};
pub use export::{export, Exportable, Format};
pub use run::{run_scenario, Outcome, RunResult};
pub use scenario::Scenario;
pub use sweep::{sweep, SweepParam, SweepRow};
