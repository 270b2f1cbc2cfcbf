//! CSV and JSON artifacts of runs and sweeps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use deepc_core::matquad::QpStatus;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, BenchResult};
use crate::run::{Outcome, RunResult};
use crate::scenario::Scenario;
use crate::sweep::{SweepParam, SweepRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// What to write.
#[derive(Debug, Clone, Copy)]
pub enum Exportable<'a> {
    Run { result: &'a RunResult, scenario: &'a Scenario },
    Table { rows: &'a [SweepRow], param: SweepParam, scenario: &'a Scenario },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub solves: usize,
    pub optimal: usize,
    pub infeasible: usize,
    pub max_iterations: usize,
    pub fallbacks: usize,
    pub mean_seconds: Option<f64>,
    pub max_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: Scenario,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub outcome: Outcome,
    /// `None` when infinite.
    pub time_domain_cost: Option<f64>,
    pub cost_window: (f64, f64),
    pub c_deepc: Option<f64>,
    pub c_pem_mpc: Option<f64>,
    pub critical_inductance: Option<f64>,
    pub solver: SolverStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub scenario: Scenario,
    pub seeds: Vec<u64>,
    pub parameter: SweepParam,
    pub rows: Vec<SweepRow>,
}

pub fn solver_stats(res: &RunResult) -> SolverStats {
    let count = |s: QpStatus| res.statuses.iter().filter(|x| **x == Some(s)).count();
    let n = res.solve_seconds.len();
    SolverStats {
        solves: n,
        optimal: count(QpStatus::Optimal),
        infeasible: count(QpStatus::Infeasible),
        max_iterations: count(QpStatus::MaxIterations),
        fallbacks: res.fallbacks,
        mean_seconds: (n > 0).then(|| res.solve_seconds.iter().sum::<f64>() / n as f64),
        max_seconds: res.solve_seconds.iter().cloned().reduce(f64::max),
    }
}

pub fn run_summary(res: &RunResult, scenario: &Scenario) -> RunSummary {
    RunSummary {
        scenario: scenario.clone(),
        seeds: scenario.seeds.all(),
        steps: res.data.len(),
        outcome: res.outcome,
        time_domain_cost: res.time_domain_cost.is_finite().then_some(res.time_domain_cost),
        cost_window: res.cost_window,
        c_deepc: res.c_deepc,
        c_pem_mpc: res.c_pem_mpc,
        critical_inductance: res.critical_inductance,
        solver: solver_stats(res),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.16e}"))
}

fn table_csv<W: Write>(rows: &[SweepRow], param: SweepParam, w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([param.to_string().as_str(), "time_domain_cost", "c_deepc", "c_pem_mpc", "diverged", "error"])?;
    for r in rows {
        wr.write_record([
            format!("{:.16e}", r.value),
            opt(r.time_domain_cost),
            opt(r.c_deepc),
            opt(r.c_pem_mpc),
            r.diverged.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Writes `item` to `path`: time series or sweep table as CSV, or a JSON summary.
pub fn export(item: Exportable<'_>, path: &Path, format: Format) -> BenchResult<()> {
    let file = File::create(path).map_err(|e| BenchError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| BenchError::io(path, e);
    match (item, format) {
        (Exportable::Run { result, .. }, Format::Csv) => result.data.write_csv(&mut w).map_err(io)?,
        (Exportable::Run { result, scenario }, Format::Json) => {
            serde_json::to_writer_pretty(&mut w, &run_summary(result, scenario)).map_err(|e| io(e.into()))?
        }
        (Exportable::Table { rows, param, .. }, Format::Csv) => table_csv(rows, param, &mut w).map_err(|e| io(e.into()))?,
        (Exportable::Table { rows, param, scenario }, Format::Json) => {
            let s = SweepSummary { scenario: scenario.clone(), seeds: scenario.seeds.all(), parameter: param, rows: rows.to_vec() };
            serde_json::to_writer_pretty(&mut w, &s).map_err(|e| io(e.into()))?
        }
    }
    w.flush().map_err(io)
}
