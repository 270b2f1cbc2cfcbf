use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deepc_core::hankel::TrajectoryData;
use deepc_core::sysid::DEFAULT_RLS_ALPHA;
use labbench::export::{export, Exportable, Format};
use labbench::lemmas::check_lemmas;
use labbench::run::{identify_from_data, run_scenario};
use labbench::scenario::Scenario;
use labbench::sweep::{sweep, SweepParam};
use labbench::BenchError;

#[derive(Parser)]
#[command(name = "labbench", version, about = "Scenario runner for data-driven predictive control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write series.csv and summary.json.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one scenario per grid value and write sweep.csv and sweep.json.
    Sweep {
        scenario: PathBuf,
        /// One of T, lambda_g, T_ini, L_g.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit an N-step transition matrix to a recorded CSV.
    Identify {
        data: PathBuf,
        #[arg(long)]
        tini: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = 1)]
        spacing: usize,
        /// Stream the trajectories through recursive least squares instead of the batch fit.
        #[arg(long)]
        rls: bool,
        #[arg(long, default_value_t = DEFAULT_RLS_ALPHA)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Audit the least-norm equivalence and the DeePC/PEM-MPC cost ordering on random instances.
    CheckLemmas {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        cases: usize,
    },
}

fn read(path: &Path) -> Result<String, BenchError> {
    fs::read_to_string(path).map_err(|e| BenchError::Io { path: path.into(), source: e })
}

fn out_dir(dir: &Path) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(|e| BenchError::Io { path: dir.into(), source: e })
}

fn execute(cmd: Command) -> Result<bool, BenchError> {
    match cmd {
        Command::Run { scenario, out } => {
            let s = Scenario::from_json(&read(&scenario)?)?;
            let res = run_scenario(&s)?;
            out_dir(&out)?;
            export(Exportable::Run { result: &res, scenario: &s }, &out.join("series.csv"), Format::Csv)?;
            export(Exportable::Run { result: &res, scenario: &s }, &out.join("summary.json"), Format::Json)?;
            println!(
                "steps {} outcome {:?} time_domain_cost {:.6e} solves {}",
                res.data.len(),
                res.outcome,
                res.time_domain_cost,
                res.solve_seconds.len()
            );
            Ok(true)
        }
        Command::Sweep { scenario, param, grid, out } => {
            let s = Scenario::from_json(&read(&scenario)?)?;
            let param: SweepParam = param.parse()?;
            let rows = sweep(&s, param, &grid)?;
            out_dir(&out)?;
            export(Exportable::Table { rows: &rows, param, scenario: &s }, &out.join("sweep.csv"), Format::Csv)?;
            export(Exportable::Table { rows: &rows, param, scenario: &s }, &out.join("sweep.json"), Format::Json)?;
            for r in &rows {
                println!("{param} {} cost {:?} c_deepc {:?} c_pem_mpc {:?} {}", r.value, r.time_domain_cost, r.c_deepc, r.c_pem_mpc, r.error.as_deref().unwrap_or(""));
            }
            Ok(rows.iter().all(|r| r.error.is_none()))
        }
        Command::Identify { data, tini, horizon, spacing, rls, alpha, out } => {
            let file = fs::File::open(&data).map_err(|e| BenchError::Io { path: data.clone(), source: e })?;
            let record = TrajectoryData::read_csv(file)?;
            let model = identify_from_data(&record, tini, horizon, spacing, rls.then_some(alpha))?;
            let f = fs::File::create(&out).map_err(|e| BenchError::Io { path: out.clone(), source: e })?;
            model.write_text(f).map_err(|e| BenchError::Io { path: out.clone(), source: e })?;
            println!("K {}x{} from {} samples", model.k().nrows(), model.k().ncols(), record.len());
            Ok(true)
        }
        Command::CheckLemmas { seed, cases } => {
            let report = check_lemmas(seed, cases)?;
            let (one, two) = (report.least_norm_violations(), report.ordering_violations());
            let worst_gap = report.cases.iter().map(|c| c.gap / c.gap_allowance).fold(0.0, f64::max);
            println!("cases {cases} least-norm violations {one} (worst gap/allowance {worst_gap:.3e}) cost-ordering violations {two}");
            Ok(one == 0 && two == 0)
        }
    }
}

fn error_line(kind: &str, message: &str) {
    eprintln!("{}", serde_json::json!({ "error": { "kind": kind, "message": message } }));
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            error_line("usage", &e.kind().to_string());
            return ExitCode::from(2);
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            error_line("check-failed", "one or more checks failed");
            ExitCode::from(3)
        }
        Err(e) => {
            error_line(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
