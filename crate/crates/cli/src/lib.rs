//! Drivers behind the `nmpc` binary: single solves, closed-loop runs and the
//! PANOC-vs-FBS comparison on the chain benchmark.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nmpc_core::batch::{join, with_threads};
use nmpc_core::chain::{build_scenario, Scenario};
use nmpc_core::linalg::norm_inf;
use nmpc_core::mpc::{simulate, write_mpc_csv, MpcOptions, MpcResult};
use nmpc_core::solver::{write_trace_csv, Solution, SolverOptions, Status};
use nmpc_core::{Algorithm, Error};
use serde::Serialize;

pub use config::RunConfig;

/// Tolerance of the benchmark comparison.
pub const BENCH_TOL: f64 = 1e-6;
/// Iteration cap for the forward-backward run of the comparison.
pub const BENCH_FBS_MAX_ITER: usize = 50_000;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Solver(_) => 2,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Validation(_) | Error::Dimension { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub status: Status,
    pub iterations: usize,
    pub final_residual: f64,
    pub fbe_final: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub panoc_iters: usize,
    pub fbs_iters: usize,
    /// `fbs_iters / panoc_iters`.
    pub ratio: f64,
    pub panoc_status: Status,
    pub fbs_status: Status,
    /// `‖ū_panoc − ū_fbs‖∞`.
    pub solution_distance: f64,
}

pub fn scenario(cfg: &RunConfig) -> Result<Scenario, CliError> {
    Ok(build_scenario(
        &cfg.problem.chain,
        cfg.horizon.ts,
        cfg.horizon.n,
    )?)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let f = File::create(&path)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(dir.join(name))
}

fn require_converged(what: &str, status: Status) -> Result<(), CliError> {
    if status == Status::Converged {
        Ok(())
    } else {
        Err(CliError::Solver(format!(
            "{what} ended with status {status}"
        )))
    }
}

/// Solves the first problem of the closed loop from a zero input sequence and
/// writes `trace.csv` and `summary.json`.
pub fn run_solve(cfg: &RunConfig) -> Result<SolveSummary, CliError> {
    let sc = scenario(cfg)?;
    let u0 = vec![0.0; sc.spec.num_inputs()];
    let clock = Instant::now();
    let sol = cfg
        .solver
        .algorithm
        .solve(&sc.spec, &u0, &cfg.solver.options)?;
    let summary = SolveSummary {
        status: sol.status,
        iterations: sol.iterations,
        final_residual: sol.final_residual,
        fbe_final: sol.fbe_final,
        wall_time_s: clock.elapsed().as_secs_f64(),
    };
    let dir = &cfg.output.dir;
    if cfg.output.trace {
        let mut w = create(dir, "trace.csv")?;
        write_trace_csv(&sol.trace, &mut w)?;
        w.flush()?;
    }
    write_json(dir, "summary.json", &summary)?;
    require_converged(cfg.solver.algorithm.as_str(), sol.status)?;
    Ok(summary)
}

/// Closed-loop simulation; writes `mpc.csv` and `mpc_result.json`.
pub fn run_mpc(cfg: &RunConfig) -> Result<MpcResult, CliError> {
    let sc = scenario(cfg)?;
    let mpc = MpcOptions {
        total_time: cfg.simulation.total_time,
        warm_start: cfg.simulation.warm_start,
        algorithm: cfg.solver.algorithm,
    };
    let res = simulate(&sc, &cfg.solver.options, &mpc).map_err(|e| match e {
        Error::ClosedLoop { step, status } => {
            CliError::Solver(format!("solve failed at step {step} with status {status}"))
        }
        e => e.into(),
    })?;
    let dir = &cfg.output.dir;
    let mut w = create(dir, "mpc.csv")?;
    write_mpc_csv(&res.records, &mut w)?;
    w.flush()?;
    write_json(dir, "mpc_result.json", &res)?;
    if let Some(r) = res.records.iter().find(|r| r.status != Status::Converged) {
        return Err(CliError::Solver(format!(
            "solve at step {} ended with status {}",
            r.step, r.status
        )));
    }
    Ok(res)
}

/// Options used for each solver of the comparison.
pub fn bench_options(cfg: &RunConfig) -> (SolverOptions, SolverOptions) {
    let panoc = SolverOptions {
        tol: BENCH_TOL,
        ..cfg.solver.options.clone()
    };
    let fbs = SolverOptions {
        max_iter: BENCH_FBS_MAX_ITER,
        ..panoc.clone()
    };
    (panoc, fbs)
}

/// Runs PANOC and FBS on the same first problem to [`BENCH_TOL`]; writes
/// `bench.csv` (both residual histories) and `comparison.json`. The two
/// solves run concurrently, on `threads` workers when given.
pub fn run_bench(cfg: &RunConfig, threads: Option<usize>) -> Result<Comparison, CliError> {
    let sc = scenario(cfg)?;
    let u0 = vec![0.0; sc.spec.num_inputs()];
    let (po, fo) = bench_options(cfg);
    let (panoc, fbs) = with_threads(threads, || {
        join(
            || Algorithm::Panoc.solve(&sc.spec, &u0, &po),
            || Algorithm::Fbs.solve(&sc.spec, &u0, &fo),
        )
    });
    let (panoc, fbs) = (panoc?, fbs?);
    let cmp = compare(&panoc, &fbs);
    let dir = &cfg.output.dir;
    let mut w = create(dir, "bench.csv")?;
    writeln!(w, "algorithm,k,fbe,res_inf,gamma")?;
    for (name, sol) in [("panoc", &panoc), ("fbs", &fbs)] {
        for r in &sol.trace {
            writeln!(w, "{name},{},{},{},{}", r.k, r.fbe, r.res_inf, r.gamma)?;
        }
    }
    w.flush()?;
    write_json(dir, "comparison.json", &cmp)?;
    require_converged("panoc", panoc.status)?;
    require_converged("fbs", fbs.status)?;
    Ok(cmp)
}

pub fn compare(panoc: &Solution, fbs: &Solution) -> Comparison {
    let diff: Vec<f64> = panoc
        .u_bar
        .iter()
        .zip(&fbs.u_bar)
        .map(|(a, b)| a - b)
        .collect();
    Comparison {
        panoc_iters: panoc.iterations,
        fbs_iters: fbs.iterations,
        ratio: fbs.iterations as f64 / panoc.iterations.max(1) as f64,
        panoc_status: panoc.status,
        fbs_status: fbs.status,
        solution_distance: norm_inf(&diff),
    }
}

/// Thread count from `NMPC_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("NMPC_THREADS")
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
}
