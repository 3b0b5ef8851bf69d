use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nmpc_cli::{run_bench, run_mpc, run_solve, threads_from_env, CliError, RunConfig};
use nmpc_core::Algorithm;

#[derive(Parser)]
#[command(name = "nmpc", version, about = "Chain NMPC benchmark driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the first optimal control problem and write its trace.
    Solve(Common),
    /// Run the closed-loop simulation.
    Mpc(Common),
    /// Compare PANOC and FBS on the first problem.
    Bench(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Panoc,
    Fbs,
}

#[derive(Args)]
struct Common {
    /// JSON config; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
    /// Stopping tolerance on the residual infinity norm.
    #[arg(long)]
    tol: Option<f64>,
    /// Warm-start each closed-loop solve from the shifted previous solution.
    #[arg(long)]
    warm_start: bool,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if let Some(a) = self.algorithm {
            cfg.solver.algorithm = match a {
                AlgorithmArg::Panoc => Algorithm::Panoc,
                AlgorithmArg::Fbs => Algorithm::Fbs,
            };
        }
        if let Some(t) = self.tol {
            cfg.solver.options.tol = t;
        }
        if self.warm_start {
            cfg.simulation.warm_start = true;
        }
        cfg.check()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(c) => {
            let cfg = c.load()?;
            let s = run_solve(&cfg)?;
            println!(
                "{}: {} after {} iterations, residual {:.3e}, {:.3} s",
                cfg.solver.algorithm, s.status, s.iterations, s.final_residual, s.wall_time_s
            );
        }
        Command::Mpc(c) => {
            let cfg = c.load()?;
            let r = run_mpc(&cfg)?;
            println!(
                "{} steps, mean {:.1} iterations, max solve {:.4} s, min p2 {:.4}",
                r.records.len(),
                r.mean_iterations,
                r.max_solve_time_s,
                r.min_p2()
            );
        }
        Command::Bench(c) => {
            let cfg = c.load()?;
            let cmp = run_bench(&cfg, threads_from_env())?;
            println!(
                "panoc {} iterations, fbs {} iterations, ratio {:.1}",
                cmp.panoc_iters, cmp.fbs_iters, cmp.ratio
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
