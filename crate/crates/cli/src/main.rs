use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gee_precoder::harness::{run_checks, run_sweep, ExperimentSpec, RowKind, RunOptions, SolverKind};

#[derive(Parser)]
#[command(name = "gee-precoder", version, about = "Energy-efficient precoder design under imperfect CSI")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Statistical,
    Worstcase,
}

impl From<Solver> for SolverKind {
    fn from(s: Solver) -> Self {
        match s {
            Solver::Statistical => SolverKind::Statistical,
            Solver::Worstcase => SolverKind::Worstcase,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo sweep and write its CSV.
    Run {
        /// Experiment spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the CSV path.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Override the design method.
        #[arg(long, value_enum)]
        solver: Option<Solver>,
        /// Worker threads (default: one per core).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the invariant suite on a tiny instance.
    Check {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Print results as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn run(spec: PathBuf, seed: Option<u64>, output: Option<PathBuf>, solver: Option<Solver>, threads: Option<usize>) -> Result<ExitCode> {
    let mut exp = ExperimentSpec::from_file(&spec).with_context(|| format!("loading {}", spec.display()))?;
    if let Some(s) = seed {
        exp.seed = s;
    }
    if let Some(o) = output {
        exp.output = o;
    }
    if let Some(s) = solver {
        exp.solver = s.into();
    }
    exp.validate()?;
    log::info!(
        "{:?} sweep: {} values x {} antenna counts x {} trials",
        exp.solver,
        exp.sweep.values.len(),
        exp.antennas.len(),
        exp.trials
    );
    let result = run_sweep(&exp, &RunOptions { threads })?;
    let file = File::create(&exp.output).with_context(|| format!("creating {}", exp.output.display()))?;
    result.write_csv(BufWriter::new(file))?;

    println!("{:>12} {:>4} {:>10} {:>10} {:>10}", "sweep", "M", "gee", "nominal", "ms/trial");
    for r in result.rows.iter().filter(|r| r.kind == RowKind::Mean) {
        println!("{:>12} {:>4} {:>10.5} {:>10.5} {:>10.1}", r.sweep_value, r.m, r.gee, r.nominal_gee, r.wallclock_ms);
    }
    println!("wrote {}", exp.output.display());
    let failures = result.failures();
    if failures > 0 {
        eprintln!("{failures} trial(s) failed; see the status column");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn check(seed: u64, json: bool) -> Result<ExitCode> {
    let results = run_checks(seed);
    if json {
        println!("{}", serde_json::to_string_pretty(&results)?);
    } else {
        for r in &results {
            println!("[{}] {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        }
    }
    Ok(if results.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            spec,
            seed,
            output,
            solver,
            threads,
        } => run(spec, seed, output, solver, threads),
        Command::Check { seed, json } => check(seed, json),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
