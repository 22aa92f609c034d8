use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pbsca::benchmarks::{solve_scheme, Scheme};
use pbsca::config::{load_experiment, ExperimentSpec};
use pbsca::harness::{
    emit_convergence, run_experiment_with, write_aggregate_csv, write_channels, write_rows_csv,
    write_timings_csv,
};
use pbsca::selftest::run_selftest;
use pbsca::{generate_channels, Result};

#[derive(Parser)]
#[command(name = "pbsca", version, about = "Joint user scheduling and hybrid combining with adaptive-resolution ADCs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment file (TOML). Defaults to the built-in desk-scale spec.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Channel seed for `solve` / `gen-channels`; base seed for `sweep`.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of PBSCA,SA,UA,RS.
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<Scheme>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one channel realization and print the schedule.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Write the convergence trace of each scheme here (suffixed by scheme).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the configured sweep and write results.csv and summary.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write per-solve convergence traces into OUT/traces.
        #[arg(long)]
        traces: bool,
        /// Also write wall times to OUT/timings.csv.
        #[arg(long)]
        timings: bool,
    },
    /// Dump one channel realization.
    GenChannels {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "channels.csv")]
        out: PathBuf,
    },
    /// Run the built-in numerical checks.
    Selftest,
}

/// Seed for single-realization commands: `--seed`, else `system.rng_seed`.
fn single_seed(common: &Common, spec: &ExperimentSpec) -> u64 {
    common.seed.unwrap_or(spec.system.rng_seed)
}

fn load(common: &Common) -> Result<ExperimentSpec> {
    let mut spec = match &common.config {
        Some(path) => load_experiment(path)?,
        None => ExperimentSpec::default(),
    };
    if let Some(seed) = common.seed {
        spec.experiment.base_seed = seed;
    }
    if !common.scheme.is_empty() {
        spec.experiment.schemes = common.scheme.clone();
    }
    spec.validate()?;
    Ok(spec)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Solve { common, trace } => {
            let spec = load(&common)?;
            let point = spec.sweep_points()[0];
            let sys = spec.system_at(point)?;
            let seed = single_seed(&common, &spec);
            let channels = generate_channels(&sys, seed)?;
            for &scheme in &spec.experiment.schemes {
                let res = solve_scheme(scheme, &channels, &sys, &spec.solver, &spec.benchmark, seed)?;
                println!(
                    "{scheme}: sum_rate={:.6} users={:?} bits={:?} converged={} padded={} outer={}",
                    res.sum_rate,
                    res.scheduled_users,
                    res.d_integer,
                    res.converged,
                    res.padded,
                    res.trace.outer.len()
                );
                if let Some(base) = &trace {
                    let path = if spec.experiment.schemes.len() == 1 {
                        base.clone()
                    } else {
                        let stem = base.file_stem().unwrap_or_default().to_string_lossy();
                        base.with_file_name(format!("{stem}_{}.csv", scheme.name().to_lowercase()))
                    };
                    emit_convergence(&res.trace, &path)?;
                }
            }
            Ok(true)
        }
        Command::Sweep {
            common,
            out,
            traces,
            timings,
        } => {
            let spec = load(&common)?;
            let trace_dir = traces.then(|| out.join("traces"));
            let result = run_experiment_with(&spec, trace_dir.as_deref())?;
            write_rows_csv(&result.rows, &out.join("results.csv"))?;
            write_aggregate_csv(&result.aggregates, &out.join("summary.csv"))?;
            if timings {
                write_timings_csv(&result.rows, &out.join("timings.csv"))?;
            }
            for a in &result.aggregates {
                println!(
                    "{:>6} {:>8} mean_sum_rate={:.4} converged={}/{}",
                    a.scheme.name(),
                    a.sweep_value,
                    a.mean_sum_rate,
                    a.converged,
                    a.realizations
                );
            }
            Ok(true)
        }
        Command::GenChannels { common, out } => {
            let spec = load(&common)?;
            let sys = spec.system_at(spec.sweep_points()[0])?;
            let channels = generate_channels(&sys, single_seed(&common, &spec))?;
            write_channels(&channels, &out)?;
            Ok(true)
        }
        Command::Selftest => {
            let checks = run_selftest()?;
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
