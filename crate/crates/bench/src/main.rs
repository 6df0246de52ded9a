use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sgn_bench::{
    cmd_kkt_dump, cmd_optimize, cmd_scaling, cmd_verify, BenchError, BenchSpec, Fault,
};

/// Search-direction benchmarks for equilibrium-constrained optimization.
#[derive(Parser)]
#[command(name = "sgn-opt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run specification
    #[arg(long)]
    config: Option<PathBuf>,
    /// output directory
    #[arg(long)]
    out: PathBuf,
    /// overrides the seed in the config
    #[arg(long)]
    seed: Option<u64>,
    /// parallel optimizer runs
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured method and write convergence traces
    Optimize(Common),
    /// Time search directions over the size sweep
    Scaling(Common),
    /// Check equivalences and derivatives; exit code 1 on any failure
    Verify {
        #[command(flatten)]
        common: Common,
        /// deliberately break a component (sgn-sign)
        #[arg(long)]
        inject_fault: Option<Fault>,
    },
    /// Write the first-iterate saddle-point matrix and its statistics
    KktDump(Common),
}

fn load(common: &Common, required: bool) -> Result<BenchSpec, BenchError> {
    let mut spec = match &common.config {
        Some(path) => BenchSpec::load(path)?,
        None if required => return Err(BenchError::Config("--config is required".into())),
        None => BenchSpec::default(),
    };
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    Ok(spec)
}

fn run(cli: Cli) -> Result<ExitCode, BenchError> {
    match cli.command {
        Command::Optimize(c) => {
            let summary = cmd_optimize(&load(&c, true)?, &c.out, c.jobs)?;
            for m in &summary.methods {
                match (&m.termination, &m.error) {
                    (Some(t), _) => println!(
                        "{:<14} {:>4} iterations  f {:.6e}  |g| {:.3e}  {t}",
                        m.method,
                        m.iterations,
                        m.final_f.unwrap_or(f64::NAN),
                        m.final_grad_norm.unwrap_or(f64::NAN)
                    ),
                    (None, Some(e)) => println!("{:<14} failed: {e}", m.method),
                    (None, None) => {}
                }
            }
        }
        Command::Scaling(c) => {
            let rows = cmd_scaling(&load(&c, true)?, &c.out)?;
            for r in &rows {
                println!(
                    "{:<10} {:<14} n_p {:>6}  median {:.4e}s {}",
                    r.problem, r.method, r.n_p, r.direction_time_median_s, r.error
                );
            }
        }
        Command::Verify {
            common,
            inject_fault,
        } => {
            let report = cmd_verify(&load(&common, false)?, Some(&common.out), inject_fault)?;
            if !report.all_passed() {
                for f in report.failures() {
                    eprintln!(
                        "FAILED {}: worst discrepancy {:.3e} (tolerance {:.1e}) {}",
                        f.name, f.worst, f.tolerance, f.note
                    );
                }
                return Ok(ExitCode::from(1));
            }
        }
        Command::KktDump(c) => {
            let stats = cmd_kkt_dump(&load(&c, true)?, &c.out)?;
            println!(
                "dimension {}  nnz {}  factor fill {}  dense reduced {}",
                stats.dimension, stats.nnz, stats.factor_fill_nnz, stats.dense_reduced_nnz
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
