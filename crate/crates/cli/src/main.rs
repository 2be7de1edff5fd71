use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use diamondp::Time;
use diamondp_cli::{cmd_check, cmd_run, cmd_sweep, describe, RunOptions};

#[derive(Parser)]
#[command(name = "diamondp", version, about = "Simulate and check an eventually perfect failure detector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and check the resulting trace.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario horizon (decimal or fraction).
        #[arg(long)]
        horizon: Option<Time>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario or template over seeds 0..N.
    Sweep {
        template: PathBuf,
        #[arg(long)]
        seeds: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Print the summary as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Re-run the oracle on a saved trace.
    Check { trace: PathBuf, scenario: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { scenario, out, horizon, seed } => match cmd_run(&scenario, &RunOptions { out: out.clone(), horizon, seed }) {
            Ok(report) => {
                print!("{}", describe(&report));
                println!("wrote {}", out.display());
                report.outcome.exit_code()
            }
            Err(e) => fail(e),
        },
        Command::Sweep { template, seeds, jobs, json } => match cmd_sweep(&template, seeds, jobs) {
            Ok(summary) => {
                if json {
                    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
                } else {
                    for r in &summary.runs {
                        let t_f = r.t_f.map_or_else(|| "-".to_string(), |t| t.to_string());
                        println!("seed {:>5}  n={} crashes={}  {:?}  t_f={}", r.seed, r.n, r.crashes, r.outcome, t_f);
                    }
                    let fmt = |t: Option<Time>| t.map_or_else(|| "-".to_string(), |t| format!("{:.3}", t.to_f64()));
                    println!(
                        "converged {}/{}  violations {}  inconclusive {}  t_f min/median/max {}/{}/{}",
                        summary.converged,
                        summary.runs.len(),
                        summary.violations,
                        summary.inconclusive,
                        fmt(summary.t_f_min),
                        fmt(summary.t_f_median),
                        fmt(summary.t_f_max)
                    );
                }
                summary.exit_code()
            }
            Err(e) => fail(e),
        },
        Command::Check { trace, scenario } => match cmd_check(&trace, &scenario) {
            Ok(report) => {
                print!("{}", describe(&report));
                report.outcome.exit_code()
            }
            Err(e) => fail(e),
        },
    };
    ExitCode::from(code as u8)
}

fn fail(e: diamondp_cli::CliError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}
