//! `gossip-opt` command-line interface.
//!
//! Exit codes: 0 success, 2 configuration or I/O error, 3 invariant
//! violation (from `verify`), 4 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gossip_opt::harness::{
    compare_algorithms, render_comparison_table, run_experiment, schedule_dump, verify_suite,
    Algorithm, ExperimentConfig, HarnessError,
};

#[derive(Parser)]
#[command(
    name = "gossip-opt",
    version,
    about = "Simulate pairwise-equalizing and pairwise-bisectioning gossip \
             for scalar convex consensus optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment, writing its trace and summary files.
    Run(RunArgs),
    /// Run pe and pb(R) on the identical schedule and tabulate costs.
    Compare(CompareArgs),
    /// Run every config in a suite directory with invariant checking.
    Verify {
        /// Directory of .toml experiment configs.
        #[arg(long)]
        suite: PathBuf,
    },
    /// Print the gossip pair schedule without running an engine.
    ScheduleDump {
        #[arg(long)]
        config: PathBuf,
        /// Number of iterations to dump.
        #[arg(long)]
        steps: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<i64>,
    /// Override the algorithm: pe | pb.
    #[arg(long)]
    algo: Option<String>,
    /// Override the pb rounds policy: R | fixed:R | adaptive:DELTA.
    #[arg(long)]
    rounds: Option<String>,
    #[arg(long)]
    max_iters: Option<u64>,
    #[arg(long)]
    stop_v_ratio: Option<f64>,
    #[arg(long)]
    tol_x: Option<f64>,
    #[arg(long)]
    skip_gap: Option<f64>,
    /// Override the trace output path.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Override the summary output path.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated bisection round counts, e.g. 1,2,4,8.
    #[arg(long)]
    rounds: String,
    /// Emit the table as JSON instead of text.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(4)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let config = with_overrides(ExperimentConfig::load(&args.config)?, &args)?;
            let summary = run_experiment(&config)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare(args) => {
            let config = ExperimentConfig::load(&args.config)?;
            let rounds = args
                .rounds
                .split(',')
                .map(|r| {
                    r.trim()
                        .parse::<u32>()
                        .map_err(|e| HarnessError::Config(format!("bad rounds list: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let rows = compare_algorithms(&config, &rounds)?;
            if args.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&rows).expect("rows serialize")
                );
            } else {
                print!("{}", render_comparison_table(&rows));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { suite } => {
            let outcome = verify_suite(&suite);
            for result in &outcome.results {
                let status = serde_json::to_string(&result.status).expect("status serializes");
                eprintln!(
                    "{} {}: {}",
                    status.trim_matches('"'),
                    result.path,
                    if result.detail.is_empty() {
                        "ok"
                    } else {
                        &result.detail
                    }
                );
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&outcome).expect("outcome serializes")
            );
            Ok(ExitCode::from(outcome.exit_code() as u8))
        }
        Command::ScheduleDump { config, steps } => {
            let config = ExperimentConfig::load(&config)?;
            for (k, pair) in schedule_dump(&config, steps)? {
                println!(
                    "{}",
                    serde_json::json!({ "k": k, "pair": [pair.initiator.0, pair.peer.0] })
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn with_overrides(
    mut config: ExperimentConfig,
    args: &RunArgs,
) -> Result<ExperimentConfig, HarnessError> {
    if let Some(seed) = args.seed {
        config.seed = seed as u64;
    }
    if let Some(algo) = &args.algo {
        config.algorithm = match algo.as_str() {
            "pe" => Algorithm::Pe,
            "pb" => {
                let rounds = args.rounds.as_deref().unwrap_or("fixed:4");
                Algorithm::Pb(
                    gossip_opt::harness::parse_rounds_policy(rounds)
                        .map_err(HarnessError::Config)?,
                )
            }
            other => {
                return Err(HarnessError::Config(format!(
                    "--algo must be pe or pb, got `{other}`"
                )))
            }
        };
    } else if let Some(rounds) = &args.rounds {
        if let Algorithm::Pb(_) = config.algorithm {
            config.algorithm = Algorithm::Pb(
                gossip_opt::harness::parse_rounds_policy(rounds).map_err(HarnessError::Config)?,
            );
        } else {
            return Err(HarnessError::Config(
                "--rounds only applies to the pb algorithm".to_owned(),
            ));
        }
    }
    if let Some(n) = args.max_iters {
        if n == 0 {
            return Err(HarnessError::Config(
                "--max-iters must be at least 1".to_owned(),
            ));
        }
        config.max_iters = n;
    }
    if let Some(r) = args.stop_v_ratio {
        if !(0.0..1.0).contains(&r) {
            return Err(HarnessError::Config(
                "--stop-v-ratio must satisfy 0 <= ratio < 1".to_owned(),
            ));
        }
        config.stop_v_ratio = r;
    }
    if let Some(t) = args.tol_x {
        if !t.is_finite() || t <= 0.0 {
            return Err(HarnessError::Config(
                "--tol-x must be positive and finite".to_owned(),
            ));
        }
        config.tol_x = t;
    }
    if let Some(g) = args.skip_gap {
        if !g.is_finite() {
            return Err(HarnessError::Config("--skip-gap must be finite".to_owned()));
        }
        config.skip_gap = g;
    }
    if let Some(p) = &args.trace {
        config.trace_path = Some(p.clone());
    }
    if let Some(p) = &args.summary {
        config.summary_path = Some(p.clone());
    }
    Ok(config)
}
