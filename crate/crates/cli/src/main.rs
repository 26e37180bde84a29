use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dtn_cluster_sim::config::{ModeName, RouterName};
use dtn_cluster_sim::{sweep, ConfigError, Overrides, RunConfig, SweepError};

#[derive(Parser)]
#[command(name = "dtn-cluster-sim", version, about = "Interest-group DTN routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (categories, seed) point of the configured sweep.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        router: Option<RouterName>,
        #[arg(long, value_enum)]
        mode: Option<ModeName>,
        #[arg(long)]
        strict: bool,
        /// Comma-separated category counts, e.g. `1,5,10`.
        #[arg(long, value_delimiter = ',')]
        categories: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that trace nodes and interest profiles line up.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a synthetic trace and profiles in the canonical formats.
    GenTrace {
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_RUN_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn load(path: &PathBuf, overrides: &Overrides) -> Result<RunConfig, ExitCode> {
    RunConfig::load(path, overrides).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn report(e: SweepError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        SweepError::Config(_) | SweepError::Input { .. } => ExitCode::from(EXIT_CONFIG),
        SweepError::Output { .. } => ExitCode::from(EXIT_RUN_FAILED),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, router, mode, strict, categories, out } => {
            let overrides = Overrides { seed, router, mode, strict, categories, out };
            load(&config, &overrides).map(|cfg| match sweep::run_sweep(&cfg) {
                Ok(outcome) => {
                    for (n, seed, err) in &outcome.failures {
                        eprintln!("run n_categories={n} seed={seed} failed: {err}");
                    }
                    eprintln!(
                        "{} runs written to {}",
                        outcome.reports.len(),
                        cfg.output.dir.display()
                    );
                    ExitCode::from(outcome.exit_code() as u8)
                }
                Err(e) => report(e),
            })
        }
        Command::Validate { config } => load(&config, &Overrides::default()).map(|cfg| match sweep::validate(&cfg) {
            Ok(reports) => {
                let mut consistent = true;
                for (n, r) in reports {
                    println!("n_categories={n}");
                    print!("{r}");
                    consistent &= r.is_consistent();
                }
                if consistent {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_RUN_FAILED)
                }
            }
            Err(e) => report(e),
        }),
        Command::GenTrace { config } => load(&config, &Overrides::default()).map(|cfg| match sweep::gen_trace(&cfg) {
            Ok((trace, profiles)) => {
                println!("{}", trace.display());
                println!("{}", profiles.display());
                ExitCode::SUCCESS
            }
            Err(SweepError::Config(ConfigError::MissingRequired(key))) => {
                eprintln!("error: gen-trace needs a [{key}] section");
                ExitCode::from(EXIT_CONFIG)
            }
            Err(e) => report(e),
        }),
    };
    result.unwrap_or_else(|code| code)
}
