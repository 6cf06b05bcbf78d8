use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use streamvb_cli::commands::{compare, generate, render_table, run};
use streamvb_cli::{CliError, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "streamvb", version, about = "Streaming variational Bayes on drifting data streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic stream to <output_dir>/stream.csv
    Generate(ConfigArgs),
    /// Run every configured learner and write one trace per learner
    Run(ConfigArgs),
    /// Aggregate the TMLL of the traces in a directory
    Compare {
        /// Directory holding trace_*.csv files
        trace_dir: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML)
    config: PathBuf,
    /// Override a config key, e.g. --set learners.0.rho=0.99
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Takes precedence over STREAMVB_OUTPUT_DIR and the config file
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let overrides = Overrides { set: self.set.clone(), seed: self.seed, output_dir: self.output_dir.clone() };
        ExperimentConfig::load(&self.config, &overrides)
    }

    fn base_dir(&self) -> &Path {
        self.config.parent().unwrap_or(Path::new("."))
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(args) => {
            println!("{}", generate(&args.load()?)?);
        }
        Command::Run(args) => {
            let cfg = args.load()?;
            let outcomes = run(&cfg, args.base_dir())?;
            let total = outcomes.len();
            let mut failed = 0;
            for o in outcomes {
                match o.result {
                    Ok(steps) => println!("{}: {steps} steps", o.name),
                    Err(e) => {
                        failed += 1;
                        eprintln!("{}: failed: {e}", o.name);
                    }
                }
            }
            if failed > 0 {
                return Err(CliError::Learners { failed, total });
            }
        }
        Command::Compare { trace_dir } => {
            print!("{}", render_table(&compare(&trace_dir)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
