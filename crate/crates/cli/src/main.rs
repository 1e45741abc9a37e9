use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epr_softphoton::config::{RunConfig, SweepSpec, OUT_DIR_ENV};
use epr_softphoton::runner::{self, RunError, RunOptions};

/// Monte Carlo EPR-Bohm spin correlations with soft-photon radiation.
#[derive(Parser)]
#[command(name = "epr-sim", version, after_help = after_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn after_help() -> String {
    format!(
        "Output goes to --out, else output.dir, else ${OUT_DIR_ENV}, else ./out.\n\
         Exit codes: 0 success, 2 config error, 3 generation error, 4 I/O error."
    )
}

#[derive(Subcommand)]
enum Command {
    /// Generate events, write the event log and a summary.
    Run(Common),
    /// Run the configuration at every point of a parameter grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Sweep specification file.
        #[arg(long)]
        sweep: PathBuf,
    },
    /// Re-analyze an existing event log with the cut and estimators of --config.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Event log written by `run`.
        #[arg(long)]
        events: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override generator.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Generation threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Only log errors.
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn load(&self) -> Result<(RunConfig, RunOptions), RunError> {
        let config = RunConfig::load(&self.config)?;
        init_logging(if self.quiet {
            "error"
        } else {
            &config.log_level
        });
        let options = RunOptions {
            seed: self.seed,
            out_dir: self.out.clone(),
            workers: self.workers,
        };
        Ok((config, options))
    }
}

fn init_logging(level: &str) {
    let env = env_logger::Env::default().default_filter_or(level);
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init();
}

fn execute(cli: &Cli) -> Result<(), RunError> {
    match &cli.command {
        Command::Run(common) => {
            let (config, options) = common.load()?;
            let outcome = runner::run(&config, &options)?;
            if let Some(events) = &outcome.events_path {
                log::info!("event log: {}", events.display());
            }
            log::info!("summary: {}", outcome.summary_path.display());
        }
        Command::Sweep { common, sweep } => {
            let (config, options) = common.load()?;
            let spec = SweepSpec::load(sweep)?;
            let rows = runner::sweep(&config, &spec, &options)?;
            let failed = rows.iter().filter(|r| r.result.is_err()).count();
            log::info!("{} sweep points, {failed} failed", rows.len());
        }
        Command::Analyze { common, events } => {
            let (config, options) = common.load()?;
            let outcome = runner::analyze(&config, events, &options)?;
            log::info!("summary: {}", outcome.summary_path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            init_logging("error");
            log::error!("{e}");
            eprint!("{}", e.to_record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
