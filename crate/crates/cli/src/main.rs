//! `apiknow`: harvest documentation pairs, re-sample them against real
//! usage, assemble training corpora and score generated code.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use apiknow::resample::Temperature;
use apiknow::retrieval::Target;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::commands::Failure;
use crate::config::{Mode, PipelineConfig};

/// Environment variable holding the log filter, e.g. `info` or `apiknow=debug`.
pub const LOG_ENV: &str = "APIKNOW_LOG";

#[derive(Debug, Parser)]
#[command(name = "apiknow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn a documentation dump into NL-code pairs.
    Harvest,
    /// Build the BM25 index over the harvested pairs.
    Index,
    /// Re-sample documentation pairs against annotated and mined queries.
    Resample,
    /// Write the pre-training and fine-tuning corpora.
    Assemble,
    /// Score a hypothesis file against the test split.
    Eval {
        /// One generated snippet per line, aligned with the test split.
        #[arg(long)]
        hypotheses: Option<PathBuf>,
        /// Instances per side of the API-frequency split.
        #[arg(long)]
        split_size: Option<usize>,
    },
    /// Summarize the files in the output directory.
    Stats,
}

/// Flags shared by every command. Each one overrides the config file.
#[derive(Debug, Args)]
struct Overrides {
    /// TOML or JSON pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Retrieval target: intent or code.
    #[arg(long, global = true)]
    target: Option<Target>,
    /// Documentation pair strategy: dist, direct or raw.
    #[arg(long, global = true)]
    strategy: Option<Mode>,
    /// Retrieval depth per query.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Smoothing temperature, >= 1 or `inf`.
    #[arg(long, global = true)]
    tau: Option<Temperature>,
    #[arg(long, global = true)]
    sample_size: Option<usize>,
    #[arg(long, global = true)]
    mined_top_k: Option<usize>,
}

impl Overrides {
    fn apply(&self, config: &mut PipelineConfig) {
        let plan = &mut config.plan;
        plan.seed = self.seed.or(plan.seed);
        plan.target = self.target.or(plan.target);
        plan.strategy = self.strategy.or(plan.strategy);
        plan.k = self.k.or(plan.k);
        plan.tau = self.tau.or(plan.tau);
        plan.sample_size = self.sample_size.or(plan.sample_size);
        config.strategy.mined_top_k = self.mined_top_k.or(config.strategy.mined_top_k);
        if let Some(dir) = &self.out_dir {
            config.paths.out_dir = Some(dir.clone());
        }
    }
}

fn init_logging(config: &PipelineConfig) {
    let default = config.log_level.as_deref().unwrap_or("warn");
    env_logger::Builder::new()
        .parse_filters(default)
        .parse_env(env_logger::Env::new().filter(LOG_ENV))
        .format_timestamp(None)
        .init();
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = match &cli.overrides.config {
        Some(path) => PipelineConfig::load(path).map_err(Failure::usage)?,
        None => PipelineConfig::default(),
    };
    cli.overrides.apply(&mut config);
    if let Command::Eval {
        hypotheses,
        split_size,
    } = &cli.command
    {
        if let Some(h) = hypotheses {
            config.paths.hypotheses = Some(h.clone());
        }
        config.eval.split_size = split_size.or(config.eval.split_size);
    }
    init_logging(&config);

    match cli.command {
        Command::Harvest => commands::harvest(&config),
        Command::Index => commands::index(&config),
        Command::Resample => commands::resample(&config),
        Command::Assemble => commands::assemble(&config),
        Command::Eval { .. } => commands::eval(&config),
        Command::Stats => commands::stats(&config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(commands::EXIT_USAGE),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}
