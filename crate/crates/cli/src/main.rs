mod commands;
mod config;
mod data;
mod error;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{ArgAction, Parser, Subcommand};

use config::{Overrides, RunConfig};
use error::CliError;
use output::Outputs;

/// Temperature reconstruction from proxy records, with pseudo-proxy null
/// benchmarks and a Bayesian backcast.
#[derive(Parser, Debug)]
#[command(name = "proxyrecon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file; data paths in it are relative to its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Instrumental window, e.g. 1850-1998.
    #[arg(long, global = true)]
    window: Option<String>,
    #[arg(long, global = true)]
    block_len: Option<usize>,
    #[arg(long, global = true, value_parser = ["full", "middle20"])]
    scoring: Option<String>,
    /// Pseudo-proxy class: white, ar1_<phi>, empirical or brownian. Repeatable.
    #[arg(long = "null", global = true, value_delimiter = ',')]
    nulls: Vec<String>,
    /// Replicates: envelope draws for `cv`, series pairs for `null-bench`,
    /// null refits for `bayes-validate`.
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Validate and summarize the input data.
    Ingest,
    /// Block holdout evaluation of the configured models.
    Cv,
    /// Spurious-correlation experiment and pseudo-proxy comparisons.
    NullBench,
    /// Fit the model ensemble and backcast the reconstruction window.
    ZooBackcast,
    /// Gibbs sampling of the Bayesian autoregressive model.
    BayesFit,
    /// Pathwise backcast with credible bands.
    BayesBackcast,
    /// First- and last-block holdout of the Bayesian model against nulls.
    BayesValidate,
    /// Posterior probabilities of warm-year, decade and run-up events.
    Events,
    /// Collate the outputs of the other subcommands.
    Report,
    /// Write the synthetic world as CSV input files.
    Synth,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Cv => "cv",
            Command::NullBench => "null-bench",
            Command::ZooBackcast => "zoo-backcast",
            Command::BayesFit => "bayes-fit",
            Command::BayesBackcast => "bayes-backcast",
            Command::BayesValidate => "bayes-validate",
            Command::Events => "events",
            Command::Report => "report",
            Command::Synth => "synth",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let command = cli.command.name();
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(
        &Overrides {
            seed: cli.seed,
            out: cli.out,
            workers: cli.workers,
            window: cli.window,
            block_len: cli.block_len,
            scoring: cli.scoring,
            nulls: cli.nulls,
            reps: cli.reps,
        },
        command,
    );
    cfg.validate()?;
    let mut out = Outputs::new(&cfg.run.out)?;
    let workers = cfg.run.workers;
    proxyrecon::harness::with_workers(workers, || -> Result<(), CliError> {
        match cli.command {
            Command::Ingest => commands::ingest(&cfg, &mut out),
            Command::Cv => commands::cv(&cfg, &mut out),
            Command::NullBench => commands::null_bench(&cfg, &mut out),
            Command::ZooBackcast => commands::zoo_backcast(&cfg, &mut out),
            Command::BayesFit => commands::bayes_fit(&cfg, &mut out),
            Command::BayesBackcast => commands::bayes_backcast(&cfg, &mut out),
            Command::BayesValidate => commands::bayes_validate(&cfg, &mut out),
            Command::Events => commands::events(&cfg, &mut out),
            Command::Report => commands::report(&mut out),
            Command::Synth => commands::synth(&cfg, &mut out),
        }
    })??;
    out.manifest(&cfg, command, started)?;
    log::info!("{command} finished in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("proxyrecon: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
