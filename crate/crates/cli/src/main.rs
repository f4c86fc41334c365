//! `sleephmm`: preprocessing, training, model selection, decoding,
//! indicators, evaluation and simulation from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl From<sleep_hhmm::Error> for CliError {
    fn from(e: sleep_hhmm::Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "sleephmm", version, about = "Sleep activity recognition with a heterogeneous HMM")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML run configuration; flags override its keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for initialisation, baselines and simulation.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Stamp reports with 1970-01-01T00:00:00Z instead of the current time.
    #[arg(long, global = true)]
    fixed_clock: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Raw records (CSV or JSON lines) to cleaned, filtered day vectors.
    Preprocess {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Day vectors as JSON lines.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// train, eval-complete or none.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long)]
        timezone: Option<String>,
    },
    /// Fit a model to day vectors.
    Train {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        states: Option<usize>,
        /// unsupervised or semi-K.
        #[arg(long)]
        supervision: Option<String>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// BIC/AIC sweep over state counts and supervision configurations.
    Select {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        min_states: Option<usize>,
        #[arg(long)]
        max_states: Option<usize>,
        /// Comma-separated, e.g. unsupervised,semi-1,semi-2.
        #[arg(long)]
        configs: Option<String>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Viterbi-decode day vectors and map states to sleep.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Daily and weekly sleep indicators from predictions.
    Indicators {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Score predictions and baselines against reference labels.
    Evaluate {
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Episodes as JSON lines or per-slot CSV.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Evaluated day vectors; enables the baselines.
        #[arg(long)]
        days: Option<PathBuf>,
        /// Day vectors the baselines are fitted on (defaults to --days).
        #[arg(long)]
        train_days: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        no_baselines: bool,
    },
    /// Write a synthetic cohort with ground truth.
    Simulate {
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
        /// csv or jsonl.
        #[arg(long)]
        format: Option<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.global.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.global.jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let ctx = commands::Context {
        cfg,
        fixed_clock: cli.global.fixed_clock,
    };
    match cli.command {
        Command::Preprocess {
            input,
            output,
            report,
            filter,
            timezone,
        } => commands::preprocess(ctx, input, output, report, filter, timezone),
        Command::Train {
            input,
            model,
            states,
            supervision,
            restarts,
        } => commands::train(ctx, input, model, states, supervision, restarts),
        Command::Select {
            input,
            out_dir,
            min_states,
            max_states,
            configs,
            restarts,
        } => commands::select(ctx, input, out_dir, min_states, max_states, configs, restarts),
        Command::Predict { model, input, output } => commands::predict(ctx, model, input, output),
        Command::Indicators { input, out_dir } => commands::indicators(ctx, input, out_dir),
        Command::Evaluate {
            predictions,
            labels,
            days,
            train_days,
            out_dir,
            no_baselines,
        } => commands::evaluate(ctx, predictions, labels, days, train_days, out_dir, no_baselines),
        Command::Simulate {
            out_dir,
            subjects,
            days,
            format,
        } => commands::simulate(ctx, out_dir, subjects, days, format),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sleephmm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
