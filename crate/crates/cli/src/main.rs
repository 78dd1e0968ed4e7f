mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use hti::HtiError;

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "hti",
    version,
    about = "Review-based rating prediction with hierarchical interaction"
)]
struct Cli {
    /// JSON run configuration with flat keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set max_epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Worker threads; 1 gives bit-reproducible runs. Defaults to the
    /// number of hardware threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Preprocess raw reviews into a split corpus file and print its
    /// statistics.
    Ingest {
        /// Newline-delimited JSON reviews.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Corpus file to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write the statistics as JSON.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Train one model and write its checkpoint.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Per-epoch NDJSON training log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Pretrained word vectors.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Score a checkpoint on one split.
    Evaluate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
        split: String,
        /// Metrics JSON; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and test model variants over the configured seeds.
    Ablate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Comma-separated variants (full, wavg, wmax, davg, dmax).
        #[arg(long, value_delimiter = ',', default_value = "full,wavg,wmax,davg,dmax")]
        variants: Vec<String>,
        /// Also report the bias-only baseline.
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export review- and word-level attention for one user/item pair.
    Explain {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// `u:<user id> i:<item id>`.
        #[arg(long, num_args = 2, value_names = ["u:USER", "i:ITEM"])]
        pair: Vec<String>,
        /// Reviews per side.
        #[arg(long, default_value_t = 4)]
        top: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the interaction module over a grid of review counts.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "32")]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 60)]
        repeats: usize,
        /// Timing table CSV; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(err: &HtiError) -> u8 {
    match err {
        HtiError::Config(_) => EXIT_USAGE,
        HtiError::Numerical(_) => EXIT_NUMERICAL,
        HtiError::Io(_) | HtiError::Json(_) | HtiError::Data(_) | HtiError::Format(_) => EXIT_DATA,
    }
}

/// Moves path flags into the config overrides so they are validated with
/// the rest of the configuration.
fn path_overrides(command: &Command, overrides: &mut Vec<String>) {
    let mut push = |key: &str, value: &Option<PathBuf>| {
        if let Some(p) = value {
            overrides.push(format!("{key}={}", serde_json::Value::String(p.display().to_string())));
        }
    };
    match command {
        Command::Ingest { input, .. } => push("input", input),
        Command::Train {
            corpus,
            checkpoint,
            embeddings,
            ..
        } => {
            push("corpus", corpus);
            push("checkpoint", checkpoint);
            push("embeddings", embeddings);
        }
        Command::Evaluate { corpus, checkpoint, .. } | Command::Explain { corpus, checkpoint, .. } => {
            push("corpus", corpus);
            push("checkpoint", checkpoint);
        }
        Command::Ablate { corpus, .. } => push("corpus", corpus),
        Command::Bench { .. } => {}
    }
}

fn run(cli: Cli) -> hti::Result<()> {
    let mut overrides = cli.overrides.clone();
    path_overrides(&cli.command, &mut overrides);
    let config = RunConfig::load(cli.config.as_deref(), &overrides)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(HtiError::config("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HtiError::config(e.to_string()))?;
    }
    match cli.command {
        Command::Ingest { out, stats, .. } => commands::ingest(&config, &out, stats.as_deref()),
        Command::Train { log, .. } => commands::train(&config, log.as_deref()),
        Command::Evaluate { split, out, .. } => commands::evaluate(&config, &split, out.as_deref()),
        Command::Ablate {
            variants,
            baseline,
            out,
            ..
        } => commands::ablate(&config, &variants, baseline, out.as_deref()),
        Command::Explain { pair, top, out, .. } => commands::explain(&config, &pair, top, out.as_deref()),
        Command::Bench {
            sizes,
            ks,
            repeats,
            out,
        } => commands::bench(&config, sizes, ks, repeats, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("hti: {e}");
            if code == EXIT_USAGE {
                eprintln!("{}", Cli::command().render_usage());
            }
            ExitCode::from(code)
        }
    }
}
