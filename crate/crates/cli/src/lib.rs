//! Command-line runner for the transit feedback pipeline.
//!
//! Every subcommand resolves one [`config::RunConfig`] (JSON file, then
//! `TFE__SECTION__KEY` environment overrides, then `--set key=value`, then the
//! dedicated flags) and writes its outputs plus a `manifest.json` under
//! `<out>/<stage>/`. Reports go to `<out>/reports/<run-id>/`.
//!
//! Exit status: 0 success, 1 validation error, 2 runtime failure, 64 usage error.

pub mod config;
pub mod stages;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use transit_feedback::classify::bridge::fixture::{serve_echo, EchoScript};
use transit_feedback::corpus::TopicLabel;
use transit_feedback::enrich::Sentiment;

use config::{parse_assignment, ConfigError, Overrides, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "transit-feedback", version, about = "Topic, sentiment and ridership analytics for transit customer feedback")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true, env = "TFE_CONFIG", value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed; every stage seed is derived from it.
    #[arg(long, global = true, env = "TFE_SEED", value_name = "N")]
    seed: Option<u64>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true, env = "TFE_THREADS", value_name = "N")]
    threads: Option<usize>,
    /// Output directory shared by all stages.
    #[arg(long, global = true, env = "TFE_OUT", value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override any config key, e.g. `--set lda.k=12`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse the CRM export and tweets into normalized records.
    Ingest,
    /// Cluster problem-category centroids to bound the topic count.
    #[command(name = "screen-k")]
    ScreenK,
    /// Fit LDA on records outside the manual holdout categories.
    DeriveTopics,
    /// Map LDA topics to the broad labels and build the training set.
    Condense,
    /// Fit the TF-IDF vectorizer on the training set.
    BuildFeatures,
    /// Cross-validate the configured models and fit the best one.
    Train,
    /// Metric tables, per-fold accuracies and confusion matrices.
    Evaluate,
    /// Predict topics for every ingested record.
    Classify,
    /// Add topic, sentiment, mode, assets and gender to every record.
    Enrich,
    /// Aggregation tables and ridership-normalized rates and series.
    Report,
    /// Write the synthetic demo corpus and its auxiliary files.
    Synth,
    /// Run synth and every stage after it.
    Demo,
    /// Scripted bridge server on stdin/stdout, for testing bridge endpoints.
    #[command(hide = true)]
    EchoBridge {
        /// Comma-separated labels; defaults to the topic labels.
        #[arg(long, value_delimiter = ',')]
        labels: Vec<String>,
        /// Advertise the sentiment labels instead.
        #[arg(long)]
        sentiment: bool,
        #[arg(long, default_value_t = 4)]
        reorder: usize,
    },
}

impl Command {
    fn stage(&self) -> Option<&'static str> {
        Some(match self {
            Command::Ingest => stages::INGEST,
            Command::ScreenK => stages::SCREEN,
            Command::DeriveTopics => stages::DERIVE,
            Command::Condense => stages::CONDENSE,
            Command::BuildFeatures => stages::FEATURES,
            Command::Train => stages::TRAIN,
            Command::Evaluate => stages::EVALUATE,
            Command::Classify => stages::CLASSIFY,
            Command::Enrich => stages::ENRICH,
            Command::Report => stages::REPORT,
            Command::Synth => stages::SYNTH,
            Command::Demo | Command::EchoBridge { .. } => return None,
        })
    }
}

/// Exit status for a failed run: 1 for configuration and input validation
/// problems, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use transit_feedback::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Invalid(_)
                | E::MissingColumn(_)
                | E::EmptyVocabulary { .. }
                | E::EmptyClass(_)
                | E::ClassTooSmall { .. }
                | E::VocabularyMismatch { .. }
                | E::UnknownLabel(_)
                | E::UnsupportedFormat(_) => EXIT_VALIDATION,
                _ => EXIT_RUNTIME,
            };
        }
    }
    EXIT_RUNTIME
}

fn echo_bridge(labels: Vec<String>, sentiment: bool, reorder: usize) -> i32 {
    let labels = if sentiment {
        Sentiment::labels()
    } else if labels.is_empty() {
        TopicLabel::names()
    } else {
        labels
    };
    match serve_echo(std::io::BufReader::new(std::io::stdin()), std::io::stdout(), &labels, EchoScript { reorder }) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// Parse `args` (including the program name), run the command and return the
/// exit status.
pub fn run<I, T>(args: I, env: impl Iterator<Item = (String, String)>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Command::EchoBridge { labels, sentiment, reorder } = cli.command {
        return echo_bridge(labels, sentiment, reorder);
    }
    match execute(cli, env) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn execute(cli: Cli, env: impl Iterator<Item = (String, String)>) -> anyhow::Result<()> {
    let mut assignments = Overrides::from_env(env);
    for s in &cli.set {
        assignments.push(parse_assignment(s)?);
    }
    let overrides = Overrides {
        assignments,
        seed: cli.seed,
        out: cli.out.clone(),
    };
    let cfg = RunConfig::resolve(cli.config.as_deref(), &overrides)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError("--threads must be at least 1".into()).into());
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    pool.install(|| {
        let manifest = match cli.command.stage() {
            Some(stage) => stages::run_stage(&cfg, stage)?,
            None => stages::demo(&cfg)?,
        };
        println!("{}: {} artifacts, manifest in {}", manifest.command, manifest.artifacts.len(), cfg.out.display());
        Ok(())
    })
}
