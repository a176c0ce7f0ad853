mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use seqtag_core::harem::ScenarioName;
use seqtag_core::tagger::Head;

/// Sequence tagging toolkit: vocabulary conversion, tokenization, windowing,
/// HAREM preprocessing, CRF tagger training, prediction and CoNLL scoring.
#[derive(Parser, Debug)]
#[command(name = "seqtag", version)]
struct Cli {
    /// Pipeline config file (TOML). Defaults to $SEQTAG_CONFIG when set.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-document parallel work.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Global seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a SentencePiece vocabulary to WordPiece.
    ConvertVocab(ConvertVocabArgs),
    /// Pre-tokenize and WordPiece-tokenize text documents.
    Tokenize(TokenizeArgs),
    /// Split documents into overlapping spans with max-context ranges.
    SplitSpans(SplitSpansArgs),
    /// Convert HAREM XML to a token/tag file.
    PreprocessHarem(PreprocessHaremArgs),
    /// Train a tagger.
    Train(TrainArgs),
    /// Tag documents with a trained model.
    Predict(PredictArgs),
    /// Entity-level precision, recall and F1.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct ConvertVocabArgs {
    /// SentencePiece vocabulary: one piece per line, optionally followed by a
    /// tab and a score.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Take the punctuation tokens from this WordPiece vocabulary instead of
    /// the built-in set.
    #[arg(long)]
    punctuation_from: Option<PathBuf>,
    /// Write rejected pieces here, one per line.
    #[arg(long)]
    rejected: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum NormalizationArg {
    None,
    Nfc,
}

#[derive(Args, Debug)]
struct TokenizeArgs {
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Text file; blank lines separate documents.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "none")]
    normalize: NormalizationArg,
    #[arg(long)]
    max_word_chars: Option<usize>,
}

#[derive(Args, Debug)]
struct SplitSpansArgs {
    /// Tokens file written by `tokenize`.
    #[arg(long, conflicts_with = "doc_len", required_unless_present = "doc_len")]
    input: Option<PathBuf>,
    /// Plan a single document of this many sub-tokens.
    #[arg(long)]
    doc_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Defaults to standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PreprocessHaremArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    scenario: ScenarioArg,
    #[arg(long)]
    output: PathBuf,
    /// Statistics table followed by a key=value block.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Per-document adjustments (expanded or dropped entities).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ScenarioArg {
    Selective,
    Total,
}

impl From<ScenarioArg> for ScenarioName {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Selective => ScenarioName::Selective,
            ScenarioArg::Total => ScenarioName::Total,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum HeadArg {
    Crf,
    Softmax,
}

impl From<HeadArg> for Head {
    fn from(h: HeadArg) -> Self {
        match h {
            HeadArg::Crf => Head::Crf,
            HeadArg::Softmax => Head::Softmax,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Token/tag file; tokens in the first column, tags in the last.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Model checkpoint to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum)]
    head: Option<HeadArg>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Train only the head on external emission scores from this file.
    #[arg(long)]
    emissions: Option<PathBuf>,
    #[arg(long)]
    dev_emissions: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    Text,
    Conll,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "conll")]
    format: InputFormat,
    #[arg(long)]
    output: PathBuf,
    /// External emission scores, for models trained on them.
    #[arg(long)]
    emissions: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Gold file; when --pred is omitted, its last two columns are gold and
    /// predicted tags.
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Print per-class lines.
    #[arg(long)]
    per_class: bool,
    /// Score predictions as written, without repairing invalid I- tags.
    #[arg(long)]
    no_filter: bool,
    /// Second prediction file to compare against with a paired bootstrap.
    #[arg(long)]
    bootstrap: Option<PathBuf>,
    #[arg(long)]
    resamples: Option<usize>,
    /// Write the report here as well as to standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Failure classes mapped to exit statuses.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<seqtag_core::Error> for Failure {
    fn from(e: seqtag_core::Error) -> Self {
        use seqtag_core::Error as E;
        match e {
            E::Shape(_) | E::TooLarge { .. } | E::InvalidSequence { .. } => Failure::Internal(e.to_string()),
            E::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    std::panic::set_hook(Box::new(|info| {
        eprintln!("internal error: {info}");
        std::process::exit(3);
    }));
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
