mod commands;
mod config;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing::Level;

use crate::config::FileConfig;

#[derive(Parser, Debug)]
#[command(
    name = "kbalign",
    version,
    about = "Align concept vocabularies with encyclopedia entities"
)]
struct Cli {
    /// TOML file with default paths and parameters; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice (default 13).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate and normalize concept and entity files.
    Ingest(IngestArgs),
    /// Stream entities with an English page out of a Wikidata JSON dump.
    ExtractWikidata(ExtractArgs),
    /// Link concepts to entities and write train/valid/test splits.
    BuildDataset(DatasetArgs),
    /// Build the BM25 inverted index over entities.
    BuildIndex(IndexArgs),
    /// Retrieve the top-k candidate entities for each concept.
    Candidates(CandidatesArgs),
    /// Build concept/candidate passage pairs for reranking.
    Pairs(PairsArgs),
    /// Train the built-in pair scorer.
    Train(TrainArgs),
    /// Reorder candidate lists with the built-in scorer or imported scores.
    Rerank(RerankArgs),
    /// Compute recall@k and normalized recall@k.
    Eval(EvalArgs),
    /// Rank candidates for every concept of a pool (e.g. the unaligned ones).
    AlignAll(AlignAllArgs),
    /// Run the curation service.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    concepts: Option<PathBuf>,
    #[arg(long)]
    entities: Option<PathBuf>,
    /// Directory for the normalized `concepts.jsonl` / `entities.jsonl`.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Dump file, or `-` for stdin.
    #[arg(long)]
    dump: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated language codes to keep (default: all supported).
    #[arg(long, value_delimiter = ',')]
    languages: Vec<String>,
    /// Claim property holding the concept id.
    #[arg(long, default_value = kbalign_core::corpus::DEFAULT_CUI_PROPERTY)]
    cui_property: String,
}

#[derive(Args, Debug)]
struct DatasetArgs {
    #[arg(long)]
    concepts: Option<PathBuf>,
    #[arg(long)]
    entities: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Train, valid and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    ratios: Option<Vec<f64>>,
    /// File with one cui per line; only these concepts are aligned.
    #[arg(long)]
    restrict_to: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IndexArgs {
    #[arg(long)]
    entities: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fields to index (title, text, aliases).
    #[arg(long, value_delimiter = ',')]
    fields: Vec<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MethodArg {
    Bm25,
    CharTfidf,
}

#[derive(Args, Debug, Default)]
struct QueryArgs {
    /// Concepts file to query with.
    #[arg(long, conflicts_with = "split")]
    concepts: Option<PathBuf>,
    /// Alignment split file to query with; also provides gold labels.
    #[arg(long)]
    split: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CandidatesArgs {
    #[arg(long, value_enum, default_value = "bm25")]
    method: MethodArg,
    #[command(flatten)]
    queries: QueryArgs,
    /// Saved index (bm25); built from --entities when absent.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    entities: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    ngram_min: Option<usize>,
    #[arg(long)]
    ngram_max: Option<usize>,
    /// Fields for an index built on the fly.
    #[arg(long, value_delimiter = ',')]
    fields: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PairsArgs {
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[command(flatten)]
    queries: QueryArgs,
    /// Alignment file with gold links, when querying with --concepts.
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    entities: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Sample this many negatives per concept instead of using all.
    #[arg(long)]
    negatives_per_group: Option<usize>,
}

#[derive(Args, Debug)]
struct RerankArgs {
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long, conflicts_with = "scores")]
    model: Option<PathBuf>,
    /// Scores from an external scorer (`scores.jsonl`).
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Alignment file with the gold entity per concept.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Candidate files to evaluate; repeat for several.
    #[arg(long = "run")]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    ks: Vec<usize>,
}

#[derive(Args, Debug)]
struct AlignAllArgs {
    #[arg(long)]
    concepts: Option<PathBuf>,
    #[arg(long)]
    entities: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    /// Rerank with this model; plain BM25 order otherwise.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Candidates kept per concept.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// First-stage depth before reranking.
    #[arg(long)]
    pool: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long)]
    concepts: Option<PathBuf>,
    #[arg(long)]
    entities: Option<PathBuf>,
    #[arg(long)]
    decisions: Option<PathBuf>,
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Directory with the web client, served at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    #[arg(long)]
    host: Option<String>,
    #[arg(long)]
    port: Option<u16>,
}

/// How a command failed, which decides the exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

pub fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => Level::ERROR,
        (false, 0) => Level::INFO,
        (false, 1) => Level::DEBUG,
        _ => Level::TRACE,
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.verbose, cli.quiet);
    let cfg = match &cli.config {
        Some(path) => match FileConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(1);
            }
        },
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(13);
    match commands::run(cli.command, &cfg, seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
