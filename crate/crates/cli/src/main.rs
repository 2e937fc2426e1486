mod commands;
mod config;
mod services;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mdqa::eval::DatasetProfile;
use mdqa::pipeline::{ContextSource, PromptMode};

/// Multi-document question answering: index a corpus, answer questions by
/// decomposing, retrieving and aggregating, and score the results.
#[derive(Debug, Parser)]
#[command(name = "mdqa", version)]
struct Cli {
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split a corpus into passages and build a BM25 index.
    Index(IndexArgs),
    /// Query a BM25 index.
    Search(SearchArgs),
    /// Break a question into subquestions.
    Decompose(DecomposeArgs),
    /// Answer one question.
    Answer(AnswerArgs),
    /// Answer a file of questions and write records plus a manifest.
    Run(RunArgs),
    /// Build a few-shot example pool by generating evidence for training questions.
    Bootstrap(BootstrapArgs),
    /// Score run records against gold annotations.
    Evaluate(EvaluateArgs),
    /// Convert a dataset release into corpus and question files.
    Import(ImportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum CorpusFormatArg {
    /// One article per line: {"id", "title", "contents"}; split into sentence windows.
    Articles,
    /// One passage per line: {"id", "title", "contents"}; indexed as is.
    Passages,
}

#[derive(Debug, Args)]
struct IndexArgs {
    /// Corpus file (JSON Lines).
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = CorpusFormatArg::Articles)]
    format: CorpusFormatArg,
    /// Sentences per passage window (articles format only).
    #[arg(long, default_value_t = 3)]
    window_size: usize,
    /// BM25 term-frequency saturation.
    #[arg(long, default_value_t = 0.9)]
    k1: f64,
    /// BM25 length normalization.
    #[arg(long, default_value_t = 0.4)]
    b: f64,
    /// Output directory for index.json and passages.jsonl.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SearchArgs {
    /// Directory written by `mdqa index`.
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

/// Model service endpoints. Endpoints may also come from a `[providers]`
/// table in the config file; flags win.
#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    /// Replace every model service with deterministic offline stand-ins.
    #[arg(long, conflicts_with_all = ["completion_url", "rescore_url", "embed_url"])]
    pub mock_providers: bool,
    /// Canned completions (JSON Lines of {"prompt_sha256" or "prompt", "text"}) for the mock completion service.
    #[arg(long, requires = "mock_providers")]
    pub mock_responses: Option<PathBuf>,
    /// Base URL of the completion service (POST /complete).
    #[arg(long)]
    pub completion_url: Option<String>,
    /// Model name reported for the completion service [default: text-davinci-002].
    #[arg(long)]
    pub completion_model: Option<String>,
    /// Base URL of the reranking service (POST /rescore).
    #[arg(long)]
    pub rescore_url: Option<String>,
    /// Base URL of the embedding service (POST /embed).
    #[arg(long)]
    pub embed_url: Option<String>,
    /// Environment variable holding the bearer token [default: MDQA_API_KEY].
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// Directory for the on-disk completion cache (in-memory when omitted).
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Concurrent requests per service.
    #[arg(long, default_value_t = 8)]
    pub max_in_flight: usize,
    /// Request rate cap per service.
    #[arg(long)]
    pub requests_per_minute: Option<u32>,
}

/// Overrides for run configuration fields; unset flags keep the config
/// file value, which falls back to the built-in default.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigOverrides {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// gold | linked_intersection | full_retrieval | rerank_only [default: full_retrieval].
    #[arg(long)]
    pub context_source: Option<ContextSource>,
    /// Decompose questions before retrieval [default: true].
    #[arg(long)]
    pub decompose: Option<bool>,
    /// Ask for an evidence paragraph before the answer [default: true].
    #[arg(long)]
    pub cot: Option<bool>,
    /// Few-shot examples per prompt [default: 4].
    #[arg(long)]
    pub shots: Option<usize>,
    /// static | dynamic [default: static].
    #[arg(long)]
    pub prompt_mode: Option<PromptMode>,
    /// BM25 candidates per subquestion [default: 1000].
    #[arg(long)]
    pub bm25_depth: Option<usize>,
    /// Reranked passages kept per subquestion [default: 5].
    #[arg(long)]
    pub contexts_per_question: Option<usize>,
    /// Model context window in tokens [default: 4000].
    #[arg(long)]
    pub model_limit: Option<usize>,
    /// Tokens reserved for the completion [default: 512].
    #[arg(long)]
    pub reserved_output: Option<usize>,
    /// Questions answered concurrently [default: 4].
    #[arg(long)]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    #[arg(long)]
    question: String,
    /// Decomposition demonstrations (JSON Lines of {"question", "subquestions"}); built-in set when omitted.
    #[arg(long)]
    decomposition_examples: Option<PathBuf>,
    #[command(flatten)]
    providers: ProviderArgs,
    /// Optional config file supplying the `[providers]` table.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnswerArgs {
    /// Directory written by `mdqa index`.
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    question: String,
    /// Gold evidence passage or article ids, for gold context mode.
    #[arg(long, value_delimiter = ',')]
    evidence: Vec<String>,
    /// Linked article ids, for linked_intersection mode.
    #[arg(long, value_delimiter = ',')]
    linked: Vec<String>,
    /// Article whose passages are reranked in rerank_only mode.
    #[arg(long)]
    grounding_article: Option<String>,
    /// Few-shot example pool (JSON Lines).
    #[arg(long)]
    examples: Option<PathBuf>,
    #[arg(long)]
    decomposition_examples: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigOverrides,
    #[command(flatten)]
    providers: ProviderArgs,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Questions (JSON Lines of QA instances).
    #[arg(long)]
    questions: PathBuf,
    /// Directory written by `mdqa index`.
    #[arg(long)]
    index: PathBuf,
    /// Extra passages that gold evidence ids may refer to.
    #[arg(long)]
    gold_passages: Option<PathBuf>,
    /// Few-shot example pool (JSON Lines).
    #[arg(long)]
    examples: Option<PathBuf>,
    #[arg(long)]
    decomposition_examples: Option<PathBuf>,
    /// Output directory for records.jsonl, timings.jsonl and manifest.json.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: ConfigOverrides,
    #[command(flatten)]
    providers: ProviderArgs,
}

#[derive(Debug, Args)]
struct BootstrapArgs {
    /// Training questions (JSON Lines of QA instances).
    #[arg(long)]
    questions: PathBuf,
    /// Directory written by `mdqa index`, used to resolve evidence ids.
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    gold_passages: Option<PathBuf>,
    /// Fraction of training questions to sample.
    #[arg(long, default_value_t = 0.1)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Store question embeddings with each example.
    #[arg(long)]
    embed: bool,
    /// Output pool file (JSON Lines).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    providers: ProviderArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// records.jsonl written by `mdqa run`.
    #[arg(long)]
    records: PathBuf,
    /// Gold QA instances (JSON Lines).
    #[arg(long)]
    gold: PathBuf,
    /// iirc | qasper | strategyqa
    #[arg(long)]
    profile: DatasetProfile,
    /// Depth for evidence recall.
    #[arg(long, default_value_t = 10)]
    recall_k: usize,
    /// Also write per-instance scores and the summary as JSON Lines.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum DatasetArg {
    Qasper,
    Strategyqa,
    Iirc,
}

#[derive(Debug, Args)]
struct ImportArgs {
    #[arg(long, value_enum)]
    dataset: DatasetArg,
    /// Qasper release JSON, StrategyQA questions JSON, or IIRC questions JSON.
    #[arg(long)]
    input: PathBuf,
    /// StrategyQA paragraphs JSON.
    #[arg(long, required_if_eq("dataset", "strategyqa"))]
    paragraphs: Option<PathBuf>,
    /// IIRC context articles JSON.
    #[arg(long, required_if_eq("dataset", "iirc"))]
    context_articles: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let default_filter = if cli.quiet { "warn" } else { "warn,mdqa=info,mdqa_cli=info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_filter))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Index(a) => commands::index(a),
        Command::Search(a) => commands::search(a),
        Command::Decompose(a) => commands::decompose(a),
        Command::Answer(a) => commands::answer(a),
        Command::Run(a) => commands::run(a),
        Command::Bootstrap(a) => commands::bootstrap(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Import(a) => commands::import(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
