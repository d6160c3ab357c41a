use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use laqg_core::{Combine, Family, Positional};

#[derive(Debug, Parser)]
#[command(
    name = "laqg",
    version,
    about = "Question generation from long answers: data preparation, training, decoding, automatic metrics, \
             length-binned analysis and the human-evaluation service",
    after_help = "Exit codes: 0 success, 1 usage, 2 data error, 3 internal error."
)]
pub struct Cli {
    /// JSON object supplying any flag (top level or under a subcommand
    /// name); flags given on the command line take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest simplified NQ, split, build the vocabulary and write corpus statistics
    PrepareData(PrepareArgs),
    /// Train one model family on a prepared data directory
    Train(TrainArgs),
    /// Decode questions for one split with a trained checkpoint
    Generate(GenerateArgs),
    /// Score generations against reference questions
    Evaluate(EvaluateArgs),
    /// Corpus metrics per answer-length bin for one evaluated run
    BinReport(BinReportArgs),
    /// Per-bin metric differences between two evaluated runs
    Compare(CompareArgs),
    /// Run the human-evaluation HTTP service
    ServeAnneval(ServeArgs),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Secondary {
    None,
    FirstSentence,
    Summary(PathBuf),
}

fn parse_secondary(s: &str) -> Result<Secondary, String> {
    match s {
        "none" => Ok(Secondary::None),
        "first-sentence" => Ok(Secondary::FirstSentence),
        _ => match s.strip_prefix("summary=") {
            Some(p) if !p.is_empty() => Ok(Secondary::Summary(PathBuf::from(p))),
            _ => Err("expected none, first-sentence or summary=FILE".into()),
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Source {
    Answer,
    SecondaryOnly,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Simplified-NQ JSON lines (training portion)
    #[arg(long)]
    pub input: PathBuf,
    /// Simplified-NQ dev file carved as the test set; without it the test
    /// split repeats the validation split
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub split_seed: u64,
    /// Fraction of retained examples used for training; the rest validate
    #[arg(long, default_value_t = 0.9)]
    pub train_ratio: f64,
    /// none | first-sentence | summary=FILE (tab-separated id, summary)
    #[arg(long, default_value = "none", value_parser = parse_secondary)]
    pub secondary: Secondary,
    /// What the models read: the long answer, or the secondary input alone
    #[arg(long, value_enum, default_value = "answer")]
    pub source: Source,
    /// Maximum number of non-reserved vocabulary entries
    #[arg(long, default_value_t = 50_000)]
    pub vocab_size: usize,
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: laqg_core::ModelError| e.to_string())
}

fn parse_combine(s: &str) -> Result<Combine, String> {
    s.parse().map_err(|e: laqg_core::ModelError| e.to_string())
}

fn parse_positional(s: &str) -> Result<Positional, String> {
    s.parse().map_err(|e: laqg_core::ModelError| e.to_string())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Prepared data directory
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// lstm-attn | lstm-copy | lstm-maxout | transformer | transformer-copy | multi-source-transformer
    #[arg(long, default_value = "transformer", value_parser = parse_family)]
    pub family: Family,
    /// Size preset: iwslt_de_en | wmt_en_de_big | wmt_en_fr_big (individual size flags override it)
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub enc_layers: Option<usize>,
    #[arg(long)]
    pub dec_layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub d_ffn: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub max_src_len: Option<usize>,
    #[arg(long)]
    pub max_tgt_len: Option<usize>,
    /// Multi-source combination: parallel | serial
    #[arg(long, value_parser = parse_combine)]
    pub combine: Option<Combine>,
    /// sinusoidal | learned
    #[arg(long, value_parser = parse_positional)]
    pub positional: Option<Positional>,
    /// Bidirectional LSTM encoder
    #[arg(long)]
    pub bidirectional: bool,
    /// Tie target embeddings to the output projection
    #[arg(long)]
    pub tie_embeddings: bool,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Adam learning rate (β1 0.9, β2 0.98, ε 1e-8)
    #[arg(long, default_value_t = 0.0005)]
    pub lr: f64,
    /// Clip the global gradient norm to this value
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Measure training/validation perplexity every N epochs
    #[arg(long, default_value_t = 1)]
    pub eval_every: usize,
    /// Stop once training perplexity falls below this value
    #[arg(long)]
    pub stop_perplexity: Option<f64>,
    /// Resolve and record the configuration without training
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn file(self) -> &'static str {
        match self {
            Split::Train => "train.jsonl",
            Split::Valid => "valid.jsonl",
            Split::Test => "test.jsonl",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Training run directory (or its model.ckpt)
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Prepared data directory
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: Split,
    /// Beam width; 1 decodes greedily
    #[arg(long, default_value_t = laqg_core::decoding::DEFAULT_BEAM)]
    pub beam: usize,
    /// Beam scores are divided by length^penalty (0 = raw log-probability)
    #[arg(long, default_value_t = 0.0)]
    pub length_penalty: f64,
    /// Decode only the first N examples of the split
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Generation run directory (or a generations file)
    #[arg(long)]
    pub gen: PathBuf,
    /// Prepared data directory (or a dataset file) holding the references
    #[arg(long)]
    pub refs: PathBuf,
    /// Reference split when --refs is a directory (default: the split that was generated)
    #[arg(long, value_enum)]
    pub split: Option<Split>,
    #[arg(long)]
    pub out: PathBuf,
    /// Epsilon for zero-match BLEU orders (default: unsmoothed)
    #[arg(long)]
    pub bleu_smoothing: Option<f64>,
    /// ROUGE-L recall weight
    #[arg(long, default_value_t = 1.0)]
    pub rouge_beta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum By {
    Sentences,
    Words,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct BinningArgs {
    #[arg(long, value_enum, default_value = "sentences")]
    pub by: By,
    /// Word-bin width
    #[arg(long, default_value_t = laqg_metrics::bins::DEFAULT_WORD_WIDTH)]
    pub width: usize,
    /// Number of word bins (the last is open-ended)
    #[arg(long, default_value_t = laqg_metrics::bins::DEFAULT_WORD_BINS)]
    pub bins: usize,
    /// Sentence count from which rows are pooled ("6+")
    #[arg(long, default_value_t = laqg_metrics::bins::DEFAULT_SENTENCE_CAP)]
    pub cap: usize,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Also write the report files into this directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BinReportArgs {
    /// Evaluation run directory (or its results file)
    #[arg(long)]
    pub eval: PathBuf,
    #[command(flatten)]
    pub binning: BinningArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Evaluation run directory of the first system
    #[arg(long)]
    pub a: PathBuf,
    /// Evaluation run directory of the second system
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub name_a: Option<String>,
    #[arg(long)]
    pub name_b: Option<String>,
    /// Show one metric column (e.g. BLEU-4) instead of all
    #[arg(long)]
    pub metric: Option<String>,
    #[command(flatten)]
    pub binning: BinningArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory of study ledgers
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Built annotation UI bundle to host at /
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Create this study at startup (if absent) from the --gen runs
    #[arg(long, requires = "gen")]
    pub study: Option<String>,
    /// Generation run directories feeding --study (one per model)
    #[arg(long)]
    pub gen: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub n_items: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub min_annotators: usize,
}
