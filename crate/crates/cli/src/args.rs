use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use embtree_core::prototypes::FilterSpec;
use embtree_core::reduction::ReductionMethod;
use embtree_core::tree::Algorithm;

#[derive(Debug, Parser)]
#[command(
    name = "embtree",
    version,
    about = "Interpretable decision trees over document embeddings"
)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate dataset files and write a bundle manifest.
    Ingest(IngestArgs),
    /// Group embedding dimensions into features.
    Reduce(ReduceArgs),
    /// Fit a decision tree or random forest on the reduced features.
    Train(TrainArgs),
    /// Compute per-node prototype word clouds.
    Summarize(SummarizeArgs),
    /// Print a local or global explanation.
    Explain(ExplainArgs),
    /// Write the global explanation as JSON or Graphviz DOT.
    Export(ExportArgs),
    /// Serve the explanation API.
    Serve(ServeArgs),
    /// Generate a synthetic dataset bundle.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Pearson,
    Kmeans,
    Cnn,
}

impl From<MethodArg> for ReductionMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Pearson => ReductionMethod::Pearson,
            MethodArg::Kmeans => ReductionMethod::Kmeans,
            MethodArg::Cnn => ReductionMethod::Cnn,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Id3,
    #[value(name = "c4.5", alias = "c45")]
    C45,
    Cart,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Id3 => Algorithm::Id3,
            AlgorithmArg::C45 => Algorithm::C45,
            AlgorithmArg::Cart => Algorithm::Cart,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Binary,
    Csv,
}

#[derive(Debug, Args)]
pub struct BundleArg {
    /// Bundle manifest written by `ingest` or `synth`.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Embedding file format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// JSON tagset with `pos` and `ner` lists.
    #[arg(long)]
    pub tagset: Option<PathBuf>,
    /// Manifest output path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    #[command(flatten)]
    pub bundle: BundleArg,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Correlation percentile for pearson, strictly inside (0, 1).
    #[arg(long)]
    pub percentile: Option<f64>,
    /// Cluster count for kmeans.
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Output width for cnn.
    #[arg(long)]
    pub target_dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Convolution kernel for both cnn layers.
    #[arg(long)]
    pub kernel: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub padding: Option<usize>,
    /// Final pooling window; fitted to the target width when omitted.
    #[arg(long)]
    pub pool_kernel: Option<usize>,
    #[arg(long)]
    pub pool_stride: Option<usize>,
    /// Use stride 1 in the first pooling layer.
    #[arg(long)]
    pub wide: bool,
    /// Random seed; PEACH_SEED in the environment takes precedence.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Reduction artifact output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Feature matrix output; defaults next to the artifact.
    #[arg(long)]
    pub features_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub bundle: BundleArg,
    #[arg(long)]
    pub reduction: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    #[arg(long)]
    pub max_depth: Option<u32>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    /// Train a random forest with this many trees.
    #[arg(long)]
    pub forest: Option<usize>,
    /// Features per forest tree; defaults to ceil(sqrt(m)).
    #[arg(long)]
    pub subset_size: Option<usize>,
    /// Random seed; PEACH_SEED in the environment takes precedence.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[command(flatten)]
    pub bundle: BundleArg,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Words per node.
    #[arg(long)]
    pub topk: Option<usize>,
    /// Prototype artifact output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ArtifactArgs {
    #[command(flatten)]
    pub bundle: BundleArg,
    #[arg(long)]
    pub reduction: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub prototypes: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("target").required(true).args(["doc_id", "global", "text"]))]
pub struct ExplainArgs {
    #[command(flatten)]
    pub artifacts: ArtifactArgs,
    #[arg(long)]
    pub doc_id: Option<String>,
    #[arg(long)]
    pub global: bool,
    /// Ad-hoc text; needs --embedding, --embedding-file or --features.
    #[arg(long)]
    pub text: Option<String>,
    /// Raw embedding row as comma-separated floats.
    #[arg(long, value_delimiter = ',', requires = "text")]
    pub embedding: Option<Vec<f32>>,
    /// File with the raw embedding row, floats separated by commas or whitespace.
    #[arg(long, requires = "text")]
    pub embedding_file: Option<PathBuf>,
    /// Already reduced feature row as comma-separated floats.
    #[arg(long, value_delimiter = ',', requires = "text")]
    pub features: Option<Vec<f64>>,
    /// none, pos:TAG[,TAG] or ner:TAG[,TAG].
    #[arg(long, value_parser = parse_filter)]
    pub filter: Option<FilterSpec>,
    #[arg(long)]
    pub topk: Option<usize>,
    /// Write the explanation here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Json,
    Dot,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub artifacts: ArtifactArgs,
    #[arg(long, value_enum, default_value = "json")]
    pub format: ExportFormat,
    #[arg(long, value_parser = parse_filter)]
    pub filter: Option<FilterSpec>,
    #[arg(long)]
    pub topk: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub artifacts: ArtifactArgs,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Directory with built UI assets, served under `/`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    ThreeClass,
    Binary,
    Subclasses,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "three-class")]
    pub kind: SynthKind,
    #[arg(long)]
    pub docs: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub subclasses: usize,
    /// Random seed; PEACH_SEED in the environment takes precedence.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for the bundle files and manifest.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_filter(s: &str) -> Result<FilterSpec, String> {
    s.parse().map_err(|e: embtree_core::Error| e.to_string())
}
