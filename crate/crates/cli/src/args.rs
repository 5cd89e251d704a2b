use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use xr_core::datasets::DatasetKind;
use xr_core::domain::PipelineConfig;
use xr_core::pipeline::DEFAULT_FAILURE_THRESHOLD;

#[derive(Debug, Parser)]
#[command(name = "xr", version = xr_core::pipeline::VERSION, about = "Multi-agent composed image retrieval: ingest, embed, run, evaluate, ablate")]
pub struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert an upstream benchmark release into a manifest.
    Ingest(IngestArgs),
    /// Caption and embed every manifest image into a catalog file.
    Embed(EmbedArgs),
    /// Run the pipeline over every manifest query and write a report.
    Run(RunArgs),
    /// Print report tables, or mean/stddev over a directory of reports.
    Eval(EvalArgs),
    /// Run modality/parameter ablations, or compare run series for significance.
    Ablate(AblateArgs),
    /// Print the per-stage records of a trace file or run directory.
    TraceDump(TraceDumpArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// cirr, circo, fashioniq_shirt, fashioniq_dress or fashioniq_toptee.
    #[arg(long, value_parser = parse_dataset)]
    pub dataset: DatasetKind,
    /// Root of the upstream release.
    #[arg(long)]
    pub raw: PathBuf,
    /// Split to convert [default: test1 for cirr, test for circo, val for fashioniq]
    #[arg(long)]
    pub split: Option<String>,
    /// Manifest to write.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_dataset(s: &str) -> Result<DatasetKind, String> {
    s.parse()
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// Answer every agent call from a scripted mock file (no network).
    #[arg(long, value_name = "SCRIPT", conflicts_with = "live")]
    pub mock: Option<PathBuf>,
    /// Use the HTTP endpoints named by XR_CHAT_URL / XR_EMBED_URL / XR_API_KEY.
    #[arg(long)]
    pub live: bool,
    /// Amplitude of seeded uniform noise added to mock embeddings.
    #[arg(long, default_value_t = 0.0, requires = "mock")]
    pub mock_noise: f32,
    /// Seed of the mock noise injector.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Persistent response cache (JSON lines); in-memory when absent.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Directory of prompt template overrides (<agent>.txt).
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Directory relative image URIs are resolved against.
    #[arg(long)]
    pub image_root: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionArg {
    Rrf,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyArg {
    Independent,
    Conjunctive,
}

/// Pipeline knobs. Every flag has a config-file key of the same name with
/// dashes as underscores; a flag given on the command line wins.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// TOML file of pipeline settings.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Weight of text-side similarity in the fine-stage combination.
    #[arg(long, default_value_t = PipelineConfig::DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// RRF smoothing constant.
    #[arg(long, default_value_t = PipelineConfig::DEFAULT_Z)]
    pub z: f64,
    /// Length of the final ranking.
    #[arg(long, default_value_t = PipelineConfig::DEFAULT_K)]
    pub k: usize,
    /// Shortlist size passed to verification.
    #[arg(long, default_value_t = PipelineConfig::DEFAULT_K_PRIME)]
    pub k_prime: usize,
    /// True/False statements generated per query.
    #[arg(long, default_value_t = PipelineConfig::DEFAULT_N_QUESTIONS)]
    pub n_questions: usize,
    #[arg(long, default_value_t = PipelineConfig::DEFAULT_TEMPERATURE)]
    pub temperature: f64,
    #[arg(long, default_value_t = PipelineConfig::DEFAULT_TOP_P)]
    pub top_p: f64,
    /// Concurrent backend requests.
    #[arg(long, default_value_t = PipelineConfig::DEFAULT_MAX_INFLIGHT)]
    pub max_inflight: usize,
    /// Queries processed at once.
    #[arg(long, default_value_t = 4)]
    pub query_parallelism: usize,
    #[arg(long, value_enum, default_value_t = FusionArg::Rrf)]
    pub fusion: FusionArg,
    #[arg(long, value_enum, default_value_t = VerifyArg::Independent)]
    pub verify_mode: VerifyArg,
    /// Largest tolerated fraction of failed queries.
    #[arg(long, default_value_t = DEFAULT_FAILURE_THRESHOLD)]
    pub failure_threshold: f64,
    /// Run every data-parallel loop on the calling thread.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long)]
    pub disable_text_sim: bool,
    #[arg(long)]
    pub disable_vision_sim: bool,
    #[arg(long)]
    pub disable_text_q: bool,
    #[arg(long)]
    pub disable_vision_q: bool,
    /// Verify every catalog candidate instead of the top k'.
    #[arg(long)]
    pub bypass_select: bool,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Catalog file to write.
    #[arg(long)]
    pub catalog: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, default_value_t = PipelineConfig::DEFAULT_MAX_INFLIGHT)]
    pub max_inflight: usize,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Catalog file; built and written first when it does not exist.
    #[arg(long)]
    pub catalog: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Report JSON to write.
    #[arg(long, default_value = "report.json")]
    pub report_path: PathBuf,
    /// Run directory receiving run.json and one trace per query.
    #[arg(long, value_name = "DIR")]
    pub trace: Option<PathBuf>,
    /// Free-form label stored in the report.
    #[arg(long, default_value = "")]
    pub label: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Report JSON files to print.
    pub reports: Vec<PathBuf>,
    /// Directory of report JSON files from repeated runs; prints mean and
    /// standard deviation per metric.
    #[arg(long, value_name = "DIR", conflicts_with = "reports")]
    pub series: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Directory of report JSON files for the method under test; switches to
    /// significance mode (no pipeline runs).
    #[arg(long, value_name = "DIR")]
    pub series: Option<PathBuf>,
    /// Baseline report directory compared against --series; repeatable.
    #[arg(long, value_name = "DIR", requires = "series")]
    pub baseline: Vec<PathBuf>,
    /// Metric of the significance table [default: first metric of the series]
    #[arg(long)]
    pub metric: Option<String>,

    #[arg(long, conflicts_with = "series")]
    pub manifest: Option<PathBuf>,
    #[arg(long, conflicts_with = "series")]
    pub catalog: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// All 15 non-empty combinations of the four modality switches.
    #[arg(long)]
    pub grid: bool,
    /// TOML file with [[ablation]] tables of switches and sweeps.
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
    /// Also run direct score summation in place of RRF.
    #[arg(long)]
    pub compare_fusion: bool,
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub sweep_lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub sweep_z: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub sweep_k_prime: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub sweep_n_questions: Vec<usize>,
    /// Directory receiving one report per ablation run.
    #[arg(long, default_value = "ablation")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Query,
    Coarse,
    Fine,
}

#[derive(Debug, Args)]
pub struct TraceDumpArgs {
    /// A trace file, or a run directory written by `run --trace`.
    pub path: PathBuf,
    /// Only records of this stage.
    #[arg(long, value_enum)]
    pub stage: Option<StageArg>,
    /// Aligned columns instead of JSON lines (coarse and fine records only).
    #[arg(long)]
    pub table: bool,
}
