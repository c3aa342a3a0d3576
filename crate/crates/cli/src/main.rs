//! `vlmp` -- command-line entry point for the video token distillation
//! toolkit.
//!
//! Exit codes: 0 success, 1 data or validation error, 2 usage error. All
//! diagnostics go to stderr; data goes to files or stdout. Two runs with
//! identical inputs, flags and seed produce byte-identical outputs
//! regardless of `--jobs`.

mod commands;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "vlmp",
    version,
    about = "Video token distillation toolkit: keyframe selection, feature merging, redundancy profiling, and needle-in-a-haystack benchmarking over precomputed embeddings"
)]
pub struct Cli {
    /// Seed for every pseudo-random draw in this run
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Treat recoverable data issues as failures (e.g. score missing
    /// predictions as incorrect)
    #[arg(long, global = true)]
    pub strict: bool,

    /// Explicitly L2-renormalize vectors at ingestion instead of rejecting
    /// off-norm inputs (zero vectors still fail)
    #[arg(long, global = true)]
    pub renormalize: bool,

    /// Directory for generated files (fallback: VLMP_OUT_DIR, then .)
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Output format for reports
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Worker threads for per-video parallelism (output bytes do not depend
    /// on this)
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Dks,
    QueryOnly,
    Uniform,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate tensor files or video manifests and report every violation
    Validate(ValidateArgs),
    /// Distill one video into keyframe grids plus merged tokens
    Distill(DistillArgs),
    /// Token budget arithmetic (original vs compressed counts)
    Budget(BudgetArgs),
    /// Redundancy profiles over attention dumps
    Profile {
        #[command(subcommand)]
        which: ProfileCommand,
    },
    /// Needle-in-a-haystack benchmark fabric
    Niah {
        #[command(subcommand)]
        which: NiahCommand,
    },
    /// Run the (tau, alpha) hyperparameter grid over a set of videos
    Sweep(SweepArgs),
    /// Generate synthetic embeddings or attention dumps
    Gen {
        #[command(subcommand)]
        which: GenCommand,
    },
    /// Print the full generated manual for every subcommand
    Manual,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Tensor files (.vlmp) or video sidecar manifests (.json)
    #[arg(required = true, value_name = "FILE")]
    pub files: Vec<PathBuf>,

    /// Tolerance on total attention mass for ATTENTION files
    #[arg(long, default_value_t = vlmp_core::profiler::DEFAULT_MASS_TOLERANCE)]
    pub mass_tolerance: f64,

    /// Write the report here instead of stdout
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    /// Two-row QUERY file: frame space then patch space (requires d_f == d_p)
    #[arg(long, value_name = "FILE", required_unless_present = "query_frame", conflicts_with_all = ["query_frame", "query_patch"])]
    pub query: Option<PathBuf>,

    /// Single-row QUERY file holding the frame-space vector
    #[arg(long, value_name = "FILE", requires = "query_patch")]
    pub query_frame: Option<PathBuf>,

    /// Single-row QUERY file holding the patch-space vector
    #[arg(long, value_name = "FILE", requires = "query_frame")]
    pub query_patch: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DistillArgs {
    /// Video sidecar manifest (frame and patch files)
    #[arg(long, value_name = "FILE")]
    pub video: PathBuf,

    #[command(flatten)]
    pub query: QueryArgs,

    /// Similarity threshold for keyframe admission
    #[arg(long, default_value_t = 0.85)]
    pub tau: f64,

    /// Maximum number of keyframes
    #[arg(long, default_value_t = 32)]
    pub k_max: usize,

    /// Relevance/redundancy trade-off in patch saliency
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,

    /// Softmax temperature for merge weights
    #[arg(long, default_value_t = 1e-2)]
    pub alpha: f64,

    /// Frame sampling mode
    #[arg(long, value_enum, default_value_t = Mode::Dks)]
    pub mode: Mode,

    /// Use the two-pass bounded-memory streaming path
    #[arg(long)]
    pub stream: bool,

    /// Externalize token vectors into this tensor file; the JSON report
    /// then omits the payloads
    #[arg(long, value_name = "FILE")]
    pub tokens_out: Option<PathBuf>,

    /// Debug dump of per-frame merge weight vectors as CSV
    #[arg(long, value_name = "FILE")]
    pub weights_csv: Option<PathBuf>,

    /// Write the JSON report here instead of stdout
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BudgetArgs {
    /// Number of frames N
    #[arg(long)]
    pub n: usize,

    /// Patches (tokens) per frame M
    #[arg(long)]
    pub m: usize,

    /// Keyframe count K
    #[arg(long)]
    pub k: usize,

    /// Linear coefficient of the cost proxy a*L + b*L^2
    #[arg(long, default_value_t = 1.0)]
    pub cost_linear: f64,

    /// Quadratic coefficient of the cost proxy
    #[arg(long, default_value_t = 0.0)]
    pub cost_quad: f64,

    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum ProfileCommand {
    /// Frame-level cumulative attention and neighbor similarity
    Frame(ProfileFrameArgs),
    /// Patch-level cumulative attention and keyframe-patch similarity
    Patch(ProfilePatchArgs),
}

#[derive(Args, Debug)]
pub struct ProfileFrameArgs {
    /// ATTENTION tensor file
    #[arg(long, value_name = "FILE")]
    pub dump: PathBuf,

    /// FRAME_SET tensor file with the frame embeddings
    #[arg(long, value_name = "FILE")]
    pub frames: PathBuf,

    /// Neighbors per frame in the attention ranking
    #[arg(long, default_value_t = 3)]
    pub window: usize,

    /// Random pairs for the similarity baseline
    #[arg(long, default_value_t = 100)]
    pub pairs: usize,

    /// Tolerance on total attention mass
    #[arg(long, default_value_t = vlmp_core::profiler::DEFAULT_MASS_TOLERANCE)]
    pub mass_tolerance: f64,

    /// Downgrade a mass violation to a stderr warning
    #[arg(long)]
    pub mass_warn_only: bool,

    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ProfilePatchArgs {
    /// ATTENTION tensor file (N x M)
    #[arg(long, value_name = "FILE")]
    pub dump: PathBuf,

    /// PATCH_SET tensor file with the patch grids
    #[arg(long, value_name = "FILE")]
    pub patches: PathBuf,

    /// Number of top-attention frames designated keyframes
    #[arg(long, default_value_t = 32)]
    pub k_top: usize,

    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum NiahCommand {
    /// Build a deterministic case manifest from a source catalog
    Build(NiahBuildArgs),
    /// Splice one case's needle into its haystack at the embedding level
    Splice(NiahSpliceArgs),
    /// Score externally produced predictions into a length x depth grid
    Score(NiahScoreArgs),
}

#[derive(Args, Debug)]
pub struct NiahBuildArgs {
    /// JSON catalog: [{video_id, length, question_type?, query_id?, answer_key?}]
    #[arg(long, value_name = "FILE")]
    pub catalog: PathBuf,

    /// Haystack lengths in frames, comma separated
    #[arg(long, default_value = "2000,4000,6000,8000,10000")]
    pub lengths: String,

    /// Cases per haystack length
    #[arg(long, default_value_t = 600)]
    pub cases_per_length: usize,

    /// Minimum needle length in frames
    #[arg(long, default_value_t = 30)]
    pub needle_min: usize,

    /// Maximum needle length in frames
    #[arg(long, default_value_t = 120)]
    pub needle_max: usize,

    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct NiahSpliceArgs {
    /// Case manifest produced by `niah build`
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,

    /// Case id to splice
    #[arg(long, value_name = "ID")]
    pub case: String,

    /// Video manifest of the haystack source
    #[arg(long, value_name = "FILE")]
    pub haystack: PathBuf,

    /// Video manifest of the needle source
    #[arg(long, value_name = "FILE")]
    pub needle: PathBuf,
}

#[derive(Args, Debug)]
pub struct NiahScoreArgs {
    /// Case manifest produced by `niah build`
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,

    /// JSON-lines predictions: one {"case_id": ..., "answer": ...} per line
    #[arg(long, value_name = "FILE")]
    pub predictions: PathBuf,

    /// Depth buckets per haystack length
    #[arg(long, default_value_t = 10)]
    pub buckets: usize,

    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Video sidecar manifest; repeat per video, paired with --query by
    /// position
    #[arg(long = "video", value_name = "FILE", required = true)]
    pub videos: Vec<PathBuf>,

    /// Two-row QUERY file; repeat per video
    #[arg(long = "query", value_name = "FILE", required = true)]
    pub queries: Vec<PathBuf>,

    /// Similarity thresholds, comma separated
    #[arg(long, default_value = "0.35,0.5,0.85,1.0")]
    pub tau_grid: String,

    /// Softmax temperatures, comma separated
    #[arg(long, default_value = "1,0.1,0.01,0.001")]
    pub alpha_grid: String,

    /// Maximum keyframes per video
    #[arg(long, default_value_t = 32)]
    pub k_max: usize,

    /// Saliency trade-off
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,

    /// Frame sampling mode
    #[arg(long, value_enum, default_value_t = Mode::Dks)]
    pub mode: Mode,

    /// Optional downstream scores: JSON [{tau, alpha, score}]
    #[arg(long, value_name = "FILE")]
    pub scores: Option<PathBuf>,

    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum GenCommand {
    /// Synthetic video embeddings (frame file, patch file, query, manifest)
    Embeddings(GenEmbeddingsArgs),
    /// Synthetic attention dump with a planted concentration pattern
    Attention(GenAttentionArgs),
}

#[derive(Args, Debug)]
pub struct GenEmbeddingsArgs {
    /// Frames to generate
    #[arg(long, default_value_t = 16)]
    pub n: usize,

    /// Patches per frame
    #[arg(long, default_value_t = 4)]
    pub m: usize,

    /// Frame embedding dimension
    #[arg(long, default_value_t = 16)]
    pub d_f: usize,

    /// Patch embedding dimension
    #[arg(long, default_value_t = 8)]
    pub d_p: usize,

    /// Cluster centers controlling temporal redundancy
    #[arg(long, default_value_t = 4)]
    pub centers: usize,

    /// Blend toward the assigned center: 0 = pure noise, 1 = exact collapse
    #[arg(long, default_value_t = 0.5)]
    pub blend: f64,

    /// Base name for emitted files (default synth-<seed>)
    #[arg(long, value_name = "NAME")]
    pub id: Option<String>,
}

#[derive(Args, Debug)]
pub struct GenAttentionArgs {
    /// Frames
    #[arg(long, default_value_t = 100)]
    pub n: usize,

    /// Patches per frame
    #[arg(long, default_value_t = 1)]
    pub m: usize,

    /// Fraction of frames planted as the high-attention group
    #[arg(long, default_value_t = 0.05)]
    pub top_frac: f64,

    /// Mass shared uniformly by that group
    #[arg(long, default_value_t = 0.9)]
    pub mass_frac: f64,

    /// Output file (default <out-dir>/synth-att-<seed>.vlmp)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

/// Render the generated manual: long help for the root and every
/// subcommand, recursively.
pub fn render_manual() -> String {
    fn walk(cmd: &mut clap::Command, prefix: &str, out: &mut String) {
        let name = if prefix.is_empty() {
            cmd.get_name().to_string()
        } else {
            format!("{prefix} {}", cmd.get_name())
        };
        out.push_str(&format!(
            "\n{}\n{}\n\n",
            name.to_uppercase(),
            "=".repeat(name.len())
        ));
        out.push_str(&cmd.render_long_help().to_string());
        let subs: Vec<String> = cmd
            .get_subcommands()
            .map(|c| c.get_name().to_string())
            .collect();
        for sub in subs {
            if sub == "help" {
                continue;
            }
            let mut child = cmd.find_subcommand(&sub).unwrap().clone();
            walk(&mut child, &name, out);
        }
    }
    let mut out = String::new();
    let mut root = Cli::command();
    walk(&mut root, "", &mut out);
    out
}
