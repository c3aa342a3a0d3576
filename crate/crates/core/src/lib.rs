//! Query-guided distillation of long video token sequences, operating
//! entirely on precomputed embeddings and attention dumps.
//!
//! The pipeline selects keyframes that are relevant to the query yet
//! temporally distinct ([`dks`]), compresses every other frame into a single
//! saliency-weighted token ([`dfm`]), and accounts for the resulting token
//! budget ([`pipeline`]). Around it sit the analysis and benchmark tooling:
//! a redundancy profiler over attention dumps ([`profiler`]), a
//! needle-in-a-haystack benchmark fabric ([`niah`]), and a binary tensor
//! file format shared by all of them ([`tensor_file`]).

pub mod dfm;
pub mod dks;
pub mod embedding;
pub mod math;
pub mod niah;
pub mod pipeline;
pub mod profiler;
pub mod rng;
pub mod tensor_file;

pub use dfm::{DfmConfig, MergedToken};
pub use dks::{DksConfig, KeyframeSelection};
pub use embedding::{
    FrameEmbedding, PatchGrid, PatchSource, QueryEmbedding, VideoEmbeddingSet, Violation,
};
pub use pipeline::{BudgetReport, DistillConfig, DistilledSequence, SamplingMode};
pub use profiler::AttentionDump;
