//! End-to-end distillation: select keyframes, merge everything else, and
//! account for the token budget.
//!
//! The distilled sequence keeps the original temporal order: keyframes stay
//! as full patch grids, every other frame collapses to one merged token
//! differenced against its nearest preceding keyframe (frames before the
//! first keyframe merge with a zero redundancy term). `distill` materializes
//! the patch grids; `stream_distill` produces the identical output in two
//! passes while holding at most two grids -- the current frame and the most
//! recently seen keyframe -- no matter how long the video is.

use crate::dfm::{merge_frame, DfmConfig, DfmError, MergedToken};
use crate::dks::{frame_relevance, select_keyframes, DksConfig, DksError, KeyframeSelection};
use crate::embedding::{PatchGrid, PatchStreamError, QueryEmbedding, VideoEmbeddingSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Dks,
    QueryOnly,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DistillConfig {
    pub dks: DksConfig,
    pub dfm: DfmConfig,
    pub sampling_mode: SamplingMode,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            dks: DksConfig::default(),
            dfm: DfmConfig::default(),
            sampling_mode: SamplingMode::Dks,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("k = {k} exceeds frame count n = {n}")]
    KExceedsN { k: usize, n: usize },
    #[error("invalid budget arguments: {0}")]
    InvalidBudget(&'static str),
    #[error("video has no patch source attached")]
    MissingPatches,
    #[error("patch stream exhausted: got {got} grids, expected {expected}")]
    StreamExhausted { expected: usize, got: usize },
    #[error("sweep grids must be non-empty")]
    EmptyGrid,
    #[error("no videos supplied")]
    EmptyInput,
    #[error("{videos} videos but {queries} queries")]
    PairCountMismatch { videos: usize, queries: usize },
    #[error(transparent)]
    Dks(#[from] DksError),
    #[error(transparent)]
    Dfm(#[from] DfmError),
    #[error(transparent)]
    Patches(#[from] PatchStreamError),
}

/// Token accounting before and after distillation. All counts are exact
/// integers; `MN` tokens become `MK + (N - K)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BudgetReport {
    pub n_frames: usize,
    pub patches_per_frame: usize,
    pub keyframes: usize,
    pub original_tokens: u64,
    pub compressed_tokens: u64,
    pub reduction_ratio: f64,
}

pub fn budget(n: usize, m: usize, k: usize) -> Result<BudgetReport, PipelineError> {
    if n == 0 || m == 0 {
        return Err(PipelineError::InvalidBudget("n and m must be at least 1"));
    }
    if k == 0 {
        return Err(PipelineError::InvalidBudget("k must be at least 1"));
    }
    if k > n {
        return Err(PipelineError::KExceedsN { k, n });
    }
    let original = m as u64 * n as u64;
    let compressed = m as u64 * k as u64 + (n as u64 - k as u64);
    Ok(BudgetReport {
        n_frames: n,
        patches_per_frame: m,
        keyframes: k,
        original_tokens: original,
        compressed_tokens: compressed,
        reduction_ratio: 1.0 - compressed as f64 / original as f64,
    })
}

/// Coefficients of the token-count cost proxy `a * L + b * L^2`. This is a
/// proxy for sequence-length scaling only; it makes no claim about any
/// particular model's FLOPs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CostProfile {
    pub per_token_cost: f64,
    pub attention_quadratic_coeff: f64,
}

impl Default for CostProfile {
    fn default() -> Self {
        Self {
            per_token_cost: 1.0,
            attention_quadratic_coeff: 0.0,
        }
    }
}

pub fn estimate_cost(token_count: u64, profile: &CostProfile) -> f64 {
    let l = token_count as f64;
    profile.per_token_cost * l + profile.attention_quadratic_coeff * l * l
}

/// One entry of the distilled sequence, in frame order.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SequenceItem {
    Keyframe {
        frame_index: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        grid: Option<PatchGrid>,
    },
    Merged(MergedToken),
}

impl SequenceItem {
    pub fn frame_index(&self) -> usize {
        match self {
            SequenceItem::Keyframe { frame_index, .. } => *frame_index,
            SequenceItem::Merged(t) => t.source_frame,
        }
    }

    pub fn token_count(&self, m: usize) -> u64 {
        match self {
            SequenceItem::Keyframe { .. } => m as u64,
            SequenceItem::Merged(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DistilledSequence {
    pub items: Vec<SequenceItem>,
    pub budget: BudgetReport,
    pub selection: KeyframeSelection,
    /// True when threshold gating exhausted the candidates before reaching
    /// the configured keyframe cap; the pipeline proceeds without backfill.
    pub saturated: bool,
}

/// Keyframe selection for the configured sampling mode. QUERY_ONLY ranks by
/// relevance alone; UNIFORM takes `floor(i * N / K)` for `i = 0..K` and
/// ignores the query entirely (its relevance map stays empty).
pub fn select_for_mode(
    video: &VideoEmbeddingSet,
    query: &QueryEmbedding,
    cfg: &DistillConfig,
) -> Result<KeyframeSelection, PipelineError> {
    cfg.dks.validate()?;
    let n = video.n_frames();
    let k = cfg.dks.k_max.min(n);
    match cfg.sampling_mode {
        SamplingMode::Dks => Ok(select_keyframes(video, query, &cfg.dks)?),
        SamplingMode::QueryOnly => {
            let mut scored: Vec<(usize, f64)> = Vec::with_capacity(n);
            for frame in &video.frames {
                scored.push((frame.frame_index, frame_relevance(frame, query)?));
            }
            scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            scored.truncate(k);
            let selection_order: Vec<usize> = scored.iter().map(|&(i, _)| i).collect();
            let mut keyframe_indices = selection_order.clone();
            keyframe_indices.sort_unstable();
            Ok(KeyframeSelection {
                video_id: video.video_id.clone(),
                tau: cfg.dks.tau,
                k_max: cfg.dks.k_max,
                keyframe_indices,
                selection_order,
                relevance: scored.into_iter().collect(),
            })
        }
        SamplingMode::Uniform => {
            let mut indices: Vec<usize> = (0..k).map(|i| i * n / k).collect();
            indices.dedup();
            Ok(KeyframeSelection {
                video_id: video.video_id.clone(),
                tau: cfg.dks.tau,
                k_max: cfg.dks.k_max,
                keyframe_indices: indices.clone(),
                selection_order: indices,
                relevance: Default::default(),
            })
        }
    }
}

fn keyframe_flags(selection: &KeyframeSelection, n: usize) -> Vec<bool> {
    let mut flags = vec![false; n];
    for &k in &selection.keyframe_indices {
        flags[k] = true;
    }
    flags
}

fn finish(
    video: &VideoEmbeddingSet,
    selection: KeyframeSelection,
    items: Vec<SequenceItem>,
    m: usize,
) -> Result<DistilledSequence, PipelineError> {
    let n = video.n_frames();
    let saturated = selection.len() < selection.k_max.min(n);
    let budget = budget(n, m, selection.len())?;
    Ok(DistilledSequence {
        items,
        budget,
        selection,
        saturated,
    })
}

/// Distill with the patch grids materialized up front.
pub fn distill(
    video: &VideoEmbeddingSet,
    query: &QueryEmbedding,
    cfg: &DistillConfig,
) -> Result<DistilledSequence, PipelineError> {
    cfg.dfm.validate()?;
    let source = video
        .patches
        .as_ref()
        .ok_or(PipelineError::MissingPatches)?;
    let grids = crate::embedding::collect_grids(source.as_ref())?;
    if grids.len() != video.n_frames() {
        return Err(PipelineError::StreamExhausted {
            expected: video.n_frames(),
            got: grids.len(),
        });
    }
    let selection = select_for_mode(video, query, cfg)?;
    let flags = keyframe_flags(&selection, video.n_frames());

    let mut items = Vec::with_capacity(video.n_frames());
    let mut last_keyframe: Option<usize> = None;
    for (n, grid) in grids.iter().enumerate() {
        if flags[n] {
            items.push(SequenceItem::Keyframe {
                frame_index: n,
                grid: Some(grid.clone()),
            });
            last_keyframe = Some(n);
        } else {
            let paired = last_keyframe.map(|k| &grids[k]);
            items.push(SequenceItem::Merged(merge_frame(
                grid, paired, query, &cfg.dfm,
            )?));
        }
    }
    finish(video, selection, items, source.m_patches())
}

/// Instrumentation from a streaming run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct StreamStats {
    /// High-water mark of patch grids held by the streaming pass at once
    /// (current frame plus the retained pairing keyframe).
    pub peak_resident_grids: usize,
}

struct ResidencyMeter {
    current: usize,
    peak: usize,
}

impl ResidencyMeter {
    fn new() -> Self {
        Self {
            current: 0,
            peak: 0,
        }
    }

    fn acquire(&mut self) {
        self.current += 1;
        self.peak = self.peak.max(self.current);
    }

    fn release(&mut self) {
        self.current -= 1;
    }
}

/// Two-pass bounded-memory distillation: pass 1 runs selection on the frame
/// embeddings alone, pass 2 streams the patch grids once. Output is
/// bit-identical to [`distill`].
pub fn stream_distill(
    video: &VideoEmbeddingSet,
    query: &QueryEmbedding,
    cfg: &DistillConfig,
) -> Result<DistilledSequence, PipelineError> {
    Ok(stream_distill_instrumented(video, query, cfg)?.0)
}

pub fn stream_distill_instrumented(
    video: &VideoEmbeddingSet,
    query: &QueryEmbedding,
    cfg: &DistillConfig,
) -> Result<(DistilledSequence, StreamStats), PipelineError> {
    cfg.dfm.validate()?;
    let source = video
        .patches
        .as_ref()
        .ok_or(PipelineError::MissingPatches)?;
    let n = video.n_frames();

    // Pass 1: selection needs only the frame embeddings (N x d_f resident).
    let selection = select_for_mode(video, query, cfg)?;
    let flags = keyframe_flags(&selection, n);

    // Pass 2: one in-order sweep of the patch grids.
    let mut meter = ResidencyMeter::new();
    let mut iter = source.open()?;
    let mut items = Vec::with_capacity(n);
    let mut retained_keyframe: Option<PatchGrid> = None;
    #[allow(clippy::needless_range_loop)] // the index is the frame number
    for frame in 0..n {
        let grid = match iter.next_grid() {
            Some(g) => g?,
            None => {
                return Err(PipelineError::StreamExhausted {
                    expected: n,
                    got: frame,
                })
            }
        };
        meter.acquire();
        if flags[frame] {
            if retained_keyframe.take().is_some() {
                meter.release();
            }
            retained_keyframe = Some(grid.clone());
            // The retained copy replaces the in-flight grid in the meter;
            // the grid itself moves into the output.
            items.push(SequenceItem::Keyframe {
                frame_index: frame,
                grid: Some(grid),
            });
        } else {
            let token = merge_frame(&grid, retained_keyframe.as_ref(), query, &cfg.dfm)?;
            items.push(SequenceItem::Merged(token));
            meter.release();
        }
    }
    let stats = StreamStats {
        peak_resident_grids: meter.peak,
    };
    Ok((finish(video, selection, items, source.m_patches())?, stats))
}

/// One row of the hyperparameter sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SweepRow {
    pub tau: f64,
    pub alpha: f64,
    pub n_videos: usize,
    pub mean_keyframes: f64,
    pub mean_reduction: f64,
    /// Downstream score, populated only when the caller supplies a hook
    /// (e.g. accuracies from an external predictions file). Never computed
    /// here.
    pub score: Option<f64>,
}

/// Run the full (tau, alpha) grid over paired videos and queries. Rows are
/// emitted alpha-major to match the usual hyperparameter table layout.
pub fn run_sweep(
    videos: &[VideoEmbeddingSet],
    queries: &[QueryEmbedding],
    tau_grid: &[f64],
    alpha_grid: &[f64],
    base: &DistillConfig,
    score_hook: Option<&dyn Fn(f64, f64) -> Option<f64>>,
) -> Result<Vec<SweepRow>, PipelineError> {
    if tau_grid.is_empty() || alpha_grid.is_empty() {
        return Err(PipelineError::EmptyGrid);
    }
    if videos.is_empty() {
        return Err(PipelineError::EmptyInput);
    }
    if videos.len() != queries.len() {
        return Err(PipelineError::PairCountMismatch {
            videos: videos.len(),
            queries: queries.len(),
        });
    }
    let mut rows = Vec::with_capacity(tau_grid.len() * alpha_grid.len());
    for &alpha in alpha_grid {
        for &tau in tau_grid {
            let cfg = DistillConfig {
                dks: DksConfig { tau, ..base.dks },
                dfm: DfmConfig { alpha, ..base.dfm },
                sampling_mode: base.sampling_mode,
            };
            let mut keyframes_sum = 0.0f64;
            let mut reduction_sum = 0.0f64;
            for (video, query) in videos.iter().zip(queries.iter()) {
                let distilled = distill(video, query, &cfg)?;
                keyframes_sum += distilled.selection.len() as f64;
                reduction_sum += distilled.budget.reduction_ratio;
            }
            rows.push(SweepRow {
                tau,
                alpha,
                n_videos: videos.len(),
                mean_keyframes: keyframes_sum / videos.len() as f64,
                mean_reduction: reduction_sum / videos.len() as f64,
                score: score_hook.and_then(|hook| hook(tau, alpha)),
            });
        }
    }
    Ok(rows)
}
