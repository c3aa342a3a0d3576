//! Deterministic synthetic data and independent reference implementations.
//!
//! Everything here is a pure function of a 64-bit seed via the documented
//! splitmix64 stream (uniform bits, Gaussian variates by Box-Muller), so any
//! test instance can be regenerated from its seed alone. The merging
//! reference [`dfm_oracle`] re-derives the saliency/softmax/pooling chain
//! from scratch -- different softmax formulation, compensated sums -- and is
//! kept free of any import from the selection or merging modules; a source
//! scan in this crate's tests enforces that.

use std::sync::Arc;

use vlmp_core::embedding::{
    FrameEmbedding, InMemoryPatchSource, PatchGrid, PatchIter, PatchSource, PatchStreamError,
    QueryEmbedding, VideoEmbeddingSet,
};
use vlmp_core::profiler::AttentionDump;
use vlmp_core::rng::SplitMix64;
use vlmp_core::{DfmConfig, MergedToken};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error("invalid fractions: {0}")]
    InvalidFractions(String),
    #[error("dimension mismatch: {context}: {left} vs {right}")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },
}

/// Recipe for one synthetic video. Frames (and their patch grids) are drawn
/// around `cluster_centers` cluster centers; `blend` interpolates between
/// pure noise (0) and exact collapse onto the assigned center (1), with L2
/// renormalization after blending.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthSpec {
    pub n_frames: usize,
    pub m_patches: usize,
    pub d_f: usize,
    pub d_p: usize,
    pub cluster_centers: usize,
    pub blend: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_frames: 16,
            m_patches: 4,
            d_f: 16,
            d_p: 8,
            cluster_centers: 4,
            blend: 0.5,
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), SynthError> {
        if self.n_frames == 0 || self.m_patches == 0 || self.d_f == 0 || self.d_p == 0 {
            return Err(SynthError::InvalidSpec(
                "all dimensions must be positive".to_string(),
            ));
        }
        if self.cluster_centers == 0 {
            return Err(SynthError::InvalidSpec(
                "need at least one cluster center".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.blend) {
            return Err(SynthError::InvalidSpec(format!(
                "blend must be in [0, 1], got {}",
                self.blend
            )));
        }
        Ok(())
    }

    fn cluster_of(&self, frame: usize) -> usize {
        frame % self.cluster_centers
    }
}

// Disjoint key spaces for per-purpose derived streams.
const TAG_CENTERS: u64 = 0;
const TAG_QUERY: u64 = 1;
const TAG_FRAME: u64 = 2;
const TAG_PATCH: u64 = 3;

fn stream(seed: u64, tag: u64, index: u64) -> SplitMix64 {
    SplitMix64::derive(seed, (tag << 48) | index)
}

fn gaussian_vec(rng: &mut SplitMix64, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.next_gaussian()).collect()
}

fn blend_and_normalize(center: &[f32], noise: &[f64], blend: f64) -> Vec<f32> {
    let mixed: Vec<f32> = center
        .iter()
        .zip(noise.iter())
        .map(|(&c, &v)| (blend * c as f64 + (1.0 - blend) * v) as f32)
        .collect();
    normalize_f32(mixed)
}

fn normalize_f32(mut v: Vec<f32>) -> Vec<f32> {
    let norm = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x = (*x as f64 / norm) as f32;
    }
    v
}

fn normalize_f64_to_f32(v: Vec<f64>) -> Vec<f32> {
    let norm = v.iter().map(|&x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| (x / norm) as f32).collect()
}

struct Centers {
    frame: Vec<Vec<f32>>,
    /// Per cluster, M unit patch rows flattened.
    patches: Vec<Vec<f32>>,
}

fn draw_centers(spec: &SynthSpec) -> Centers {
    let mut frame = Vec::with_capacity(spec.cluster_centers);
    let mut patches = Vec::with_capacity(spec.cluster_centers);
    for c in 0..spec.cluster_centers {
        let mut rng = stream(spec.seed, TAG_CENTERS, c as u64);
        frame.push(normalize_f64_to_f32(gaussian_vec(&mut rng, spec.d_f)));
        let mut grid = Vec::with_capacity(spec.m_patches * spec.d_p);
        for _ in 0..spec.m_patches {
            grid.extend(normalize_f64_to_f32(gaussian_vec(&mut rng, spec.d_p)));
        }
        patches.push(grid);
    }
    Centers { frame, patches }
}

fn synth_grid(spec: &SynthSpec, centers: &Centers, frame: usize) -> PatchGrid {
    let cluster = spec.cluster_of(frame);
    let center_grid = &centers.patches[cluster];
    let mut rng = stream(spec.seed, TAG_PATCH, frame as u64);
    let mut data = Vec::with_capacity(spec.m_patches * spec.d_p);
    for m in 0..spec.m_patches {
        let noise = gaussian_vec(&mut rng, spec.d_p);
        let center = &center_grid[m * spec.d_p..(m + 1) * spec.d_p];
        data.extend(blend_and_normalize(center, &noise, spec.blend));
    }
    PatchGrid::new(frame, spec.m_patches, spec.d_p, data).expect("synth grid shape")
}

/// Patch grids generated on demand; nothing is resident until a consumer
/// pulls a grid, which makes multi-thousand-frame streaming tests cheap.
pub struct SynthPatchSource {
    spec: SynthSpec,
    centers: Arc<Centers>,
}

impl PatchSource for SynthPatchSource {
    fn n_frames(&self) -> usize {
        self.spec.n_frames
    }

    fn m_patches(&self) -> usize {
        self.spec.m_patches
    }

    fn patch_dim(&self) -> usize {
        self.spec.d_p
    }

    fn open(&self) -> Result<Box<dyn PatchIter + Send + '_>, PatchStreamError> {
        Ok(Box::new(SynthPatchIter {
            source: self,
            next: 0,
        }))
    }
}

struct SynthPatchIter<'a> {
    source: &'a SynthPatchSource,
    next: usize,
}

impl PatchIter for SynthPatchIter<'_> {
    fn next_grid(&mut self) -> Option<Result<PatchGrid, PatchStreamError>> {
        if self.next >= self.source.spec.n_frames {
            return None;
        }
        let grid = synth_grid(&self.source.spec, &self.source.centers, self.next);
        self.next += 1;
        Some(Ok(grid))
    }
}

/// Generate a full synthetic video plus a query embedded in both spaces.
///
/// Draw order is fixed: cluster centers (frame vector, then M patch rows,
/// per cluster), the query (frame space then patch space), then one derived
/// stream per frame vector and per patch grid. Frame `n` belongs to cluster
/// `n % cluster_centers`.
pub fn gen_embeddings(spec: &SynthSpec) -> Result<(VideoEmbeddingSet, QueryEmbedding), SynthError> {
    spec.validate()?;
    let centers = Arc::new(draw_centers(spec));

    let mut qrng = stream(spec.seed, TAG_QUERY, 0);
    let query = QueryEmbedding {
        frame_space: normalize_f64_to_f32(gaussian_vec(&mut qrng, spec.d_f)),
        patch_space: normalize_f64_to_f32(gaussian_vec(&mut qrng, spec.d_p)),
    };

    let mut frames = Vec::with_capacity(spec.n_frames);
    for n in 0..spec.n_frames {
        let center = &centers.frame[spec.cluster_of(n)];
        let mut rng = stream(spec.seed, TAG_FRAME, n as u64);
        let noise = gaussian_vec(&mut rng, spec.d_f);
        frames.push(FrameEmbedding {
            vector: blend_and_normalize(center, &noise, spec.blend),
            frame_index: n,
        });
    }

    let source = SynthPatchSource {
        spec: *spec,
        centers,
    };
    let video = VideoEmbeddingSet::new(
        format!("synth-{:016x}", spec.seed),
        1.0,
        frames,
        Some(Arc::new(source)),
    )
    .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    Ok((video, query))
}

/// Materialized variant for callers that need an owned in-memory source.
pub fn gen_embeddings_materialized(
    spec: &SynthSpec,
) -> Result<(VideoEmbeddingSet, QueryEmbedding), SynthError> {
    let (video, query) = gen_embeddings(spec)?;
    let grids = vlmp_core::embedding::collect_grids(video.patches.as_ref().unwrap().as_ref())
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let source = Arc::new(
        InMemoryPatchSource::new(grids).map_err(|e| SynthError::InvalidSpec(e.to_string()))?,
    );
    let video = VideoEmbeddingSet::new(
        video.video_id.clone(),
        video.fps,
        video.frames,
        Some(source),
    )
    .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    Ok((video, query))
}

/// Construct an attention dump with a planted concentration pattern:
/// exactly `ceil(top_frac * n)` frames (chosen by the seeded generator)
/// share `mass_frac` of the total mass uniformly, the remaining frames share
/// the rest uniformly, and the total is 1.
pub fn gen_attention_dump(
    n: usize,
    m: usize,
    top_frac: f64,
    mass_frac: f64,
    seed: u64,
) -> Result<AttentionDump, SynthError> {
    if n == 0 || m == 0 {
        return Err(SynthError::InvalidSpec(
            "n and m must be positive".to_string(),
        ));
    }
    if !(top_frac > 0.0 && top_frac < 1.0) {
        return Err(SynthError::InvalidFractions(format!(
            "top_frac must be in (0, 1), got {top_frac}"
        )));
    }
    if !(mass_frac > 0.0 && mass_frac <= 1.0) {
        return Err(SynthError::InvalidFractions(format!(
            "mass_frac must be in (0, 1], got {mass_frac}"
        )));
    }
    let k = (top_frac * n as f64).ceil() as usize;
    let k = k.max(1);
    if k >= n && mass_frac < 1.0 {
        return Err(SynthError::InvalidFractions(format!(
            "top_frac {top_frac} covers all {n} frames but mass_frac is {mass_frac}"
        )));
    }

    // Partial Fisher-Yates: the first k entries of a seeded shuffle.
    let mut rng = SplitMix64::new(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.next_below((n - i) as u64) as usize;
        indices.swap(i, j);
    }
    let mut is_top = vec![false; n];
    for &i in &indices[..k] {
        is_top[i] = true;
    }

    let top_value = mass_frac / (k * m) as f64;
    let rest_value = if k < n {
        (1.0 - mass_frac) / ((n - k) * m) as f64
    } else {
        0.0
    };
    let mut weights = Vec::with_capacity(n * m);
    for &top in &is_top {
        let v = if top { top_value } else { rest_value };
        weights.extend(std::iter::repeat_n(v, m));
    }
    AttentionDump::new(format!("synth-att-{seed:016x}"), n, m, weights)
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))
}

// ---------------------------------------------------------------------------
// Independent merging reference
// ---------------------------------------------------------------------------

fn oracle_cos(a: &[f32], b: &[f32]) -> f64 {
    if a == b {
        return 1.0;
    }
    // Compensated dot product.
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for k in 0..a.len() {
        let term = a[k] as f64 * b[k] as f64;
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn kahan_total(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Straight-line re-derivation of differential merging, sharing no code with
/// the production path. The softmax is evaluated per element as
/// `w_j = 1 / sum_k exp((D_k - D_j) / alpha)`, which is overflow-safe for
/// any temperature without max subtraction, and all reductions are
/// compensated. Returns the pooled vector and weights in f64.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN alpha must fail
pub fn dfm_oracle_f64(
    frame: &PatchGrid,
    keyframe: Option<&PatchGrid>,
    query: &QueryEmbedding,
    cfg: &DfmConfig,
) -> Result<(Vec<f64>, Vec<f64>), SynthError> {
    if !(cfg.alpha > 0.0) {
        return Err(SynthError::InvalidSpec(format!(
            "alpha must be positive, got {}",
            cfg.alpha
        )));
    }
    let m_count = frame.m_patches();
    let dim = frame.patch_dim();
    if query.patch_space.len() != dim {
        return Err(SynthError::DimensionMismatch {
            context: "query patch space",
            left: dim,
            right: query.patch_space.len(),
        });
    }
    if let Some(kf) = keyframe {
        if kf.m_patches() != m_count {
            return Err(SynthError::DimensionMismatch {
                context: "keyframe patch count",
                left: m_count,
                right: kf.m_patches(),
            });
        }
        if kf.patch_dim() != dim {
            return Err(SynthError::DimensionMismatch {
                context: "keyframe patch dimension",
                left: dim,
                right: kf.patch_dim(),
            });
        }
    }

    let mut saliency = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let p = frame.patch(m);
        let relevance = oracle_cos(p, &query.patch_space);
        let redundancy = keyframe.map(|kf| oracle_cos(p, kf.patch(m))).unwrap_or(0.0);
        saliency.push(relevance - cfg.lambda * redundancy);
    }

    let mut weights = Vec::with_capacity(m_count);
    for j in 0..m_count {
        let mut denom_terms = Vec::with_capacity(m_count);
        for k in 0..m_count {
            denom_terms.push(((saliency[k] - saliency[j]) / cfg.alpha).exp());
        }
        let denom = kahan_total(&denom_terms);
        weights.push(if denom.is_finite() { 1.0 / denom } else { 0.0 });
    }

    let weight_sum = kahan_total(&weights);
    let mut pooled = Vec::with_capacity(dim);
    for i in 0..dim {
        let terms: Vec<f64> = (0..m_count)
            .map(|m| weights[m] * frame.patch(m)[i] as f64)
            .collect();
        pooled.push(kahan_total(&terms) / weight_sum);
    }
    Ok((pooled, weights))
}

/// Same reference, packaged as a `MergedToken` for signature parity with the
/// production merge.
pub fn dfm_oracle(
    frame: &PatchGrid,
    keyframe: Option<&PatchGrid>,
    query: &QueryEmbedding,
    cfg: &DfmConfig,
) -> Result<MergedToken, SynthError> {
    let (pooled, weights) = dfm_oracle_f64(frame, keyframe, query, cfg)?;
    Ok(MergedToken {
        vector: pooled.into_iter().map(|v| v as f32).collect(),
        source_frame: frame.frame_index,
        paired_keyframe: keyframe.map(|kf| kf.frame_index),
        weights,
    })
}
