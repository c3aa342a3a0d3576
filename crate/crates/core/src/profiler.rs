//! Redundancy profiling over precomputed attention dumps.
//!
//! The dump holds per-frame, per-patch attention mass already averaged over
//! query tokens, layers and heads by whatever produced it; this module only
//! aggregates. Frame-level analysis ranks frames by received attention and
//! reports the cumulative-mass curve plus similarity among attention
//! neighbors; patch-level analysis designates the top frames as keyframes
//! and relates each remaining patch's attention to its similarity with the
//! position-aligned patch of its paired keyframe.

use std::collections::HashSet;

use crate::embedding::{FrameEmbedding, PatchGrid, Violation, ViolationKind};
use crate::math::{neumaier_sum, unit_cos};
use crate::rng::SplitMix64;

/// Default tolerance on the total attention mass (sums to 1 per video).
pub const DEFAULT_MASS_TOLERANCE: f64 = 1e-3;

/// Percentile resolution of all curves and buckets: 100 one-percent bins.
pub const PERCENTILE_BINS: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("attention mass {total} outside 1 +/- {tolerance}")]
    NormalizationViolation { total: f64, tolerance: f64 },
    #[error("all scores are zero")]
    AllZero,
    #[error("negative score at index {index}: {value}")]
    NegativeScore { index: usize, value: f64 },
    #[error("too few frames: have {n}, need at least {needed}")]
    TooFewFrames { n: usize, needed: usize },
    #[error("k_top {k_top} exceeds frame count {n}")]
    KTopExceedsN { k_top: usize, n: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

/// N x M attention weights, entries in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionDump {
    video_id: String,
    n: usize,
    m: usize,
    weights: Vec<f64>,
}

impl AttentionDump {
    pub fn new(
        video_id: impl Into<String>,
        n: usize,
        m: usize,
        weights: Vec<f64>,
    ) -> Result<Self, ProfileError> {
        if n == 0 || m == 0 {
            return Err(ProfileError::ShapeMismatch(
                "n and m must be positive".to_string(),
            ));
        }
        if weights.len() != n * m {
            return Err(ProfileError::ShapeMismatch(format!(
                "expected {} weights for {}x{}, got {}",
                n * m,
                n,
                m,
                weights.len()
            )));
        }
        if let Some((i, &v)) = weights
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(ProfileError::ShapeMismatch(format!(
                "entry {i} out of [0, 1]: {v}"
            )));
        }
        Ok(Self {
            video_id: video_id.into(),
            n,
            m,
            weights,
        })
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn n_frames(&self) -> usize {
        self.n
    }

    pub fn m_patches(&self) -> usize {
        self.m
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn at(&self, frame: usize, patch: usize) -> f64 {
        self.weights[frame * self.m + patch]
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.weights[frame * self.m..(frame + 1) * self.m]
    }

    pub fn total_mass(&self) -> f64 {
        neumaier_sum(self.weights.iter().copied())
    }

    /// Violations as data: entry range plus total-mass tolerance.
    pub fn violations(&self, mass_tolerance: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, &v) in self.weights.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                out.push(Violation {
                    kind: ViolationKind::EntryOutOfRange,
                    field: "attention.weights".to_string(),
                    index: Some(i),
                    observed: format!("{v}"),
                });
            }
        }
        let total = self.total_mass();
        if (total - 1.0).abs() > mass_tolerance {
            out.push(Violation {
                kind: ViolationKind::MassViolation,
                field: "attention.total_mass".to_string(),
                index: None,
                observed: format!("{total}"),
            });
        }
        out
    }
}

/// Frame-level profile: everything needed to redraw the cumulative-attention
/// figure for one video.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AttentionProfile {
    pub frame_scores: Vec<f64>,
    /// Cumulative mass of the top p% of frames, p = 1..=100.
    pub cumulative_curve: Vec<f64>,
    /// Mean cosine to attention-rank neighbors, bucketed by rank percentile;
    /// buckets without frames are None.
    pub neighbor_similarity: Vec<Option<f64>>,
    pub random_baseline: f64,
}

/// Per-frame received attention: row sums of the dump. When a tolerance is
/// given the total mass is checked first; pass `None` to downgrade that
/// check (the caller is expected to have warned).
pub fn frame_attention(
    dump: &AttentionDump,
    mass_tolerance: Option<f64>,
) -> Result<Vec<f64>, ProfileError> {
    if let Some(tol) = mass_tolerance {
        let total = dump.total_mass();
        if (total - 1.0).abs() > tol {
            return Err(ProfileError::NormalizationViolation {
                total,
                tolerance: tol,
            });
        }
    }
    Ok((0..dump.n_frames())
        .map(|i| neumaier_sum(dump.row(i).iter().copied()))
        .collect())
}

/// Cumulative-mass curve at one-percent resolution.
///
/// Scores are ranked descending (ties by ascending index); the value at
/// percentile p is the normalized mass of the top `p/100 * N` scores, with
/// the fractional score linearly interpolated so the curve is exact for any
/// N. Rescaling every score by a positive constant leaves the curve
/// unchanged because normalization happens inside.
pub fn cumulative_curve(scores: &[f64]) -> Result<Vec<f64>, ProfileError> {
    if let Some((i, &v)) = scores
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(ProfileError::NegativeScore { index: i, value: v });
    }
    let ranked = rank_descending(scores);
    let sorted: Vec<f64> = ranked.iter().map(|&i| scores[i]).collect();
    let total = neumaier_sum(sorted.iter().copied());
    if total <= 0.0 {
        return Err(ProfileError::AllZero);
    }
    let n = sorted.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0f64);
    let mut acc = 0.0f64;
    for &s in &sorted {
        acc += s;
        prefix.push(acc);
    }
    let mut curve = Vec::with_capacity(PERCENTILE_BINS);
    for p in 1..=PERCENTILE_BINS {
        let cut = p as f64 * n as f64 / 100.0;
        let k = (cut.floor() as usize).min(n);
        let frac = cut - k as f64;
        let mass = if k == n {
            prefix[n]
        } else {
            prefix[k] + frac * sorted[k]
        };
        curve.push(mass / total);
    }
    Ok(curve)
}

/// Indices sorted by score descending, ties by ascending index.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx
}

/// Mean cosine of each frame to its `window` nearest neighbors in the given
/// attention ranking, averaged per rank-percentile bucket. `frames` must
/// already be in rank order (most attended first).
pub fn neighbor_similarity(
    frames_ranked: &[FrameEmbedding],
    window: usize,
) -> Result<Vec<Option<f64>>, ProfileError> {
    let n = frames_ranked.len();
    if window == 0 {
        return Err(ProfileError::InvalidArgument("window must be at least 1"));
    }
    if n < window + 1 {
        return Err(ProfileError::TooFewFrames {
            n,
            needed: window + 1,
        });
    }
    let mut bucket_sum = vec![0.0f64; PERCENTILE_BINS];
    let mut bucket_count = vec![0usize; PERCENTILE_BINS];
    for r in 0..n {
        // Candidate neighbors ordered by rank distance, lower rank first on
        // ties, so the choice is deterministic at the edges.
        let mut mean = 0.0f64;
        let mut taken = 0usize;
        let mut dist = 1usize;
        while taken < window {
            let below = r.checked_sub(dist);
            let above = if r + dist < n { Some(r + dist) } else { None };
            for neighbor in [below, above].into_iter().flatten() {
                if taken == window {
                    break;
                }
                mean += unit_cos(&frames_ranked[r].vector, &frames_ranked[neighbor].vector);
                taken += 1;
            }
            dist += 1;
        }
        let bucket = r * PERCENTILE_BINS / n;
        bucket_sum[bucket] += mean / window as f64;
        bucket_count[bucket] += 1;
    }
    Ok(bucket_sum
        .into_iter()
        .zip(bucket_count)
        .map(|(s, c)| if c > 0 { Some(s / c as f64) } else { None })
        .collect())
}

/// Mean cosine over `n_pairs` distinct frame pairs drawn by the seeded
/// generator. Pairs are unordered and never repeat within one call.
pub fn random_pair_baseline(
    frames: &[FrameEmbedding],
    n_pairs: usize,
    seed: u64,
) -> Result<f64, ProfileError> {
    let n = frames.len();
    if n < 2 {
        return Err(ProfileError::TooFewFrames { n, needed: 2 });
    }
    if n_pairs == 0 {
        return Err(ProfileError::InvalidArgument("n_pairs must be at least 1"));
    }
    let max_pairs = n * (n - 1) / 2;
    if n_pairs > max_pairs {
        return Err(ProfileError::TooFewFrames { n, needed: n_pairs });
    }
    let mut rng = SplitMix64::new(seed);
    let mut seen = HashSet::with_capacity(n_pairs);
    let mut sum = 0.0f64;
    while seen.len() < n_pairs {
        let i = rng.next_below(n as u64) as usize;
        let j = rng.next_below(n as u64) as usize;
        if i == j {
            continue;
        }
        let pair = (i.min(j), i.max(j));
        if seen.insert(pair) {
            sum += unit_cos(&frames[pair.0].vector, &frames[pair.1].vector);
        }
    }
    Ok(sum / n_pairs as f64)
}

/// Assemble the full frame-level profile.
pub fn frame_profile(
    dump: &AttentionDump,
    frames: &[FrameEmbedding],
    window: usize,
    n_pairs: usize,
    seed: u64,
    mass_tolerance: Option<f64>,
) -> Result<AttentionProfile, ProfileError> {
    if frames.len() != dump.n_frames() {
        return Err(ProfileError::ShapeMismatch(format!(
            "dump has {} frames, embeddings have {}",
            dump.n_frames(),
            frames.len()
        )));
    }
    let frame_scores = frame_attention(dump, mass_tolerance)?;
    let curve = cumulative_curve(&frame_scores)?;
    let ranking = rank_descending(&frame_scores);
    let ranked_frames: Vec<FrameEmbedding> = ranking.iter().map(|&i| frames[i].clone()).collect();
    let neighbor = neighbor_similarity(&ranked_frames, window)?;
    let baseline = random_pair_baseline(frames, n_pairs, seed)?;
    Ok(AttentionProfile {
        frame_scores,
        cumulative_curve: curve,
        neighbor_similarity: neighbor,
        random_baseline: baseline,
    })
}

/// Patch-level profile over the non-keyframe patches.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PatchProfile {
    /// True when every frame is a keyframe and there is nothing to profile.
    pub empty: bool,
    pub keyframe_indices: Vec<usize>,
    pub n_non_keyframe_patches: usize,
    pub cumulative_curve: Vec<f64>,
    pub similarity_buckets: Vec<Option<f64>>,
}

/// Designate the `k_top` most-attended frames as keyframes, then profile
/// every non-keyframe patch: attention normalized over all non-keyframe
/// patches, and cosine to the same-position patch of the nearest preceding
/// keyframe (the first keyframe for frames before any keyframe).
pub fn patch_profile(
    dump: &AttentionDump,
    grids: &[PatchGrid],
    k_top: usize,
) -> Result<PatchProfile, ProfileError> {
    let n = dump.n_frames();
    if k_top == 0 {
        return Err(ProfileError::InvalidArgument("k_top must be at least 1"));
    }
    if k_top > n {
        return Err(ProfileError::KTopExceedsN { k_top, n });
    }
    if grids.len() != n {
        return Err(ProfileError::ShapeMismatch(format!(
            "dump has {} frames, {} grids supplied",
            n,
            grids.len()
        )));
    }
    if grids.iter().any(|g| g.m_patches() != dump.m_patches()) {
        return Err(ProfileError::ShapeMismatch(
            "grid patch count differs from dump".to_string(),
        ));
    }

    let frame_scores = frame_attention(dump, None)?;
    let mut keyframes: Vec<usize> = rank_descending(&frame_scores)[..k_top].to_vec();
    keyframes.sort_unstable();

    if k_top == n {
        return Ok(PatchProfile {
            empty: true,
            keyframe_indices: keyframes,
            n_non_keyframe_patches: 0,
            cumulative_curve: Vec::new(),
            similarity_buckets: Vec::new(),
        });
    }

    let is_keyframe: Vec<bool> = {
        let mut flags = vec![false; n];
        for &k in &keyframes {
            flags[k] = true;
        }
        flags
    };

    // Paired keyframe per non-keyframe: greatest keyframe below, else the
    // first keyframe overall.
    let first_keyframe = keyframes[0];
    let mut attention = Vec::new();
    let mut similarity = Vec::new();
    let mut last_keyframe: Option<usize> = None;
    for frame in 0..n {
        if is_keyframe[frame] {
            last_keyframe = Some(frame);
            continue;
        }
        let paired = last_keyframe.unwrap_or(first_keyframe);
        for patch in 0..dump.m_patches() {
            attention.push(dump.at(frame, patch));
            similarity.push(unit_cos(
                grids[frame].patch(patch),
                grids[paired].patch(patch),
            ));
        }
    }

    let curve = cumulative_curve(&attention)?;
    let ranking = rank_descending(&attention);
    let total = attention.len();
    let mut bucket_sum = vec![0.0f64; PERCENTILE_BINS];
    let mut bucket_count = vec![0usize; PERCENTILE_BINS];
    for (rank, &idx) in ranking.iter().enumerate() {
        let bucket = rank * PERCENTILE_BINS / total;
        bucket_sum[bucket] += similarity[idx];
        bucket_count[bucket] += 1;
    }
    let buckets = bucket_sum
        .into_iter()
        .zip(bucket_count)
        .map(|(s, c)| if c > 0 { Some(s / c as f64) } else { None })
        .collect();

    Ok(PatchProfile {
        empty: false,
        keyframe_indices: keyframes,
        n_non_keyframe_patches: total,
        cumulative_curve: curve,
        similarity_buckets: buckets,
    })
}
