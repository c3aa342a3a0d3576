//! Differential keyframe selection.
//!
//! Frames are ranked by query relevance (cosine in frame space) and admitted
//! greedily: a frame joins the keyframe set only while the set is below
//! capacity and the frame's maximum cosine to the already-selected frames
//! stays strictly below the similarity threshold `tau`. The scan touches each
//! frame once against at most `k_max` selected embeddings, so the cost is
//! O(max(N*K, N log N)) and no all-pairs similarity matrix is ever built.

use std::collections::BTreeMap;

use crate::embedding::{FrameEmbedding, QueryEmbedding, VideoEmbeddingSet};
use crate::math::unit_cos;

/// Selection parameters. `tau = 1.0` is legal and excludes only exact
/// duplicates (cosine exactly 1 fails the strict `<` gate); `tau <= -1`
/// would block every addition and is rejected up front.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DksConfig {
    pub tau: f64,
    pub k_max: usize,
}

impl Default for DksConfig {
    fn default() -> Self {
        Self {
            tau: 0.85,
            k_max: 32,
        }
    }
}

impl DksConfig {
    pub fn validate(&self) -> Result<(), DksError> {
        if !(self.tau > -1.0 && self.tau <= 1.0) {
            return Err(DksError::InvalidConfig(format!(
                "tau must be in (-1, 1], got {}",
                self.tau
            )));
        }
        if self.k_max == 0 {
            return Err(DksError::InvalidConfig(
                "k_max must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DksError {
    #[error("dimension mismatch: frame has {frame_dim}, query frame space has {query_dim}")]
    DimensionMismatch { frame_dim: usize, query_dim: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Output of the greedy selection. `keyframe_indices` is sorted ascending;
/// `selection_order` lists the same indices in the order they were admitted,
/// so its head is always a frame of globally maximal relevance. `relevance`
/// records the query-relevance score of each selected frame (empty for
/// query-free sampling modes).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KeyframeSelection {
    pub video_id: String,
    pub tau: f64,
    pub k_max: usize,
    pub keyframe_indices: Vec<usize>,
    pub selection_order: Vec<usize>,
    pub relevance: BTreeMap<usize, f64>,
}

impl KeyframeSelection {
    pub fn len(&self) -> usize {
        self.keyframe_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframe_indices.is_empty()
    }

    pub fn contains(&self, frame_index: usize) -> bool {
        self.keyframe_indices.binary_search(&frame_index).is_ok()
    }
}

/// Query relevance of one frame: cosine between unit vectors, i.e. their dot
/// product accumulated in f64.
pub fn frame_relevance(frame: &FrameEmbedding, query: &QueryEmbedding) -> Result<f64, DksError> {
    if frame.vector.len() != query.frame_space.len() {
        return Err(DksError::DimensionMismatch {
            frame_dim: frame.vector.len(),
            query_dim: query.frame_space.len(),
        });
    }
    Ok(unit_cos(&frame.vector, &query.frame_space))
}

/// Temporal redundancy of a frame against a context set: the maximum cosine
/// to any context member. An empty context scores -1, the floor of the
/// cosine range, so any valid `tau` admits the frame.
pub fn frame_redundancy(
    frame: &FrameEmbedding,
    context: &[&FrameEmbedding],
) -> Result<f64, DksError> {
    let mut max_sim = -1.0f64;
    for other in context {
        if other.vector.len() != frame.vector.len() {
            return Err(DksError::DimensionMismatch {
                frame_dim: frame.vector.len(),
                query_dim: other.vector.len(),
            });
        }
        let sim = unit_cos(&frame.vector, &other.vector);
        if sim > max_sim {
            max_sim = sim;
        }
    }
    Ok(max_sim)
}

/// Greedy threshold-gated selection.
///
/// Frames are sorted by relevance descending (ties broken by ascending frame
/// index, so the result is deterministic), the most relevant frame seeds the
/// set, and the scan admits each remaining frame whose redundancy against
/// the current set stays below `tau` while capacity remains.
pub fn select_keyframes(
    video: &VideoEmbeddingSet,
    query: &QueryEmbedding,
    cfg: &DksConfig,
) -> Result<KeyframeSelection, DksError> {
    cfg.validate()?;
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(video.n_frames());
    for frame in &video.frames {
        scored.push((frame.frame_index, frame_relevance(frame, query)?));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let seed_index = scored[0].0;
    let mut selection_order = vec![seed_index];
    let mut selected_frames: Vec<&FrameEmbedding> = vec![&video.frames[seed_index]];
    let mut relevance = BTreeMap::new();
    relevance.insert(seed_index, scored[0].1);

    for &(index, rel) in &scored {
        if index == seed_index {
            continue;
        }
        if selection_order.len() >= cfg.k_max {
            break;
        }
        let frame = &video.frames[index];
        if frame_redundancy(frame, &selected_frames)? < cfg.tau {
            selection_order.push(index);
            selected_frames.push(frame);
            relevance.insert(index, rel);
        }
    }

    let mut keyframe_indices = selection_order.clone();
    keyframe_indices.sort_unstable();
    Ok(KeyframeSelection {
        video_id: video.video_id.clone(),
        tau: cfg.tau,
        k_max: cfg.k_max,
        keyframe_indices,
        selection_order,
        relevance,
    })
}

/// Reference implementation for differential testing: same selection
/// semantics, deliberately naive. Relevance ordering is found by repeated
/// full scans and every redundancy check recomputes all cosines from
/// scratch; nothing is shared with [`select_keyframes`].
pub fn select_keyframes_oracle(
    video: &VideoEmbeddingSet,
    query: &QueryEmbedding,
    cfg: &DksConfig,
) -> Result<KeyframeSelection, DksError> {
    cfg.validate()?;

    fn naive_cos(a: &[f32], b: &[f32]) -> f64 {
        // Self-similarity of bit-identical vectors is exactly 1, matching
        // the documented cosine contract.
        if a == b {
            return 1.0;
        }
        let mut acc = 0.0f64;
        for i in 0..a.len() {
            acc += a[i] as f64 * b[i] as f64;
        }
        acc
    }

    let n = video.n_frames();
    let dim = video.frame_dim();
    if query.frame_space.len() != dim {
        return Err(DksError::DimensionMismatch {
            frame_dim: dim,
            query_dim: query.frame_space.len(),
        });
    }
    let rel: Vec<f64> = video
        .frames
        .iter()
        .map(|f| naive_cos(&f.vector, &query.frame_space))
        .collect();

    // Relevance ranking by repeated argmax scans (lowest index wins ties).
    let mut ranked: Vec<usize> = Vec::with_capacity(n);
    let mut used = vec![false; n];
    for _ in 0..n {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if used[i] {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(b) if rel[i] > rel[b] => best = Some(i),
                _ => {}
            }
        }
        let b = best.unwrap();
        used[b] = true;
        ranked.push(b);
    }

    let mut selected: Vec<usize> = vec![ranked[0]];
    for &candidate in &ranked {
        if selected.contains(&candidate) {
            continue;
        }
        if selected.len() >= cfg.k_max {
            break;
        }
        let mut max_sim = -1.0f64;
        for &s in &selected {
            let sim = naive_cos(&video.frames[candidate].vector, &video.frames[s].vector);
            if sim > max_sim {
                max_sim = sim;
            }
        }
        if max_sim < cfg.tau {
            selected.push(candidate);
        }
    }

    let mut keyframe_indices = selected.clone();
    keyframe_indices.sort_unstable();
    let relevance = selected.iter().map(|&i| (i, rel[i])).collect();
    Ok(KeyframeSelection {
        video_id: video.video_id.clone(),
        tau: cfg.tau,
        k_max: cfg.k_max,
        keyframe_indices,
        selection_order: selected,
        relevance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(vectors: Vec<Vec<f32>>) -> VideoEmbeddingSet {
        let frames = vectors
            .into_iter()
            .enumerate()
            .map(|(i, v)| FrameEmbedding {
                vector: v,
                frame_index: i,
            })
            .collect();
        VideoEmbeddingSet::new("test", 1.0, frames, None).unwrap()
    }

    fn query(frame_space: Vec<f32>) -> QueryEmbedding {
        QueryEmbedding {
            frame_space,
            patch_space: vec![1.0],
        }
    }

    #[test]
    fn relevance_is_dot_product() {
        let f = FrameEmbedding {
            vector: vec![1.0, 0.0],
            frame_index: 0,
        };
        let q = query(vec![1.0, 0.0]);
        assert_eq!(frame_relevance(&f, &q).unwrap(), 1.0);

        let q = query(vec![0.0, 1.0]);
        assert_eq!(frame_relevance(&f, &q).unwrap(), 0.0);

        let s = std::f32::consts::FRAC_1_SQRT_2;
        let q = query(vec![s, s]);
        assert!((frame_relevance(&f, &q).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-7);
    }

    #[test]
    fn relevance_rejects_dimension_mismatch() {
        let f = FrameEmbedding {
            vector: vec![1.0, 0.0],
            frame_index: 0,
        };
        let q = query(vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            frame_relevance(&f, &q),
            Err(DksError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn redundancy_examples() {
        let f = FrameEmbedding {
            vector: vec![1.0, 0.0],
            frame_index: 0,
        };
        assert_eq!(frame_redundancy(&f, &[&f]).unwrap(), 1.0);
        assert_eq!(frame_redundancy(&f, &[]).unwrap(), -1.0);

        let s = std::f32::consts::FRAC_1_SQRT_2;
        let a = FrameEmbedding {
            vector: vec![0.0, 1.0],
            frame_index: 1,
        };
        let b = FrameEmbedding {
            vector: vec![s, s],
            frame_index: 2,
        };
        let r = frame_redundancy(&f, &[&a, &b]).unwrap();
        assert!((r - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-7);
    }

    #[test]
    fn identical_frames_collapse_to_single_keyframe() {
        let v = video(vec![vec![1.0, 0.0]; 8]);
        let q = query(vec![1.0, 0.0]);
        for tau in [0.35, 0.85, 1.0] {
            let sel = select_keyframes(&v, &q, &DksConfig { tau, k_max: 8 }).unwrap();
            assert_eq!(sel.keyframe_indices, vec![0], "tau={tau}");
        }
    }

    #[test]
    fn hand_traced_selection() {
        // Seed frame 0 (relevance 1.0); frame 1 rejected (cos to frame 0 is
        // 0.995 >= tau), frame 2 accepted (0.6 < tau).
        let v = video(vec![vec![1.0, 0.0], vec![0.995, 0.0999], vec![0.6, 0.8]]);
        let q = query(vec![1.0, 0.0]);
        let sel = select_keyframes(&v, &q, &DksConfig { tau: 0.9, k_max: 4 }).unwrap();
        assert_eq!(sel.selection_order, vec![0, 2]);
        assert_eq!(sel.keyframe_indices, vec![0, 2]);
    }

    #[test]
    fn k_one_returns_argmax_lowest_index_on_ties() {
        let v = video(vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0]]);
        let q = query(vec![1.0, 0.0]);
        let sel = select_keyframes(
            &v,
            &q,
            &DksConfig {
                tau: 0.85,
                k_max: 1,
            },
        )
        .unwrap();
        assert_eq!(sel.selection_order, vec![1]);
    }

    #[test]
    fn oracle_agrees_on_hand_cases() {
        let v = video(vec![vec![1.0, 0.0], vec![0.995, 0.0999], vec![0.6, 0.8]]);
        let q = query(vec![1.0, 0.0]);
        let cfg = DksConfig { tau: 0.9, k_max: 4 };
        assert_eq!(
            select_keyframes(&v, &q, &cfg).unwrap(),
            select_keyframes_oracle(&v, &q, &cfg).unwrap()
        );

        let single = video(vec![vec![0.6, 0.8]]);
        let sel = select_keyframes_oracle(&single, &q, &cfg).unwrap();
        assert_eq!(sel.keyframe_indices, vec![0]);
    }

    #[test]
    fn invalid_tau_rejected() {
        let cfg = DksConfig {
            tau: -1.0,
            k_max: 4,
        };
        assert!(matches!(cfg.validate(), Err(DksError::InvalidConfig(_))));
        let cfg = DksConfig { tau: 1.1, k_max: 4 };
        assert!(cfg.validate().is_err());
        let cfg = DksConfig { tau: 1.0, k_max: 0 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn tau_one_excludes_only_exact_duplicates() {
        let v = video(vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.995, 0.0999]]);
        let q = query(vec![1.0, 0.0]);
        let sel = select_keyframes(&v, &q, &DksConfig { tau: 1.0, k_max: 8 }).unwrap();
        // The duplicate of frame 0 is excluded; the near-duplicate survives.
        assert_eq!(sel.keyframe_indices, vec![0, 2]);
    }

    #[test]
    fn selection_invariant_to_prenormalization_rescaling() {
        // A power-of-two rescale before normalization reproduces the unit
        // vector bit for bit, so relevance ordering and the selected set
        // cannot move.
        let v = video(vec![vec![0.6, 0.8], vec![1.0, 0.0], vec![0.0, 1.0]]);
        let base = vec![0.28f32, 0.96];
        let scaled: Vec<f32> = base.iter().map(|x| x * 4.0).collect();
        let normalize = |v: &[f32]| {
            let n = (v.iter().map(|&x| x as f64 * x as f64).sum::<f64>()).sqrt();
            v.iter()
                .map(|&x| (x as f64 / n) as f32)
                .collect::<Vec<f32>>()
        };
        let qa = query(normalize(&base));
        let qb = query(normalize(&scaled));
        assert_eq!(qa.frame_space, qb.frame_space);
        let cfg = DksConfig { tau: 0.9, k_max: 3 };
        assert_eq!(
            select_keyframes(&v, &qa, &cfg).unwrap(),
            select_keyframes(&v, &qb, &cfg).unwrap()
        );
    }

    #[test]
    fn selection_serializes_to_stable_json() {
        let v = video(vec![vec![1.0, 0.0], vec![0.6, 0.8]]);
        let q = query(vec![1.0, 0.0]);
        let sel = select_keyframes(&v, &q, &DksConfig::default()).unwrap();
        let json = serde_json::to_string(&sel).unwrap();
        let back: KeyframeSelection = serde_json::from_str(&json).unwrap();
        assert_eq!(back, sel);
        assert!(json.contains("\"keyframe_indices\""));
    }
}
