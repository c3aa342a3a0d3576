//! Typed containers for precomputed video embeddings.
//!
//! A video arrives as `N` unit-norm frame embeddings (dimension `d_f`) plus,
//! optionally, `N` patch grids of `M` unit-norm patch vectors (dimension
//! `d_p`). Queries carry one vector per space because the frame and patch
//! encoders are independent and generally disagree on dimension.
//!
//! All containers are immutable after construction. Patch grids may be
//! lazily streamed: a [`PatchSource`] hands out independent in-order
//! iterators, so concurrent consumers each open their own.

use std::sync::Arc;

use crate::math::l2_norm;

/// Unit vectors must have an L2 norm within this distance of 1. The loader
/// rejects rather than renormalizes so embedding provenance is preserved;
/// explicit renormalization is an opt-in ingestion flag.
pub const NORM_TOLERANCE: f64 = 1e-4;

/// One frame-level embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEmbedding {
    pub vector: Vec<f32>,
    pub frame_index: usize,
}

/// The `M` patch embeddings of one frame, stored row-major.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PatchGrid {
    pub frame_index: usize,
    m_patches: usize,
    patch_dim: usize,
    data: Vec<f32>,
}

impl PatchGrid {
    pub fn new(
        frame_index: usize,
        m_patches: usize,
        patch_dim: usize,
        data: Vec<f32>,
    ) -> Result<Self, EmbeddingError> {
        if m_patches == 0 || patch_dim == 0 {
            return Err(EmbeddingError::EmptyContainer);
        }
        if data.len() != m_patches * patch_dim {
            return Err(EmbeddingError::DimensionMismatch {
                context: "patch grid payload",
                expected: m_patches * patch_dim,
                found: data.len(),
            });
        }
        Ok(Self {
            frame_index,
            m_patches,
            patch_dim,
            data,
        })
    }

    pub fn m_patches(&self) -> usize {
        self.m_patches
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_dim
    }

    pub fn patch(&self, m: usize) -> &[f32] {
        &self.data[m * self.patch_dim..(m + 1) * self.patch_dim]
    }

    pub fn patches(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.patch_dim)
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }

    /// Same grid under a new frame index (used when splicing renumbers
    /// frames).
    pub fn with_frame_index(mut self, frame_index: usize) -> Self {
        self.frame_index = frame_index;
        self
    }
}

/// Query embedded into both spaces: `frame_space` scores frames (dimension
/// `d_f`), `patch_space` scores patches (dimension `d_p`).
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedding {
    pub frame_space: Vec<f32>,
    pub patch_space: Vec<f32>,
}

/// A whole video: frame embeddings in memory, patch grids behind a handle.
#[derive(Clone)]
pub struct VideoEmbeddingSet {
    pub video_id: String,
    pub fps: f64,
    pub frames: Vec<FrameEmbedding>,
    pub patches: Option<Arc<dyn PatchSource>>,
}

impl std::fmt::Debug for VideoEmbeddingSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VideoEmbeddingSet")
            .field("video_id", &self.video_id)
            .field("fps", &self.fps)
            .field("n_frames", &self.frames.len())
            .field("has_patches", &self.patches.is_some())
            .finish()
    }
}

impl VideoEmbeddingSet {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN fps must fail
    pub fn new(
        video_id: impl Into<String>,
        fps: f64,
        frames: Vec<FrameEmbedding>,
        patches: Option<Arc<dyn PatchSource>>,
    ) -> Result<Self, EmbeddingError> {
        if frames.is_empty() {
            return Err(EmbeddingError::EmptyContainer);
        }
        if !(fps > 0.0) {
            return Err(EmbeddingError::FpsNonPositive(fps));
        }
        let dim = frames[0].vector.len();
        for (i, frame) in frames.iter().enumerate() {
            if frame.frame_index != i {
                return Err(EmbeddingError::IndexGap {
                    expected: i,
                    found: frame.frame_index,
                });
            }
            if frame.vector.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    context: "frame embedding",
                    expected: dim,
                    found: frame.vector.len(),
                });
            }
        }
        if let Some(src) = &patches {
            if src.n_frames() != frames.len() {
                return Err(EmbeddingError::DimensionMismatch {
                    context: "patch source frame count",
                    expected: frames.len(),
                    found: src.n_frames(),
                });
            }
        }
        Ok(Self {
            video_id: video_id.into(),
            fps,
            frames,
            patches,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn frame_dim(&self) -> usize {
        self.frames[0].vector.len()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("container holds no data")]
    EmptyContainer,
    #[error("frame indices must be contiguous from 0: expected {expected}, found {found}")]
    IndexGap { expected: usize, found: usize },
    #[error("{context}: expected {expected} elements, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("fps must be positive, got {0}")]
    FpsNonPositive(f64),
}

// ---------------------------------------------------------------------------
// Patch streaming
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum PatchStreamError {
    #[error("i/o failure reading patch stream: {0}")]
    Io(String),
    #[error("patch stream invalid at frame {frame}: {detail}")]
    Invalid { frame: usize, detail: String },
}

/// Handle yielding patch grids for frame indices `0..n_frames` in order.
/// `open` returns an independent iterator each call; a single iterator is
/// single-consumer and strictly sequential.
pub trait PatchSource: Send + Sync {
    fn n_frames(&self) -> usize;
    fn m_patches(&self) -> usize;
    fn patch_dim(&self) -> usize;
    fn open(&self) -> Result<Box<dyn PatchIter + Send + '_>, PatchStreamError>;
}

pub trait PatchIter: Send {
    fn next_grid(&mut self) -> Option<Result<PatchGrid, PatchStreamError>>;
}

/// Fully materialized patch grids.
#[derive(Debug)]
pub struct InMemoryPatchSource {
    grids: Vec<PatchGrid>,
}

impl InMemoryPatchSource {
    pub fn new(grids: Vec<PatchGrid>) -> Result<Self, EmbeddingError> {
        if grids.is_empty() {
            return Err(EmbeddingError::EmptyContainer);
        }
        let m = grids[0].m_patches();
        let d = grids[0].patch_dim();
        for (i, g) in grids.iter().enumerate() {
            if g.frame_index != i {
                return Err(EmbeddingError::IndexGap {
                    expected: i,
                    found: g.frame_index,
                });
            }
            if g.m_patches() != m {
                return Err(EmbeddingError::DimensionMismatch {
                    context: "patch count per frame",
                    expected: m,
                    found: g.m_patches(),
                });
            }
            if g.patch_dim() != d {
                return Err(EmbeddingError::DimensionMismatch {
                    context: "patch dimension",
                    expected: d,
                    found: g.patch_dim(),
                });
            }
        }
        Ok(Self { grids })
    }

    pub fn grids(&self) -> &[PatchGrid] {
        &self.grids
    }
}

impl PatchSource for InMemoryPatchSource {
    fn n_frames(&self) -> usize {
        self.grids.len()
    }

    fn m_patches(&self) -> usize {
        self.grids[0].m_patches()
    }

    fn patch_dim(&self) -> usize {
        self.grids[0].patch_dim()
    }

    fn open(&self) -> Result<Box<dyn PatchIter + Send + '_>, PatchStreamError> {
        Ok(Box::new(InMemoryPatchIter {
            grids: &self.grids,
            next: 0,
        }))
    }
}

struct InMemoryPatchIter<'a> {
    grids: &'a [PatchGrid],
    next: usize,
}

impl PatchIter for InMemoryPatchIter<'_> {
    fn next_grid(&mut self) -> Option<Result<PatchGrid, PatchStreamError>> {
        let g = self.grids.get(self.next)?.clone();
        self.next += 1;
        Some(Ok(g))
    }
}

/// Collect every grid of a source into memory. Convenience for desk-scale
/// analyses; the distillation pipeline streams instead.
pub fn collect_grids(source: &dyn PatchSource) -> Result<Vec<PatchGrid>, PatchStreamError> {
    let mut it = source.open()?;
    let mut grids = Vec::with_capacity(source.n_frames());
    while let Some(g) = it.next_grid() {
        grids.push(g?);
    }
    Ok(grids)
}

// ---------------------------------------------------------------------------
// Validation (violations are data, not errors)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub enum ViolationKind {
    NormViolation,
    IndexGap,
    DimensionMismatch,
    EntryOutOfRange,
    MassViolation,
    NonFinite,
    StreamError,
}

/// One invariant failure, reported with enough context to locate it.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub field: String,
    pub index: Option<usize>,
    pub observed: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.index {
            Some(i) => write!(
                f,
                "{:?} in {} at index {}: {}",
                self.kind, self.field, i, self.observed
            ),
            None => write!(f, "{:?} in {}: {}", self.kind, self.field, self.observed),
        }
    }
}

fn check_unit_norm(v: &[f32], field: &str, index: usize, out: &mut Vec<Violation>) {
    if v.iter().any(|x| !x.is_finite()) {
        out.push(Violation {
            kind: ViolationKind::NonFinite,
            field: field.to_string(),
            index: Some(index),
            observed: "non-finite component".to_string(),
        });
        return;
    }
    let norm = l2_norm(v);
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        out.push(Violation {
            kind: ViolationKind::NormViolation,
            field: field.to_string(),
            index: Some(index),
            observed: format!("norm {norm}"),
        });
    }
}

impl FrameEmbedding {
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        check_unit_norm(&self.vector, "frame.vector", self.frame_index, &mut out);
        out
    }
}

impl PatchGrid {
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (m, p) in self.patches().enumerate() {
            check_unit_norm(
                p,
                &format!("patch_grid[{}].patch", self.frame_index),
                m,
                &mut out,
            );
        }
        out
    }
}

impl QueryEmbedding {
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        check_unit_norm(&self.frame_space, "query.frame_space", 0, &mut out);
        check_unit_norm(&self.patch_space, "query.patch_space", 1, &mut out);
        out
    }
}

impl VideoEmbeddingSet {
    /// Full validation sweep: frame norms, index contiguity, and (when a
    /// patch source is attached) one streaming pass over every grid. Never
    /// aborts; malformed data becomes violation entries.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, frame) in self.frames.iter().enumerate() {
            if frame.frame_index != i {
                out.push(Violation {
                    kind: ViolationKind::IndexGap,
                    field: "frames".to_string(),
                    index: Some(i),
                    observed: format!("frame_index {}", frame.frame_index),
                });
            }
            check_unit_norm(&frame.vector, "frame.vector", i, &mut out);
        }
        if let Some(src) = &self.patches {
            match src.open() {
                Ok(mut it) => {
                    let mut count = 0usize;
                    while let Some(next) = it.next_grid() {
                        match next {
                            Ok(grid) => {
                                out.extend(grid.violations());
                                count += 1;
                            }
                            Err(e) => {
                                out.push(Violation {
                                    kind: ViolationKind::StreamError,
                                    field: "patches".to_string(),
                                    index: Some(count),
                                    observed: e.to_string(),
                                });
                                break;
                            }
                        }
                    }
                    if count != self.frames.len()
                        && out.iter().all(|v| v.kind != ViolationKind::StreamError)
                    {
                        out.push(Violation {
                            kind: ViolationKind::DimensionMismatch,
                            field: "patches".to_string(),
                            index: None,
                            observed: format!("{} grids for {} frames", count, self.frames.len()),
                        });
                    }
                }
                Err(e) => out.push(Violation {
                    kind: ViolationKind::StreamError,
                    field: "patches".to_string(),
                    index: None,
                    observed: e.to_string(),
                }),
            }
        }
        out
    }
}

/// Renormalize a vector to unit L2 norm in place. Zero and non-finite
/// vectors are left untouched (they stay invalid; cosine has no meaning for
/// them and silent repair would hide upstream corruption).
pub fn renormalize(v: &mut [f32]) {
    let norm = l2_norm(v);
    if norm > 0.0 && norm.is_finite() {
        for x in v.iter_mut() {
            *x = (*x as f64 / norm) as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: Vec<f32>) -> Vec<f32> {
        let mut v = v;
        renormalize(&mut v);
        v
    }

    #[test]
    fn unit_norm_set_has_no_violations() {
        let frames = vec![
            FrameEmbedding {
                vector: vec![1.0, 0.0, 0.0],
                frame_index: 0,
            },
            FrameEmbedding {
                vector: vec![0.0, 1.0, 0.0],
                frame_index: 1,
            },
        ];
        let v = VideoEmbeddingSet::new("v", 1.0, frames, None).unwrap();
        assert!(v.violations().is_empty());
    }

    #[test]
    fn half_norm_vector_reported_with_index() {
        let f = FrameEmbedding {
            vector: vec![0.5, 0.0],
            frame_index: 3,
        };
        let viols = f.violations();
        assert_eq!(viols.len(), 1);
        assert_eq!(viols[0].kind, ViolationKind::NormViolation);
        assert_eq!(viols[0].index, Some(3));
        assert!(viols[0].observed.contains("0.5"));
    }

    #[test]
    fn zero_vector_is_a_norm_violation() {
        let f = FrameEmbedding {
            vector: vec![0.0, 0.0],
            frame_index: 0,
        };
        assert_eq!(f.violations()[0].kind, ViolationKind::NormViolation);
    }

    #[test]
    fn index_gap_rejected_at_construction() {
        let frames = vec![
            FrameEmbedding {
                vector: vec![1.0, 0.0],
                frame_index: 0,
            },
            FrameEmbedding {
                vector: vec![0.0, 1.0],
                frame_index: 2,
            },
        ];
        match VideoEmbeddingSet::new("v", 1.0, frames, None) {
            Err(EmbeddingError::IndexGap {
                expected: 1,
                found: 2,
            }) => {}
            other => panic!("expected IndexGap, got {other:?}"),
        }
    }

    #[test]
    fn index_gap_reported_as_violation_data() {
        // Built around the constructor to exercise validation totality.
        let set = VideoEmbeddingSet {
            video_id: "v".into(),
            fps: 1.0,
            frames: vec![
                FrameEmbedding {
                    vector: vec![1.0, 0.0],
                    frame_index: 0,
                },
                FrameEmbedding {
                    vector: vec![0.0, 1.0],
                    frame_index: 2,
                },
            ],
            patches: None,
        };
        let viols = set.violations();
        assert_eq!(viols.len(), 1);
        assert_eq!(viols[0].kind, ViolationKind::IndexGap);
        assert_eq!(viols[0].index, Some(1));
        assert!(viols[0].observed.contains('2'));
    }

    #[test]
    fn renormalize_recovers_unit_norm() {
        let v = unit(vec![3.0, 4.0]);
        assert!((l2_norm(&v) - 1.0).abs() < 1e-6);
        assert!((v[0] - 0.6).abs() < 1e-6);
    }

    #[test]
    fn renormalize_leaves_zero_vector_alone() {
        let mut v = vec![0.0f32, 0.0];
        renormalize(&mut v);
        assert_eq!(v, vec![0.0, 0.0]);
    }

    #[test]
    fn in_memory_source_yields_in_order_and_independent_handles() {
        let grids = vec![
            PatchGrid::new(0, 2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            PatchGrid::new(1, 2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap(),
        ];
        let src = InMemoryPatchSource::new(grids).unwrap();
        let mut a = src.open().unwrap();
        let mut b = src.open().unwrap();
        assert_eq!(a.next_grid().unwrap().unwrap().frame_index, 0);
        assert_eq!(a.next_grid().unwrap().unwrap().frame_index, 1);
        assert!(a.next_grid().is_none());
        // Second handle starts from the beginning.
        assert_eq!(b.next_grid().unwrap().unwrap().frame_index, 0);
    }

    #[test]
    fn patch_grid_accessors() {
        let g = PatchGrid::new(7, 2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(g.patch(0), &[1.0, 2.0, 3.0]);
        assert_eq!(g.patch(1), &[4.0, 5.0, 6.0]);
        assert_eq!(g.m_patches(), 2);
        assert_eq!(g.patch_dim(), 3);
    }
}
