//! Differential feature merging.
//!
//! A non-keyframe's patches are scored by differential saliency -- query
//! relevance minus `lambda` times position-aligned redundancy against the
//! paired keyframe -- and pooled into a single token under a temperature
//! softmax of those scores. The softmax subtracts its maximum before
//! exponentiating; this is mandatory, not cosmetic, because the small
//! temperatures in routine use (alpha down to 1e-3 on the sweep grid) push
//! raw exponents far past float range.

use crate::embedding::{PatchGrid, QueryEmbedding};
use crate::math::unit_cos;

/// Merging parameters. `lambda` trades query relevance against temporal
/// redundancy; `alpha` is the softmax temperature (small = sharper).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DfmConfig {
    pub lambda: f64,
    pub alpha: f64,
}

impl Default for DfmConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            alpha: 1e-2,
        }
    }
}

impl DfmConfig {
    // Negated comparisons are deliberate: NaN parameters must fail.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), DfmError> {
        if !(self.alpha > 0.0) {
            return Err(DfmError::NonPositiveAlpha(self.alpha));
        }
        if !(self.lambda >= 0.0) {
            return Err(DfmError::NegativeLambda(self.lambda));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DfmError {
    #[error("dimension mismatch: {context}: {left} vs {right}")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },
    #[error("patch count mismatch: frame has {frame} patches, keyframe has {keyframe}")]
    PatchCountMismatch { frame: usize, keyframe: usize },
    #[error("softmax temperature must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("lambda must be non-negative, got {0}")]
    NegativeLambda(f64),
    #[error("saliency vector is empty")]
    EmptySaliency,
}

/// One merged token: the pooled vector, where it came from, which keyframe
/// it was differenced against (none for frames before the first keyframe),
/// and the pooling weights for audit.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MergedToken {
    pub vector: Vec<f32>,
    pub source_frame: usize,
    pub paired_keyframe: Option<usize>,
    pub weights: Vec<f64>,
}

/// Differential saliency per patch: `cos(p_m, q) - lambda * cos(p_m, k_m)`,
/// position-aligned. Without a preceding keyframe the redundancy term is
/// zero, so saliency reduces to plain query relevance.
pub fn patch_saliency(
    frame: &PatchGrid,
    keyframe: Option<&PatchGrid>,
    query: &QueryEmbedding,
    lambda: f64,
) -> Result<Vec<f64>, DfmError> {
    if frame.patch_dim() != query.patch_space.len() {
        return Err(DfmError::DimensionMismatch {
            context: "patch vs query patch space",
            left: frame.patch_dim(),
            right: query.patch_space.len(),
        });
    }
    if let Some(kf) = keyframe {
        if kf.m_patches() != frame.m_patches() {
            return Err(DfmError::PatchCountMismatch {
                frame: frame.m_patches(),
                keyframe: kf.m_patches(),
            });
        }
        if kf.patch_dim() != frame.patch_dim() {
            return Err(DfmError::DimensionMismatch {
                context: "patch vs keyframe patch",
                left: frame.patch_dim(),
                right: kf.patch_dim(),
            });
        }
    }
    let mut saliency = Vec::with_capacity(frame.m_patches());
    for m in 0..frame.m_patches() {
        let p = frame.patch(m);
        let relevance = unit_cos(p, &query.patch_space);
        let redundancy = match keyframe {
            Some(kf) => unit_cos(p, kf.patch(m)),
            None => 0.0,
        };
        saliency.push(relevance - lambda * redundancy);
    }
    Ok(saliency)
}

/// Temperature softmax of the saliency scores, max-subtracted. The weights
/// are non-negative and sum to 1 up to f64 rounding.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN alpha must fail
pub fn merge_weights(saliency: &[f64], alpha: f64) -> Result<Vec<f64>, DfmError> {
    if !(alpha > 0.0) {
        return Err(DfmError::NonPositiveAlpha(alpha));
    }
    if saliency.is_empty() {
        return Err(DfmError::EmptySaliency);
    }
    let max = saliency.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = saliency
        .iter()
        .map(|&d| ((d - max) / alpha).exp())
        .collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Weighted pool `sum(w_m * p_m) / sum(w_m)` in f64. The denominator is kept
/// even though the weights already sum to 1, exactly as the pooling is
/// defined; it costs one division and keeps the reduction auditable.
pub fn pool_f64(frame: &PatchGrid, weights: &[f64]) -> Vec<f64> {
    debug_assert_eq!(weights.len(), frame.m_patches());
    let d = frame.patch_dim();
    let mut acc = vec![0.0f64; d];
    let mut weight_sum = 0.0f64;
    for (m, w) in weights.iter().enumerate() {
        let p = frame.patch(m);
        for (a, &x) in acc.iter_mut().zip(p.iter()) {
            *a += w * x as f64;
        }
        weight_sum += w;
    }
    for a in acc.iter_mut() {
        *a /= weight_sum;
    }
    acc
}

/// Merge one frame into a single token.
pub fn merge_frame(
    frame: &PatchGrid,
    keyframe: Option<&PatchGrid>,
    query: &QueryEmbedding,
    cfg: &DfmConfig,
) -> Result<MergedToken, DfmError> {
    cfg.validate()?;
    let saliency = patch_saliency(frame, keyframe, query, cfg.lambda)?;
    let weights = merge_weights(&saliency, cfg.alpha)?;
    let pooled = pool_f64(frame, &weights);
    Ok(MergedToken {
        vector: pooled.into_iter().map(|v| v as f32).collect(),
        source_frame: frame.frame_index,
        paired_keyframe: keyframe.map(|kf| kf.frame_index),
        weights,
    })
}

/// Jacobian of the merged vector with respect to the saliency scores,
/// stored row-major as `d_p` rows by `M` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Jacobian {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }
}

/// Analytic gradient of the pooled token w.r.t. the saliency vector:
/// column j is `(1/alpha) * w_j * (p_j - t)`, the standard softmax-pooling
/// Jacobian. Verifiable against central finite differences of
/// `merge_weights` composed with `pool_f64`.
pub fn merge_gradient(
    frame: &PatchGrid,
    saliency: &[f64],
    alpha: f64,
) -> Result<Jacobian, DfmError> {
    if saliency.len() != frame.m_patches() {
        return Err(DfmError::DimensionMismatch {
            context: "saliency vs patch count",
            left: saliency.len(),
            right: frame.m_patches(),
        });
    }
    let weights = merge_weights(saliency, alpha)?;
    let pooled = pool_f64(frame, &weights);
    let d = frame.patch_dim();
    let m = frame.m_patches();
    let mut data = vec![0.0f64; d * m];
    for j in 0..m {
        let p = frame.patch(j);
        let scale = weights[j] / alpha;
        for i in 0..d {
            data[i * m + j] = scale * (p[i] as f64 - pooled[i]);
        }
    }
    Ok(Jacobian {
        rows: d,
        cols: m,
        data,
    })
}
