//! Needle-in-a-haystack benchmark fabric at the embedding level.
//!
//! A manifest deterministically describes every test case: which long video
//! supplies the haystack, which short clip is the needle, how long the
//! spliced sequence is, and where the needle sits (its depth, 0 at the front
//! and 1 at the end). Splicing then runs on embeddings alone, and scoring
//! aggregates externally produced predictions into a length-by-depth grid.
//! The spliced sequence always has exactly the stated haystack length: the
//! needle replaces an equal-length span budget rather than extending it, so
//! grid rows compare like with like.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::embedding::{PatchGrid, PatchIter, PatchSource, PatchStreamError, VideoEmbeddingSet};
use crate::rng::SplitMix64;

pub const GENERATOR_VERSION: &str = "1";

#[derive(Debug, thiserror::Error)]
pub enum NiahError {
    #[error("catalog too small: {0}")]
    CatalogTooSmall(String),
    #[error("invalid benchmark config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {context}: {left} vs {right}")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },
    #[error("{what} too short: has {have} frames, case needs {need}")]
    SourceTooShort {
        what: &'static str,
        have: usize,
        need: usize,
    },
    #[error("prediction references unknown case id {0:?}")]
    UnknownCaseId(String),
    #[error("invalid case {case_id}: {detail}")]
    InvalidCase { case_id: String, detail: String },
}

/// One source video available for building cases. `question_type`,
/// `query_id` and `answer_key` describe the QA pair that rides with the
/// clip when it serves as a needle; the builder never fabricates them.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CatalogEntry {
    pub video_id: String,
    pub length: usize,
    #[serde(default)]
    pub question_type: Option<String>,
    #[serde(default)]
    pub query_id: Option<String>,
    #[serde(default)]
    pub answer_key: Option<String>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct NiahConfig {
    pub lengths: Vec<usize>,
    pub cases_per_length: usize,
    pub needle_min: usize,
    pub needle_max: usize,
}

impl Default for NiahConfig {
    fn default() -> Self {
        Self {
            lengths: vec![2000, 4000, 6000, 8000, 10_000],
            cases_per_length: 600,
            needle_min: 30,
            needle_max: 120,
        }
    }
}

impl NiahConfig {
    fn validate(&self) -> Result<(), NiahError> {
        if self.lengths.is_empty() {
            return Err(NiahError::InvalidConfig(
                "no haystack lengths configured".to_string(),
            ));
        }
        if self.cases_per_length == 0 {
            return Err(NiahError::InvalidConfig(
                "cases_per_length must be at least 1".to_string(),
            ));
        }
        if self.needle_min == 0 || self.needle_min > self.needle_max {
            return Err(NiahError::InvalidConfig(format!(
                "needle range [{}, {}] is empty or zero",
                self.needle_min, self.needle_max
            )));
        }
        if let Some(&shortest) = self.lengths.iter().min() {
            if self.needle_max > shortest {
                return Err(NiahError::InvalidConfig(format!(
                    "needle_max {} exceeds shortest haystack length {}",
                    self.needle_max, shortest
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NiahCase {
    pub case_id: String,
    pub haystack_source: String,
    pub needle_source: String,
    pub haystack_len: usize,
    pub needle_len: usize,
    pub insert_index: usize,
    /// `insert_index / (haystack_len - needle_len)`; 0 when the needle
    /// fills the whole sequence.
    pub depth: f64,
    pub query_id: Option<String>,
    pub answer_key: Option<String>,
}

impl NiahCase {
    pub fn validate(&self) -> Result<(), NiahError> {
        if self.needle_len == 0 || self.needle_len > self.haystack_len {
            return Err(NiahError::InvalidCase {
                case_id: self.case_id.clone(),
                detail: format!(
                    "needle_len {} vs haystack_len {}",
                    self.needle_len, self.haystack_len
                ),
            });
        }
        if self.insert_index > self.haystack_len - self.needle_len {
            return Err(NiahError::InvalidCase {
                case_id: self.case_id.clone(),
                detail: format!(
                    "insert_index {} out of [0, {}]",
                    self.insert_index,
                    self.haystack_len - self.needle_len
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NiahManifest {
    pub generator_version: String,
    pub seed: u64,
    pub cases: Vec<NiahCase>,
}

/// Build a deterministic manifest: `cases_per_length` cases for every
/// configured haystack length. Per case the builder draws, in a fixed
/// documented order from one splitmix64 stream: needle length (uniform over
/// the configured range), needle source (uniform over long-enough entries,
/// round-robin over question types when every entry carries one), haystack
/// source (uniform over long-enough entries), and insert index (uniform
/// over all valid positions).
pub fn build_manifest(
    catalog: &[CatalogEntry],
    cfg: &NiahConfig,
    seed: u64,
) -> Result<NiahManifest, NiahError> {
    cfg.validate()?;
    if catalog.is_empty() {
        return Err(NiahError::CatalogTooSmall("catalog is empty".to_string()));
    }
    let balance_types = catalog.iter().all(|e| e.question_type.is_some());
    let labels: Vec<String> = if balance_types {
        catalog
            .iter()
            .filter_map(|e| e.question_type.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    } else {
        Vec::new()
    };

    let mut rng = SplitMix64::new(seed);
    let mut cases = Vec::with_capacity(cfg.lengths.len() * cfg.cases_per_length);
    for &haystack_len in &cfg.lengths {
        let haystack_pool: Vec<usize> = catalog
            .iter()
            .enumerate()
            .filter(|(_, e)| e.length >= haystack_len)
            .map(|(i, _)| i)
            .collect();
        if haystack_pool.is_empty() {
            return Err(NiahError::CatalogTooSmall(format!(
                "no source long enough for a {haystack_len}-frame haystack"
            )));
        }
        for case_index in 0..cfg.cases_per_length {
            let needle_len = rng.next_range(cfg.needle_min as u64, cfg.needle_max as u64) as usize;
            let wanted_label = if labels.is_empty() {
                None
            } else {
                Some(&labels[case_index % labels.len()])
            };
            let needle_pool: Vec<usize> = catalog
                .iter()
                .enumerate()
                .filter(|(_, e)| {
                    e.length >= needle_len
                        && wanted_label.is_none_or(|l| e.question_type.as_ref() == Some(l))
                })
                .map(|(i, _)| i)
                .collect();
            if needle_pool.is_empty() {
                return Err(NiahError::CatalogTooSmall(format!(
                    "no needle source of length >= {needle_len}{}",
                    wanted_label
                        .map(|l| format!(" with question type {l:?}"))
                        .unwrap_or_default()
                )));
            }
            let needle = &catalog[needle_pool[rng.next_below(needle_pool.len() as u64) as usize]];
            let haystack =
                &catalog[haystack_pool[rng.next_below(haystack_pool.len() as u64) as usize]];
            let insert_index = rng.next_below((haystack_len - needle_len + 1) as u64) as usize;
            let span = haystack_len - needle_len;
            let depth = if span == 0 {
                0.0
            } else {
                insert_index as f64 / span as f64
            };
            cases.push(NiahCase {
                case_id: format!("{haystack_len}f-{case_index:04}"),
                haystack_source: haystack.video_id.clone(),
                needle_source: needle.video_id.clone(),
                haystack_len,
                needle_len,
                insert_index,
                depth,
                query_id: needle.query_id.clone(),
                answer_key: needle.answer_key.clone(),
            });
        }
    }
    Ok(NiahManifest {
        generator_version: GENERATOR_VERSION.to_string(),
        seed,
        cases,
    })
}

// ---------------------------------------------------------------------------
// Splicing
// ---------------------------------------------------------------------------

/// Where one contiguous run of output frames came from.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SpliceSegment {
    pub source: SpliceSource,
    pub source_start: usize,
    pub dest_start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpliceSource {
    Haystack,
    Needle,
}

/// Sidecar for a spliced sequence: the needle span plus the full source map
/// (a bijection from output frames onto source frames).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpliceMap {
    pub case_id: String,
    pub needle_start: usize,
    pub needle_end: usize,
    pub segments: Vec<SpliceSegment>,
}

/// Splice needle embeddings into the haystack per the case. The output has
/// exactly `haystack_len` frames: haystack `[0, insert)`, the needle, then
/// haystack `[insert, haystack_len - needle_len)`. Patch grids splice too
/// when both sources carry them.
pub fn splice_embeddings(
    haystack: &VideoEmbeddingSet,
    needle: &VideoEmbeddingSet,
    case: &NiahCase,
) -> Result<(VideoEmbeddingSet, SpliceMap), NiahError> {
    case.validate()?;
    if haystack.n_frames() < case.haystack_len {
        return Err(NiahError::SourceTooShort {
            what: "haystack",
            have: haystack.n_frames(),
            need: case.haystack_len,
        });
    }
    if needle.n_frames() < case.needle_len {
        return Err(NiahError::SourceTooShort {
            what: "needle",
            have: needle.n_frames(),
            need: case.needle_len,
        });
    }
    if haystack.frame_dim() != needle.frame_dim() {
        return Err(NiahError::DimensionMismatch {
            context: "frame embedding dimension",
            left: haystack.frame_dim(),
            right: needle.frame_dim(),
        });
    }

    let insert = case.insert_index;
    let tail_len = case.haystack_len - case.needle_len - insert;
    let mut frames = Vec::with_capacity(case.haystack_len);
    let push = |vector: Vec<f32>, out: &mut Vec<crate::embedding::FrameEmbedding>| {
        let frame_index = out.len();
        out.push(crate::embedding::FrameEmbedding {
            vector,
            frame_index,
        });
    };
    for i in 0..insert {
        push(haystack.frames[i].vector.clone(), &mut frames);
    }
    for i in 0..case.needle_len {
        push(needle.frames[i].vector.clone(), &mut frames);
    }
    for i in insert..insert + tail_len {
        push(haystack.frames[i].vector.clone(), &mut frames);
    }

    let patches: Option<Arc<dyn PatchSource>> = match (&haystack.patches, &needle.patches) {
        (Some(h), Some(n)) => {
            if h.patch_dim() != n.patch_dim() {
                return Err(NiahError::DimensionMismatch {
                    context: "patch dimension",
                    left: h.patch_dim(),
                    right: n.patch_dim(),
                });
            }
            if h.m_patches() != n.m_patches() {
                return Err(NiahError::DimensionMismatch {
                    context: "patches per frame",
                    left: h.m_patches(),
                    right: n.m_patches(),
                });
            }
            Some(Arc::new(SplicedPatchSource {
                haystack: Arc::clone(h),
                needle: Arc::clone(n),
                insert,
                needle_len: case.needle_len,
                total: case.haystack_len,
            }))
        }
        _ => None,
    };

    let video = VideoEmbeddingSet::new(case.case_id.clone(), haystack.fps, frames, patches)
        .map_err(|e| NiahError::InvalidCase {
            case_id: case.case_id.clone(),
            detail: e.to_string(),
        })?;

    let mut segments = Vec::new();
    if insert > 0 {
        segments.push(SpliceSegment {
            source: SpliceSource::Haystack,
            source_start: 0,
            dest_start: 0,
            len: insert,
        });
    }
    segments.push(SpliceSegment {
        source: SpliceSource::Needle,
        source_start: 0,
        dest_start: insert,
        len: case.needle_len,
    });
    if tail_len > 0 {
        segments.push(SpliceSegment {
            source: SpliceSource::Haystack,
            source_start: insert,
            dest_start: insert + case.needle_len,
            len: tail_len,
        });
    }
    let map = SpliceMap {
        case_id: case.case_id.clone(),
        needle_start: insert,
        needle_end: insert + case.needle_len,
        segments,
    };
    Ok((video, map))
}

/// Lazy patch source over a spliced sequence; grids stream in output order
/// with renumbered frame indices, one source pass each.
struct SplicedPatchSource {
    haystack: Arc<dyn PatchSource>,
    needle: Arc<dyn PatchSource>,
    insert: usize,
    needle_len: usize,
    total: usize,
}

impl PatchSource for SplicedPatchSource {
    fn n_frames(&self) -> usize {
        self.total
    }

    fn m_patches(&self) -> usize {
        self.haystack.m_patches()
    }

    fn patch_dim(&self) -> usize {
        self.haystack.patch_dim()
    }

    fn open(&self) -> Result<Box<dyn PatchIter + Send + '_>, PatchStreamError> {
        Ok(Box::new(SplicedPatchIter {
            haystack: self.haystack.open()?,
            needle: self.needle.open()?,
            insert: self.insert,
            needle_len: self.needle_len,
            total: self.total,
            next: 0,
        }))
    }
}

struct SplicedPatchIter<'a> {
    haystack: Box<dyn PatchIter + Send + 'a>,
    needle: Box<dyn PatchIter + Send + 'a>,
    insert: usize,
    needle_len: usize,
    total: usize,
    next: usize,
}

impl PatchIter for SplicedPatchIter<'_> {
    fn next_grid(&mut self) -> Option<Result<PatchGrid, PatchStreamError>> {
        if self.next >= self.total {
            return None;
        }
        let dest = self.next;
        let from = if dest < self.insert || dest >= self.insert + self.needle_len {
            &mut self.haystack
        } else {
            &mut self.needle
        };
        let grid = match from.next_grid() {
            Some(Ok(g)) => g,
            Some(Err(e)) => return Some(Err(e)),
            None => {
                return Some(Err(PatchStreamError::Invalid {
                    frame: dest,
                    detail: "source patch stream ended early".to_string(),
                }))
            }
        };
        self.next += 1;
        Some(Ok(grid.with_frame_index(dest)))
    }
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ScoreCell {
    pub length: usize,
    pub bucket_lo: f64,
    pub bucket_hi: f64,
    pub correct: usize,
    pub total: usize,
    /// None for cells with no judged cases; never reported as 0 accuracy.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ScoreGrid {
    pub buckets: usize,
    pub strict: bool,
    pub cells: Vec<ScoreCell>,
    /// Cases lacking a prediction, excluded from totals unless strict.
    pub missing_predictions: usize,
    /// Cases whose manifest entry carries no answer key; never judged.
    pub missing_answer_keys: usize,
}

/// Aggregate predictions into a (length, depth-bucket) accuracy grid.
/// Depth bucket `b` covers `[b/buckets, (b+1)/buckets)`, the last bucket
/// closed at 1. Under `strict`, missing predictions count as incorrect;
/// otherwise they are excluded and reported.
pub fn score(
    manifest: &NiahManifest,
    predictions: &BTreeMap<String, String>,
    buckets: usize,
    strict: bool,
) -> Result<ScoreGrid, NiahError> {
    if buckets == 0 {
        return Err(NiahError::InvalidConfig(
            "bucket count must be at least 1".to_string(),
        ));
    }
    let known: BTreeSet<&str> = manifest.cases.iter().map(|c| c.case_id.as_str()).collect();
    for case_id in predictions.keys() {
        if !known.contains(case_id.as_str()) {
            return Err(NiahError::UnknownCaseId(case_id.clone()));
        }
    }

    let lengths: BTreeSet<usize> = manifest.cases.iter().map(|c| c.haystack_len).collect();
    let mut correct: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut total: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut missing_predictions = 0usize;
    let mut missing_answer_keys = 0usize;

    for case in &manifest.cases {
        let Some(answer_key) = &case.answer_key else {
            missing_answer_keys += 1;
            continue;
        };
        let bucket = ((case.depth * buckets as f64).floor() as usize).min(buckets - 1);
        let key = (case.haystack_len, bucket);
        match predictions.get(&case.case_id) {
            Some(answer) => {
                *total.entry(key).or_default() += 1;
                if answer.trim() == answer_key.trim() {
                    *correct.entry(key).or_default() += 1;
                }
            }
            None if strict => {
                *total.entry(key).or_default() += 1;
            }
            None => {
                missing_predictions += 1;
            }
        }
    }

    let mut cells = Vec::with_capacity(lengths.len() * buckets);
    for &length in &lengths {
        for bucket in 0..buckets {
            let key = (length, bucket);
            let t = total.get(&key).copied().unwrap_or(0);
            let c = correct.get(&key).copied().unwrap_or(0);
            cells.push(ScoreCell {
                length,
                bucket_lo: bucket as f64 / buckets as f64,
                bucket_hi: (bucket + 1) as f64 / buckets as f64,
                correct: c,
                total: t,
                accuracy: if t > 0 {
                    Some(c as f64 / t as f64)
                } else {
                    None
                },
            });
        }
    }
    Ok(ScoreGrid {
        buckets,
        strict,
        cells,
        missing_predictions,
        missing_answer_keys,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::FrameEmbedding;

    fn catalog() -> Vec<CatalogEntry> {
        vec![
            CatalogEntry {
                video_id: "long-a".into(),
                length: 12_000,
                question_type: None,
                query_id: Some("q-a".into()),
                answer_key: Some("A".into()),
            },
            CatalogEntry {
                video_id: "long-b".into(),
                length: 10_000,
                question_type: None,
                query_id: Some("q-b".into()),
                answer_key: Some("B".into()),
            },
            CatalogEntry {
                video_id: "clip-c".into(),
                length: 200,
                question_type: None,
                query_id: Some("q-c".into()),
                answer_key: Some("C".into()),
            },
        ]
    }

    fn tiny_video(id: &str, n: usize, fill: f32) -> VideoEmbeddingSet {
        let frames = (0..n)
            .map(|i| {
                let angle = fill + i as f32 * 0.001;
                FrameEmbedding {
                    vector: vec![angle.cos(), angle.sin()],
                    frame_index: i,
                }
            })
            .collect();
        VideoEmbeddingSet::new(id, 1.0, frames, None).unwrap()
    }

    #[test]
    fn default_scale_manifest() {
        let cfg = NiahConfig {
            cases_per_length: 600,
            ..Default::default()
        };
        let manifest = build_manifest(&catalog(), &cfg, 7).unwrap();
        assert_eq!(manifest.cases.len(), 3000);
        for case in &manifest.cases {
            case.validate().unwrap();
            assert!((30..=120).contains(&case.needle_len));
            assert!(case.insert_index <= case.haystack_len - case.needle_len);
        }
        let ids: BTreeSet<_> = manifest.cases.iter().map(|c| &c.case_id).collect();
        assert_eq!(ids.len(), 3000);
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = NiahConfig {
            cases_per_length: 5,
            ..Default::default()
        };
        let a = build_manifest(&catalog(), &cfg, 42).unwrap();
        let b = build_manifest(&catalog(), &cfg, 42).unwrap();
        assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap()
        );
        let c = build_manifest(&catalog(), &cfg, 43).unwrap();
        assert_ne!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&c).unwrap()
        );
    }

    #[test]
    fn depth_is_one_at_the_tail_boundary() {
        let case = NiahCase {
            case_id: "t".into(),
            haystack_source: "h".into(),
            needle_source: "n".into(),
            haystack_len: 100,
            needle_len: 30,
            insert_index: 70,
            depth: 70.0 / 70.0,
            query_id: None,
            answer_key: None,
        };
        case.validate().unwrap();
        assert_eq!(case.depth, 1.0);
    }

    #[test]
    fn catalog_without_long_sources_fails() {
        let short = vec![CatalogEntry {
            video_id: "only".into(),
            length: 500,
            question_type: None,
            query_id: None,
            answer_key: None,
        }];
        let cfg = NiahConfig {
            cases_per_length: 1,
            ..Default::default()
        };
        assert!(matches!(
            build_manifest(&short, &cfg, 0),
            Err(NiahError::CatalogTooSmall(_))
        ));
    }

    #[test]
    fn question_types_round_robin_when_all_labeled() {
        let labeled: Vec<CatalogEntry> = ["count", "order", "what"]
            .iter()
            .enumerate()
            .map(|(i, ty)| CatalogEntry {
                video_id: format!("v{i}"),
                length: 5000,
                question_type: Some(ty.to_string()),
                query_id: None,
                answer_key: None,
            })
            .collect();
        let cfg = NiahConfig {
            lengths: vec![2000],
            cases_per_length: 9,
            needle_min: 30,
            needle_max: 120,
        };
        let manifest = build_manifest(&labeled, &cfg, 1).unwrap();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for case in &manifest.cases {
            *counts.entry(case.needle_source.as_str()).or_default() += 1;
        }
        // 9 cases over 3 types: exactly 3 each.
        assert!(counts.values().all(|&c| c == 3), "{counts:?}");
    }

    #[test]
    fn splice_at_zero_puts_needle_first() {
        let haystack = tiny_video("h", 100, 0.0);
        let needle = tiny_video("n", 30, 1.0);
        let case = NiahCase {
            case_id: "c0".into(),
            haystack_source: "h".into(),
            needle_source: "n".into(),
            haystack_len: 100,
            needle_len: 30,
            insert_index: 0,
            depth: 0.0,
            query_id: None,
            answer_key: None,
        };
        let (out, map) = splice_embeddings(&haystack, &needle, &case).unwrap();
        assert_eq!(out.n_frames(), 100);
        assert_eq!(map.needle_start, 0);
        assert_eq!(map.needle_end, 30);
        assert_eq!(out.frames[0].vector, needle.frames[0].vector);
        assert_eq!(out.frames[30].vector, haystack.frames[0].vector);
    }

    #[test]
    fn splice_mid_sequence_index_arithmetic() {
        let haystack = tiny_video("h", 100, 0.0);
        let needle = tiny_video("n", 30, 1.0);
        let case = NiahCase {
            case_id: "c35".into(),
            haystack_source: "h".into(),
            needle_source: "n".into(),
            haystack_len: 100,
            needle_len: 30,
            insert_index: 35,
            depth: 0.5,
            query_id: None,
            answer_key: None,
        };
        let (out, map) = splice_embeddings(&haystack, &needle, &case).unwrap();
        assert_eq!(out.n_frames(), 100);
        assert_eq!((map.needle_start, map.needle_end), (35, 65));
        assert_eq!(out.frames[34].vector, haystack.frames[34].vector);
        assert_eq!(out.frames[35].vector, needle.frames[0].vector);
        assert_eq!(out.frames[64].vector, needle.frames[29].vector);
        assert_eq!(out.frames[65].vector, haystack.frames[35].vector);
        assert_eq!(out.frames[99].vector, haystack.frames[69].vector);
        // Segment map is a bijection onto 0..100.
        let covered: usize = map.segments.iter().map(|s| s.len).sum();
        assert_eq!(covered, 100);
        let mut seen = [false; 100];
        for seg in &map.segments {
            for off in 0..seg.len {
                assert!(!seen[seg.dest_start + off]);
                seen[seg.dest_start + off] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
        // Frame indices renumbered contiguously.
        for (i, f) in out.frames.iter().enumerate() {
            assert_eq!(f.frame_index, i);
        }
    }

    #[test]
    fn spliced_patch_source_streams_in_output_order() {
        use crate::embedding::{collect_grids, InMemoryPatchSource, PatchGrid};
        use std::sync::Arc;

        let make = |id: &str, n: usize, fill: f32| {
            let frames = (0..n)
                .map(|i| FrameEmbedding {
                    vector: vec![1.0, 0.0],
                    frame_index: i,
                })
                .collect();
            let grids = (0..n)
                .map(|i| {
                    let unique = fill + i as f32 * 1e-3;
                    let norm = (1.0 + unique * unique).sqrt();
                    PatchGrid::new(i, 1, 2, vec![1.0 / norm, unique / norm]).unwrap()
                })
                .collect();
            let source = Arc::new(InMemoryPatchSource::new(grids).unwrap());
            VideoEmbeddingSet::new(id, 1.0, frames, Some(source)).unwrap()
        };
        let haystack = make("h", 20, 0.0);
        let needle = make("n", 5, 0.5);
        let case = NiahCase {
            case_id: "s".into(),
            haystack_source: "h".into(),
            needle_source: "n".into(),
            haystack_len: 12,
            needle_len: 5,
            insert_index: 4,
            depth: 4.0 / 7.0,
            query_id: None,
            answer_key: None,
        };
        let (out, _) = splice_embeddings(&haystack, &needle, &case).unwrap();
        let spliced = collect_grids(out.patches.as_ref().unwrap().as_ref()).unwrap();
        let hay_grids = collect_grids(haystack.patches.as_ref().unwrap().as_ref()).unwrap();
        let ndl_grids = collect_grids(needle.patches.as_ref().unwrap().as_ref()).unwrap();
        assert_eq!(spliced.len(), 12);
        for (dest, grid) in spliced.iter().enumerate() {
            assert_eq!(grid.frame_index, dest, "renumbered contiguously");
            let expected = if dest < 4 {
                hay_grids[dest].raw()
            } else if dest < 9 {
                ndl_grids[dest - 4].raw()
            } else {
                hay_grids[dest - 5].raw()
            };
            assert_eq!(grid.raw(), expected, "dest {dest}");
        }
    }

    #[test]
    fn needle_longer_than_haystack_rejected() {
        let haystack = tiny_video("h", 50, 0.0);
        let needle = tiny_video("n", 60, 1.0);
        let case = NiahCase {
            case_id: "bad".into(),
            haystack_source: "h".into(),
            needle_source: "n".into(),
            haystack_len: 50,
            needle_len: 60,
            insert_index: 0,
            depth: 0.0,
            query_id: None,
            answer_key: None,
        };
        assert!(matches!(
            splice_embeddings(&haystack, &needle, &case),
            Err(NiahError::InvalidCase { .. })
        ));
    }

    fn scoring_manifest() -> NiahManifest {
        let mk = |id: &str, len: usize, depth: f64, key: &str| NiahCase {
            case_id: id.to_string(),
            haystack_source: "h".into(),
            needle_source: "n".into(),
            haystack_len: len,
            needle_len: 30,
            insert_index: 0,
            depth,
            query_id: None,
            answer_key: Some(key.to_string()),
        };
        NiahManifest {
            generator_version: GENERATOR_VERSION.to_string(),
            seed: 0,
            cases: vec![
                mk("a", 2000, 0.05, "x"),
                mk("b", 2000, 0.95, "y"),
                mk("c", 4000, 0.05, "z"),
            ],
        }
    }

    #[test]
    fn all_correct_scores_one_everywhere() {
        let manifest = scoring_manifest();
        let predictions: BTreeMap<String, String> = [("a", "x"), ("b", "y"), ("c", "z")]
            .iter()
            .map(|&(k, v)| (k.into(), v.into()))
            .collect();
        let grid = score(&manifest, &predictions, 10, false).unwrap();
        for cell in grid.cells.iter().filter(|c| c.total > 0) {
            assert_eq!(cell.accuracy, Some(1.0));
        }
        assert_eq!(grid.missing_predictions, 0);
    }

    #[test]
    fn per_length_rows_are_independent() {
        let manifest = scoring_manifest();
        let predictions: BTreeMap<String, String> = [("a", "x"), ("b", "y"), ("c", "wrong")]
            .iter()
            .map(|&(k, v)| (k.into(), v.into()))
            .collect();
        let grid = score(&manifest, &predictions, 10, false).unwrap();
        let cell_2000 = grid
            .cells
            .iter()
            .find(|c| c.length == 2000 && c.total > 0)
            .unwrap();
        assert_eq!(cell_2000.accuracy, Some(1.0));
        let cell_4000 = grid
            .cells
            .iter()
            .find(|c| c.length == 4000 && c.total > 0)
            .unwrap();
        assert_eq!(cell_4000.accuracy, Some(0.0));
    }

    #[test]
    fn missing_predictions_excluded_unless_strict() {
        let manifest = scoring_manifest();
        let predictions: BTreeMap<String, String> = [("a", "x")]
            .iter()
            .map(|&(k, v)| (k.into(), v.into()))
            .collect();
        let lenient = score(&manifest, &predictions, 10, false).unwrap();
        assert_eq!(lenient.missing_predictions, 2);
        assert_eq!(lenient.cells.iter().map(|c| c.total).sum::<usize>(), 1);

        let strict = score(&manifest, &predictions, 10, true).unwrap();
        assert_eq!(strict.missing_predictions, 0);
        assert_eq!(strict.cells.iter().map(|c| c.total).sum::<usize>(), 3);
        let b_cell = strict
            .cells
            .iter()
            .find(|c| c.length == 2000 && c.bucket_lo == 0.9)
            .unwrap();
        assert_eq!(b_cell.accuracy, Some(0.0));
    }

    #[test]
    fn unknown_case_id_rejected() {
        let manifest = scoring_manifest();
        let predictions: BTreeMap<String, String> = [("ghost", "x")]
            .iter()
            .map(|&(k, v)| (k.into(), v.into()))
            .collect();
        assert!(matches!(
            score(&manifest, &predictions, 10, false),
            Err(NiahError::UnknownCaseId(id)) if id == "ghost"
        ));
    }

    #[test]
    fn empty_cells_flagged_not_zero() {
        let manifest = scoring_manifest();
        let predictions: BTreeMap<String, String> = [("a", "x"), ("b", "y"), ("c", "z")]
            .iter()
            .map(|&(k, v)| (k.into(), v.into()))
            .collect();
        let grid = score(&manifest, &predictions, 10, false).unwrap();
        let empty = grid.cells.iter().filter(|c| c.total == 0).count();
        assert_eq!(empty, 20 - 3);
        assert!(grid
            .cells
            .iter()
            .filter(|c| c.total == 0)
            .all(|c| c.accuracy.is_none()));
    }
}
