//! Acceptance suite: one test per criterion, each printing a pass line with
//! its evidence (run with `--nocapture` to see them). Every tolerance and
//! instance budget is pinned here; nothing defers to later calibration.
//!
//! 1.  Token budget arithmetic, exact integers, > 70% reduction, < 1 ms.
//! 2.  Selection vs naive reference on 1,000 seeded instances, 0 mismatches.
//! 3.  Threshold invariant on every multi-keyframe instance, exact.
//! 4.  Merging limit laws: mean pooling at alpha = 1e6, argmax at 1e-6.
//! 5.  Analytic merge Jacobian vs central differences, rel err < 1e-4.
//! 6.  Merge vs straight-line reference within 1e-9 on 1,000 instances.
//! 7.  Streaming output bit-identical; peak resident grids = 2 at N = 10k.
//! 8.  Profiler curves reproduce planted concentrations within 1e-6.
//! 9.  Benchmark manifest shape, bounds, determinism, depth uniformity.
//! 10. Sweep grid shape and keyframe monotonicity in tau.

use std::collections::BTreeSet;
use std::time::Instant;

use vlmp_core::dfm::{merge_frame, merge_gradient, merge_weights, pool_f64, DfmConfig};
use vlmp_core::dks::{select_keyframes, select_keyframes_oracle, DksConfig};
use vlmp_core::embedding::{PatchGrid, QueryEmbedding};
use vlmp_core::math::unit_cos;
use vlmp_core::niah::{build_manifest, CatalogEntry, NiahConfig};
use vlmp_core::pipeline::{
    budget, distill, run_sweep, stream_distill, stream_distill_instrumented, DistillConfig,
};
use vlmp_core::profiler::cumulative_curve;
use vlmp_core::rng::SplitMix64;
use vlmp_synth::{dfm_oracle_f64, gen_attention_dump, gen_embeddings, SynthSpec};

const MASTER_SEED: u64 = 0x5641_4c4d_5030_3031;

fn inst_rng(criterion: u64, index: u64) -> SplitMix64 {
    SplitMix64::derive(MASTER_SEED ^ criterion, index)
}

fn unit_vec(rng: &mut SplitMix64, dim: usize) -> Vec<f32> {
    loop {
        let raw: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return raw.into_iter().map(|x| (x / norm) as f32).collect();
        }
    }
}

fn random_grid(rng: &mut SplitMix64, frame_index: usize, m: usize, d: usize) -> PatchGrid {
    let mut data = Vec::with_capacity(m * d);
    for _ in 0..m {
        data.extend(unit_vec(rng, d));
    }
    PatchGrid::new(frame_index, m, d, data).unwrap()
}

#[test]
fn criterion_01_token_budget() {
    let started = Instant::now();
    let report = budget(128, 729, 32).unwrap();
    let elapsed = started.elapsed();
    assert_eq!(report.original_tokens, 93_312);
    assert_eq!(report.compressed_tokens, 23_424);
    let reduction_pct = report.reduction_ratio * 100.0;
    assert!(
        (reduction_pct - 74.90).abs() < 0.005,
        "reduction {reduction_pct:.4}%"
    );
    assert!(
        report.reduction_ratio > 0.70,
        "defaults must clear a 70% reduction"
    );
    assert!(elapsed.as_millis() < 1, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 1 token-budget: PASS (93312 -> 23424 tokens, {reduction_pct:.2}% reduction, {elapsed:?})"
    );
}

/// Shared instance generator for criteria 2 and 3: clustered synthetic
/// videos across the pinned tau/K grid, dims within N <= 64, d_f <= 32.
fn dks_instance(i: u64) -> (vlmp_core::VideoEmbeddingSet, QueryEmbedding, DksConfig) {
    let mut rng = inst_rng(2, i);
    let spec = SynthSpec {
        n_frames: 1 + rng.next_below(64) as usize,
        m_patches: 1,
        d_f: 1 + rng.next_below(32) as usize,
        d_p: 2,
        cluster_centers: 1 + rng.next_below(6) as usize,
        blend: rng.next_f64(),
        seed: rng.next_u64(),
    };
    let (video, query) = gen_embeddings(&spec).unwrap();
    let tau = [0.35, 0.5, 0.85, 1.0][(i % 4) as usize];
    let k_max = [1usize, 4, 32][((i / 4) % 3) as usize];
    (video, query, DksConfig { tau, k_max })
}

#[test]
fn criterion_02_selection_oracle_equivalence() {
    let started = Instant::now();
    let mut mismatches = 0usize;
    for i in 0..1000u64 {
        let (video, query, cfg) = dks_instance(i);
        let fast = select_keyframes(&video, &query, &cfg).unwrap();
        let naive = select_keyframes_oracle(&video, &query, &cfg).unwrap();
        if fast != naive {
            mismatches += 1;
            eprintln!("instance {i}: {fast:?} vs {naive:?}");
        }
    }
    let elapsed = started.elapsed();
    assert_eq!(mismatches, 0, "selection disagreed with the reference");
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("ACCEPTANCE 2 selection-oracle: PASS (1000 instances, 0 mismatches, {elapsed:?})");
}

#[test]
fn criterion_03_threshold_invariant() {
    let started = Instant::now();
    let mut multi = 0usize;
    for i in 0..1000u64 {
        let (video, query, cfg) = dks_instance(i);
        let selection = select_keyframes(&video, &query, &cfg).unwrap();
        if selection.len() < 2 {
            continue;
        }
        multi += 1;
        for (a_pos, &a) in selection.keyframe_indices.iter().enumerate() {
            for &b in &selection.keyframe_indices[a_pos + 1..] {
                let sim = unit_cos(&video.frames[a].vector, &video.frames[b].vector);
                assert!(
                    sim < cfg.tau,
                    "instance {i}: selected pair ({a}, {b}) cos {sim} >= tau {}",
                    cfg.tau
                );
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(
        multi > 100,
        "only {multi} multi-keyframe instances; generator degenerate"
    );
    println!(
        "ACCEPTANCE 3 threshold-invariant: PASS ({multi} multi-keyframe instances, exact, {elapsed:?})"
    );
}

#[test]
fn criterion_04_merging_limit_laws() {
    let started = Instant::now();
    // Mean pooling at alpha = 1e6.
    for i in 0..100u64 {
        let mut rng = inst_rng(41, i);
        let m = 2 + rng.next_below(15) as usize;
        let d = 8 + rng.next_below(9) as usize;
        let frame = random_grid(&mut rng, 1, m, d);
        let keyframe = random_grid(&mut rng, 0, m, d);
        let query = QueryEmbedding {
            frame_space: vec![1.0],
            patch_space: unit_vec(&mut rng, d),
        };
        let cfg = DfmConfig {
            lambda: 1.0,
            alpha: 1e6,
        };
        let token = merge_frame(&frame, Some(&keyframe), &query, &cfg).unwrap();
        for dim in 0..d {
            let mean: f64 = (0..m).map(|p| frame.patch(p)[dim] as f64).sum::<f64>() / m as f64;
            let diff = (token.vector[dim] as f64 - mean).abs();
            assert!(
                diff < 1e-6,
                "instance {i} dim {dim}: |merged - mean| = {diff}"
            );
        }
    }
    // Argmax selection at alpha = 1e-6; patch 0 is planted as the unique
    // saliency maximum (exact query match, every other patch kept away).
    for i in 0..100u64 {
        let mut rng = inst_rng(42, i);
        let m = 2 + rng.next_below(15) as usize;
        let d = 8 + rng.next_below(9) as usize;
        let query_vec = unit_vec(&mut rng, d);
        let mut data = query_vec.clone();
        for _ in 1..m {
            loop {
                let candidate = unit_vec(&mut rng, d);
                let cos: f64 = candidate
                    .iter()
                    .zip(query_vec.iter())
                    .map(|(&a, &b)| a as f64 * b as f64)
                    .sum();
                if cos < 0.9 {
                    data.extend(candidate);
                    break;
                }
            }
        }
        let frame = PatchGrid::new(0, m, d, data).unwrap();
        let query = QueryEmbedding {
            frame_space: vec![1.0],
            patch_space: query_vec,
        };
        let cfg = DfmConfig {
            lambda: 1.0,
            alpha: 1e-6,
        };
        let token = merge_frame(&frame, None, &query, &cfg).unwrap();
        for dim in 0..d {
            let diff = (token.vector[dim] as f64 - frame.patch(0)[dim] as f64).abs();
            assert!(
                diff < 1e-6,
                "instance {i} dim {dim}: |merged - argmax patch| = {diff}"
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("ACCEPTANCE 4 limit-laws: PASS (100 mean-pooling + 100 argmax instances, 1e-6, {elapsed:?})");
}

#[test]
fn criterion_05_gradient_check() {
    let started = Instant::now();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let mut rng = inst_rng(5, i);
        let m = 2 + rng.next_below(15) as usize;
        let d = 1 + rng.next_below(8) as usize;
        let alpha = [1.0, 0.1, 0.01][(i % 3) as usize];
        let frame = random_grid(&mut rng, 0, m, d);
        // Saliency spread on the order of alpha keeps the softmax soft so
        // the Jacobian is non-trivial.
        let saliency: Vec<f64> = (0..m).map(|_| rng.next_gaussian() * alpha).collect();
        let jac = merge_gradient(&frame, &saliency, alpha).unwrap();

        let mut fd = vec![0.0f64; d * m];
        for j in 0..m {
            let mut plus = saliency.clone();
            let mut minus = saliency.clone();
            plus[j] += h;
            minus[j] -= h;
            let fp = pool_f64(&frame, &merge_weights(&plus, alpha).unwrap());
            let fm = pool_f64(&frame, &merge_weights(&minus, alpha).unwrap());
            for dim in 0..d {
                fd[dim * m + j] = (fp[dim] - fm[dim]) / (2.0 * h);
            }
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = jac.data.iter().zip(fd.iter()).map(|(a, b)| a - b).collect();
        let denom = norm(&jac.data).max(1e-12);
        let rel = norm(&diff) / denom;
        worst = worst.max(rel);
        assert!(
            rel < 1e-4,
            "instance {i} (alpha {alpha}): relative error {rel}"
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 5 gradient-check: PASS (100 instances, worst rel err {worst:.3e}, {elapsed:?})"
    );
}

#[test]
fn criterion_06_merge_oracle_equivalence() {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..1000u64 {
        let mut rng = inst_rng(6, i);
        let m = 1 + rng.next_below(32) as usize;
        let d = 1 + rng.next_below(16) as usize;
        let frame = random_grid(&mut rng, 1, m, d);
        let keyframe = if rng.next_below(2) == 1 {
            Some(random_grid(&mut rng, 0, m, d))
        } else {
            None
        };
        let query = QueryEmbedding {
            frame_space: vec![1.0],
            patch_space: unit_vec(&mut rng, d),
        };
        let cfg = DfmConfig {
            lambda: rng.next_f64() * 2.0,
            alpha: [1.0, 0.1, 0.01, 0.001][(i % 4) as usize],
        };
        let token = merge_frame(&frame, keyframe.as_ref(), &query, &cfg).unwrap();
        let impl_pooled = pool_f64(&frame, &token.weights);
        let (oracle_pooled, oracle_weights) =
            dfm_oracle_f64(&frame, keyframe.as_ref(), &query, &cfg).unwrap();
        for (a, b) in token.weights.iter().zip(oracle_weights.iter()) {
            let diff = (a - b).abs();
            worst = worst.max(diff);
            assert!(diff < 1e-9, "instance {i}: weight diff {diff}");
        }
        for (a, b) in impl_pooled.iter().zip(oracle_pooled.iter()) {
            let diff = (a - b).abs();
            worst = worst.max(diff);
            assert!(diff < 1e-9, "instance {i}: vector diff {diff}");
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("ACCEPTANCE 6 merge-oracle: PASS (1000 instances, worst diff {worst:.3e} < 1e-9, {elapsed:?})");
}

#[test]
fn criterion_07_streaming_contract() {
    let started = Instant::now();
    // Bit-exact equivalence on 200 seeded instances.
    for i in 0..200u64 {
        let mut rng = inst_rng(7, i);
        let spec = SynthSpec {
            n_frames: 1 + rng.next_below(40) as usize,
            m_patches: 1 + rng.next_below(6) as usize,
            d_f: 2 + rng.next_below(14) as usize,
            d_p: 1 + rng.next_below(8) as usize,
            cluster_centers: 1 + rng.next_below(5) as usize,
            blend: rng.next_f64(),
            seed: rng.next_u64(),
        };
        let (video, query) = gen_embeddings(&spec).unwrap();
        let mut cfg = DistillConfig::default();
        cfg.dks.tau = [0.35, 0.5, 0.85, 1.0][(i % 4) as usize];
        cfg.dks.k_max = 8;
        let eager = distill(&video, &query, &cfg).unwrap();
        let streamed = stream_distill(&video, &query, &cfg).unwrap();
        assert_eq!(eager, streamed, "instance {i} diverged");
        assert_eq!(
            serde_json::to_vec(&eager).unwrap(),
            serde_json::to_vec(&streamed).unwrap(),
            "instance {i} serialized bytes diverged"
        );
    }

    // Bounded residency on a 10,000-frame, 9-patch synthetic stream.
    let spec = SynthSpec {
        n_frames: 10_000,
        m_patches: 9,
        d_f: 8,
        d_p: 8,
        cluster_centers: 12,
        blend: 0.7,
        seed: 0xFEED,
    };
    let (video, query) = gen_embeddings(&spec).unwrap();
    let (seq, stats) =
        stream_distill_instrumented(&video, &query, &DistillConfig::default()).unwrap();
    assert_eq!(
        stats.peak_resident_grids, 2,
        "streaming held more than 2 grids"
    );
    assert_eq!(seq.items.len(), 10_000);
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 7 streaming-contract: PASS (200 bit-identical instances; peak resident grids = {} at N=10000, {elapsed:?})",
        stats.peak_resident_grids
    );
}

#[test]
fn criterion_08_profiler_reproduction_by_construction() {
    let started = Instant::now();
    // Frame level: 5% of frames hold 90% of mass.
    let dump = gen_attention_dump(100, 1, 0.05, 0.90, 1).unwrap();
    let scores: Vec<f64> = (0..100).map(|i| dump.row(i).iter().sum()).collect();
    let curve = cumulative_curve(&scores).unwrap();
    let at5 = curve[4];
    assert!((at5 - 0.90).abs() < 1e-6, "frame curve(5%) = {at5}");

    // Patch analogue: 50% of patches hold 80% of mass.
    let dump = gen_attention_dump(100, 10, 0.50, 0.80, 2).unwrap();
    let curve = cumulative_curve(dump.weights()).unwrap();
    let at50 = curve[49];
    assert!((at50 - 0.80).abs() < 1e-6, "patch curve(50%) = {at50}");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 8 profiler-construction: PASS (curve(5%)={at5:.9}, curve(50%)={at50:.9}, {elapsed:?})"
    );
}

#[test]
fn criterion_09_benchmark_manifest() {
    let started = Instant::now();
    let catalog = vec![
        CatalogEntry {
            video_id: "long-a".into(),
            length: 12_000,
            question_type: None,
            query_id: Some("qa".into()),
            answer_key: Some("a".into()),
        },
        CatalogEntry {
            video_id: "long-b".into(),
            length: 11_000,
            question_type: None,
            query_id: Some("qb".into()),
            answer_key: Some("b".into()),
        },
        CatalogEntry {
            video_id: "clip".into(),
            length: 150,
            question_type: None,
            query_id: Some("qc".into()),
            answer_key: Some("c".into()),
        },
    ];

    // Default-scale manifest: five lengths x 600 cases.
    let cfg = NiahConfig::default();
    let manifest = build_manifest(&catalog, &cfg, 2024).unwrap();
    assert_eq!(manifest.cases.len(), 3000);
    let ids: BTreeSet<&str> = manifest.cases.iter().map(|c| c.case_id.as_str()).collect();
    assert_eq!(ids.len(), 3000, "case ids must be unique");
    for case in &manifest.cases {
        assert!(
            (30..=120).contains(&case.needle_len),
            "needle_len {}",
            case.needle_len
        );
        assert!(
            case.insert_index <= case.haystack_len - case.needle_len,
            "insert_index {} out of range",
            case.insert_index
        );
    }

    // Same seed, same bytes; different seed, different bytes.
    let again = build_manifest(&catalog, &cfg, 2024).unwrap();
    assert_eq!(
        serde_json::to_vec(&manifest).unwrap(),
        serde_json::to_vec(&again).unwrap()
    );
    let other = build_manifest(&catalog, &cfg, 2025).unwrap();
    assert_ne!(
        serde_json::to_vec(&manifest).unwrap(),
        serde_json::to_vec(&other).unwrap()
    );

    // Depth deciles uniform within +/- 2 points over 10,000 cases.
    let big_cfg = NiahConfig {
        cases_per_length: 2000,
        ..Default::default()
    };
    let big = build_manifest(&catalog, &big_cfg, 7).unwrap();
    assert_eq!(big.cases.len(), 10_000);
    let mut deciles = [0usize; 10];
    for case in &big.cases {
        deciles[((case.depth * 10.0).floor() as usize).min(9)] += 1;
    }
    for (d, &count) in deciles.iter().enumerate() {
        let share = count as f64 / big.cases.len() as f64;
        assert!(
            (share - 0.10).abs() <= 0.02,
            "decile {d} holds {share:.4} of cases"
        );
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 9 benchmark-manifest: PASS (3000 cases, deterministic bytes, deciles {:?}, {elapsed:?})",
        deciles
    );
}

#[test]
fn criterion_10_sweep_harness() {
    let started = Instant::now();
    // Duplicate-heavy synthetic video: tight clusters of near-identical
    // frames so the threshold bites.
    let spec = SynthSpec {
        n_frames: 48,
        m_patches: 3,
        d_f: 12,
        d_p: 6,
        cluster_centers: 6,
        blend: 0.9,
        seed: 99,
    };
    let (video, query) = vlmp_synth::gen_embeddings_materialized(&spec).unwrap();
    let tau_grid = [0.35, 0.5, 0.85, 1.0];
    let alpha_grid = [1.0, 0.1, 0.01, 0.001];
    let rows = run_sweep(
        &[video],
        &[query],
        &tau_grid,
        &alpha_grid,
        &DistillConfig::default(),
        None,
    )
    .unwrap();
    assert_eq!(rows.len(), 16, "4x4 grid must yield 16 rows");

    // Keyframe count non-increasing as tau decreases, per alpha block.
    for &alpha in &alpha_grid {
        let by_tau: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.alpha == alpha)
            .map(|r| (r.tau, r.mean_keyframes))
            .collect();
        assert_eq!(by_tau.len(), 4);
        for pair in by_tau.windows(2) {
            let (tau_small, k_small) = pair[0];
            let (tau_big, k_big) = pair[1];
            assert!(tau_small < tau_big, "tau grid must be ascending in rows");
            assert!(
                k_small <= k_big,
                "alpha {alpha}: keyframes at tau {tau_small} ({k_small}) exceed tau {tau_big} ({k_big})"
            );
        }
    }
    let spread: Vec<f64> = rows.iter().take(4).map(|r| r.mean_keyframes).collect();
    assert!(
        spread[0] < spread[3],
        "threshold never bit on the duplicate-heavy video"
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 10 sweep-harness: PASS (16 rows; keyframes by tau {:?}, {elapsed:?})",
        spread
    );
}
