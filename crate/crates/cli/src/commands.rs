//! Subcommand implementations. Each one resolves its configuration, digests
//! its inputs into the run metadata, does the work through the library
//! crates, and emits one artifact to stdout or `--out`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use vlmp_core::embedding::{QueryEmbedding, VideoEmbeddingSet};
use vlmp_core::niah::{self, CatalogEntry, NiahConfig, NiahManifest};
use vlmp_core::pipeline::{
    self, budget, estimate_cost, CostProfile, DistillConfig, DistilledSequence, SamplingMode,
    SequenceItem, StreamStats, SweepRow,
};
use vlmp_core::profiler::{self, AttentionDump, AttentionProfile, PatchProfile};
use vlmp_core::tensor_file::{
    self, load_query, load_query_pair, load_tensor_file, load_video, LoadOptions, LoadedTensor,
    VideoManifest,
};
use vlmp_core::{DfmConfig, DksConfig, PatchGrid, Violation};
use vlmp_synth::{gen_attention_dump, gen_embeddings, SynthSpec};

use crate::util::{
    csv_field, csv_float, emit, parse_f64_list, parse_usize_list, resolve_out_dir, OutputFormat,
    RunMeta,
};
use crate::{
    BudgetArgs, Cli, Command, DistillArgs, Format, GenAttentionArgs, GenCommand, GenEmbeddingsArgs,
    Mode, NiahBuildArgs, NiahCommand, NiahScoreArgs, NiahSpliceArgs, ProfileCommand,
    ProfileFrameArgs, ProfilePatchArgs, QueryArgs, SweepArgs, ValidateArgs,
};

pub fn run(cli: Cli) -> Result<u8> {
    let ctx = Ctx {
        seed: cli.seed,
        strict: cli.strict,
        renormalize: cli.renormalize,
        out_dir: resolve_out_dir(cli.out_dir.as_deref()),
        format: match cli.format {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
        },
        jobs: cli.jobs.max(1),
    };
    match cli.command {
        Command::Validate(args) => cmd_validate(&ctx, args),
        Command::Distill(args) => cmd_distill(&ctx, args).map(|()| 0),
        Command::Budget(args) => cmd_budget(&ctx, args).map(|()| 0),
        Command::Profile {
            which: ProfileCommand::Frame(args),
        } => cmd_profile_frame(&ctx, args).map(|()| 0),
        Command::Profile {
            which: ProfileCommand::Patch(args),
        } => cmd_profile_patch(&ctx, args).map(|()| 0),
        Command::Niah {
            which: NiahCommand::Build(args),
        } => cmd_niah_build(&ctx, args).map(|()| 0),
        Command::Niah {
            which: NiahCommand::Splice(args),
        } => cmd_niah_splice(&ctx, args).map(|()| 0),
        Command::Niah {
            which: NiahCommand::Score(args),
        } => cmd_niah_score(&ctx, args).map(|()| 0),
        Command::Sweep(args) => cmd_sweep(&ctx, args).map(|()| 0),
        Command::Gen {
            which: GenCommand::Embeddings(args),
        } => cmd_gen_embeddings(&ctx, args).map(|()| 0),
        Command::Gen {
            which: GenCommand::Attention(args),
        } => cmd_gen_attention(&ctx, args).map(|()| 0),
        Command::Manual => {
            print!("{}", crate::render_manual());
            Ok(0)
        }
    }
}

struct Ctx {
    seed: u64,
    strict: bool,
    renormalize: bool,
    out_dir: PathBuf,
    format: OutputFormat,
    jobs: usize,
}

impl Ctx {
    fn load_opts(&self) -> LoadOptions {
        LoadOptions {
            renormalize: self.renormalize,
            validate_norms: true,
        }
    }
}

fn load_query_args(
    args: &QueryArgs,
    opts: LoadOptions,
    meta: &mut RunMeta,
) -> Result<QueryEmbedding> {
    match (&args.query, &args.query_frame, &args.query_patch) {
        (Some(path), _, _) => {
            meta.digest_input(path)?;
            Ok(load_query(path, opts)?)
        }
        (None, Some(frame), Some(patch)) => {
            meta.digest_input(frame)?;
            meta.digest_input(patch)?;
            Ok(load_query_pair(frame, patch, opts)?)
        }
        _ => unreachable!("clap enforces the query argument group"),
    }
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

#[derive(Debug, serde::Serialize)]
struct FileReport {
    file: String,
    kind: String,
    error: Option<String>,
    violations: Vec<Violation>,
}

fn cmd_validate(ctx: &Ctx, args: ValidateArgs) -> Result<u8> {
    let mut meta = RunMeta::new(
        "validate",
        ctx.seed,
        serde_json::json!({
            "renormalize": ctx.renormalize,
            "mass_tolerance": args.mass_tolerance,
        }),
    );
    // Defer norm checks so every violation is reported instead of the first.
    let opts = LoadOptions {
        renormalize: ctx.renormalize,
        validate_norms: false,
    };
    let mut reports = Vec::new();
    for file in &args.files {
        meta.digest_input(file)?;
        let report = validate_one(file, opts, args.mass_tolerance);
        reports.push(report);
    }
    let failed = reports
        .iter()
        .any(|r| r.error.is_some() || !r.violations.is_empty());

    let text = match ctx.format {
        OutputFormat::Json => {
            let doc = serde_json::json!({ "meta": meta, "reports": reports });
            serde_json::to_string_pretty(&doc)? + "\n"
        }
        OutputFormat::Csv => {
            let mut out = meta.csv_header();
            out.push_str("file,kind,error,violation,field,index,observed\n");
            for r in &reports {
                if r.violations.is_empty() {
                    writeln!(
                        out,
                        "{},{},{},,,,",
                        csv_field(&r.file),
                        r.kind,
                        csv_field(r.error.as_deref().unwrap_or(""))
                    )?;
                }
                for v in &r.violations {
                    writeln!(
                        out,
                        "{},{},,{:?},{},{},{}",
                        csv_field(&r.file),
                        r.kind,
                        v.kind,
                        csv_field(&v.field),
                        v.index.map(|i| i.to_string()).unwrap_or_default(),
                        csv_field(&v.observed)
                    )?;
                }
            }
            out
        }
    };
    emit(args.out.as_deref(), &text)?;
    Ok(if failed { 1 } else { 0 })
}

fn validate_one(file: &Path, opts: LoadOptions, mass_tolerance: f64) -> FileReport {
    let name = file.display().to_string();
    if file.extension().and_then(|e| e.to_str()) == Some("json") {
        return match load_video(file, opts) {
            Ok(video) => FileReport {
                file: name,
                kind: "video_manifest".to_string(),
                error: None,
                violations: video.violations(),
            },
            Err(e) => FileReport {
                file: name,
                kind: "video_manifest".to_string(),
                error: Some(e.to_string()),
                violations: Vec::new(),
            },
        };
    }
    match load_tensor_file(file, opts) {
        Ok(LoadedTensor::Frames(set)) => FileReport {
            file: name,
            kind: "frame_set".to_string(),
            error: None,
            violations: set.violations(),
        },
        Ok(LoadedTensor::Patches(grids)) => FileReport {
            file: name,
            kind: "patch_set".to_string(),
            error: None,
            violations: grids.iter().flat_map(|g| g.violations()).collect(),
        },
        Ok(LoadedTensor::Query(rows)) => {
            let mut violations = Vec::new();
            for (i, row) in rows.iter().enumerate() {
                let f = vlmp_core::FrameEmbedding {
                    vector: row.clone(),
                    frame_index: i,
                };
                for mut v in f.violations() {
                    v.field = "query.row".to_string();
                    violations.push(v);
                }
            }
            FileReport {
                file: name,
                kind: "query".to_string(),
                error: None,
                violations,
            }
        }
        Ok(LoadedTensor::Attention(dump)) => FileReport {
            file: name,
            kind: "attention".to_string(),
            error: None,
            violations: dump.violations(mass_tolerance),
        },
        Err(e) => FileReport {
            file: name,
            kind: "unknown".to_string(),
            error: Some(e.to_string()),
            violations: Vec::new(),
        },
    }
}

// ---------------------------------------------------------------------------
// distill
// ---------------------------------------------------------------------------

fn mode_of(mode: Mode) -> SamplingMode {
    match mode {
        Mode::Dks => SamplingMode::Dks,
        Mode::QueryOnly => SamplingMode::QueryOnly,
        Mode::Uniform => SamplingMode::Uniform,
    }
}

#[derive(serde::Serialize)]
struct DistillReport {
    meta: RunMeta,
    stream: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    stream_stats: Option<StreamStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tokens_file: Option<String>,
    sequence: DistilledSequence,
}

fn cmd_distill(ctx: &Ctx, args: DistillArgs) -> Result<()> {
    let cfg = DistillConfig {
        dks: DksConfig {
            tau: args.tau,
            k_max: args.k_max,
        },
        dfm: DfmConfig {
            lambda: args.lambda,
            alpha: args.alpha,
        },
        sampling_mode: mode_of(args.mode),
    };
    let mut meta = RunMeta::new(
        "distill",
        ctx.seed,
        serde_json::json!({
            "tau": cfg.dks.tau,
            "k_max": cfg.dks.k_max,
            "lambda": cfg.dfm.lambda,
            "alpha": cfg.dfm.alpha,
            "mode": cfg.sampling_mode,
            "stream": args.stream,
            "renormalize": ctx.renormalize,
        }),
    );
    meta.digest_input(&args.video)?;
    let video = load_video(&args.video, ctx.load_opts())?;
    let query = load_query_args(&args.query, ctx.load_opts(), &mut meta)?;

    let (mut sequence, stream_stats) = if args.stream {
        let (seq, stats) = pipeline::stream_distill_instrumented(&video, &query, &cfg)?;
        (seq, Some(stats))
    } else {
        (pipeline::distill(&video, &query, &cfg)?, None)
    };

    if let Some(weights_path) = &args.weights_csv {
        let mut csv = meta.csv_header();
        csv.push_str("frame_index,patch,weight\n");
        for item in &sequence.items {
            if let SequenceItem::Merged(token) = item {
                for (patch, w) in token.weights.iter().enumerate() {
                    writeln!(csv, "{},{},{}", token.source_frame, patch, w)?;
                }
            }
        }
        emit(Some(weights_path), &csv)?;
    }

    let tokens_file = match &args.tokens_out {
        Some(path) => {
            write_token_matrix(&sequence, path)?;
            strip_payloads(&mut sequence);
            eprintln!("wrote {}", path.display());
            Some(path.display().to_string())
        }
        None => None,
    };

    let report = DistillReport {
        meta,
        stream: args.stream,
        stream_stats,
        tokens_file,
        sequence,
    };
    let text = serde_json::to_string_pretty(&report)? + "\n";
    emit(args.out.as_deref(), &text)
}

/// Flatten the distilled sequence into one token-per-row tensor file
/// (PATCH_SET, n = token count, m = 1). Merged rows are pooled vectors and
/// generally not unit norm, so the file is a downstream payload rather than
/// a loadable embedding container.
fn write_token_matrix(sequence: &DistilledSequence, path: &Path) -> Result<()> {
    let mut rows: Vec<PatchGrid> = Vec::new();
    let mut dim = None;
    for item in &sequence.items {
        match item {
            SequenceItem::Keyframe {
                grid: Some(grid), ..
            } => {
                for m in 0..grid.m_patches() {
                    let row = grid.patch(m).to_vec();
                    dim.get_or_insert(row.len());
                    rows.push(PatchGrid::new(rows.len(), 1, row.len(), row)?);
                }
            }
            SequenceItem::Keyframe { grid: None, .. } => {
                bail!("keyframe grid payload missing; cannot externalize tokens")
            }
            SequenceItem::Merged(token) => {
                let row = token.vector.clone();
                dim.get_or_insert(row.len());
                rows.push(PatchGrid::new(rows.len(), 1, row.len(), row)?);
            }
        }
    }
    tensor_file::write_patch_grids(&rows, path)?;
    Ok(())
}

fn strip_payloads(sequence: &mut DistilledSequence) {
    for item in sequence.items.iter_mut() {
        match item {
            SequenceItem::Keyframe { grid, .. } => *grid = None,
            SequenceItem::Merged(token) => token.vector = Vec::new(),
        }
    }
}

// ---------------------------------------------------------------------------
// budget
// ---------------------------------------------------------------------------

fn cmd_budget(ctx: &Ctx, args: BudgetArgs) -> Result<()> {
    let meta = RunMeta::new(
        "budget",
        ctx.seed,
        serde_json::json!({
            "n": args.n, "m": args.m, "k": args.k,
            "cost_linear": args.cost_linear, "cost_quad": args.cost_quad,
        }),
    );
    let report = budget(args.n, args.m, args.k)?;
    let profile = CostProfile {
        per_token_cost: args.cost_linear,
        attention_quadratic_coeff: args.cost_quad,
    };
    let cost_original = estimate_cost(report.original_tokens, &profile);
    let cost_compressed = estimate_cost(report.compressed_tokens, &profile);
    eprintln!(
        "budget: original={} compressed={} reduction={:.2}%",
        report.original_tokens,
        report.compressed_tokens,
        report.reduction_ratio * 100.0
    );
    let text = match ctx.format {
        OutputFormat::Json => {
            let doc = serde_json::json!({
                "meta": meta,
                "budget": report,
                "cost_original": cost_original,
                "cost_compressed": cost_compressed,
            });
            serde_json::to_string_pretty(&doc)? + "\n"
        }
        OutputFormat::Csv => {
            let mut out = meta.csv_header();
            out.push_str("n,m,k,original_tokens,compressed_tokens,reduction_ratio,cost_original,cost_compressed\n");
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                report.n_frames,
                report.patches_per_frame,
                report.keyframes,
                report.original_tokens,
                report.compressed_tokens,
                report.reduction_ratio,
                cost_original,
                cost_compressed
            )?;
            out
        }
    };
    emit(args.out.as_deref(), &text)
}

// ---------------------------------------------------------------------------
// profile
// ---------------------------------------------------------------------------

fn load_attention(path: &Path, opts: LoadOptions) -> Result<AttentionDump> {
    match load_tensor_file(path, opts)? {
        LoadedTensor::Attention(dump) => Ok(dump),
        _ => bail!("{} is not an ATTENTION tensor file", path.display()),
    }
}

fn profile_csv(meta: &RunMeta, curve: &[f64], similarity: &[Option<f64>], extra: &str) -> String {
    let mut out = meta.csv_header();
    out.push_str(extra);
    out.push_str("percentile,cumulative_mass,mean_similarity\n");
    for (i, &mass) in curve.iter().enumerate() {
        let sim = similarity.get(i).copied().flatten();
        let _ = writeln!(out, "{},{},{}", i + 1, mass, csv_float(sim));
    }
    out
}

fn cmd_profile_frame(ctx: &Ctx, args: ProfileFrameArgs) -> Result<()> {
    let mut meta = RunMeta::new(
        "profile frame",
        ctx.seed,
        serde_json::json!({
            "window": args.window,
            "pairs": args.pairs,
            "mass_tolerance": args.mass_tolerance,
            "mass_warn_only": args.mass_warn_only,
        }),
    );
    meta.digest_input(&args.dump)?;
    meta.digest_input(&args.frames)?;
    let dump = load_attention(&args.dump, ctx.load_opts())?;
    let frames = match load_tensor_file(&args.frames, ctx.load_opts())? {
        LoadedTensor::Frames(set) => set.frames,
        _ => bail!("{} is not a FRAME_SET tensor file", args.frames.display()),
    };
    let tolerance = if args.mass_warn_only {
        let total = dump.total_mass();
        if (total - 1.0).abs() > args.mass_tolerance {
            eprintln!(
                "warning: attention mass {total} outside 1 +/- {} (continuing)",
                args.mass_tolerance
            );
        }
        None
    } else {
        Some(args.mass_tolerance)
    };
    let profile: AttentionProfile =
        profiler::frame_profile(&dump, &frames, args.window, args.pairs, ctx.seed, tolerance)?;

    let text = match ctx.format {
        OutputFormat::Json => {
            let doc = serde_json::json!({ "meta": meta, "profile": profile });
            serde_json::to_string_pretty(&doc)? + "\n"
        }
        OutputFormat::Csv => profile_csv(
            &meta,
            &profile.cumulative_curve,
            &profile.neighbor_similarity,
            &format!("# random_baseline={}\n", profile.random_baseline),
        ),
    };
    emit(args.out.as_deref(), &text)
}

fn cmd_profile_patch(ctx: &Ctx, args: ProfilePatchArgs) -> Result<()> {
    let mut meta = RunMeta::new(
        "profile patch",
        ctx.seed,
        serde_json::json!({ "k_top": args.k_top }),
    );
    meta.digest_input(&args.dump)?;
    meta.digest_input(&args.patches)?;
    let dump = load_attention(&args.dump, ctx.load_opts())?;
    let grids = match load_tensor_file(&args.patches, ctx.load_opts())? {
        LoadedTensor::Patches(grids) => grids,
        _ => bail!("{} is not a PATCH_SET tensor file", args.patches.display()),
    };
    let profile: PatchProfile = profiler::patch_profile(&dump, &grids, args.k_top)?;

    let text = match ctx.format {
        OutputFormat::Json => {
            let doc = serde_json::json!({ "meta": meta, "profile": profile });
            serde_json::to_string_pretty(&doc)? + "\n"
        }
        OutputFormat::Csv => {
            let keyframes = profile
                .keyframe_indices
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            let extra = format!(
                "# empty_profile={}\n# keyframes={}\n# non_keyframe_patches={}\n",
                profile.empty, keyframes, profile.n_non_keyframe_patches
            );
            profile_csv(
                &meta,
                &profile.cumulative_curve,
                &profile.similarity_buckets,
                &extra,
            )
        }
    };
    emit(args.out.as_deref(), &text)
}

// ---------------------------------------------------------------------------
// niah
// ---------------------------------------------------------------------------

#[derive(serde::Serialize)]
struct ManifestDoc {
    meta: RunMeta,
    #[serde(flatten)]
    manifest: NiahManifest,
}

fn cmd_niah_build(ctx: &Ctx, args: NiahBuildArgs) -> Result<()> {
    let mut meta = RunMeta::new(
        "niah build",
        ctx.seed,
        serde_json::json!({
            "lengths": args.lengths,
            "cases_per_length": args.cases_per_length,
            "needle_min": args.needle_min,
            "needle_max": args.needle_max,
        }),
    );
    meta.digest_input(&args.catalog)?;
    let catalog: Vec<CatalogEntry> = serde_json::from_str(
        &std::fs::read_to_string(&args.catalog)
            .with_context(|| format!("reading {}", args.catalog.display()))?,
    )
    .context("parsing catalog JSON")?;
    let cfg = NiahConfig {
        lengths: parse_usize_list(&args.lengths)?,
        cases_per_length: args.cases_per_length,
        needle_min: args.needle_min,
        needle_max: args.needle_max,
    };
    let manifest = niah::build_manifest(&catalog, &cfg, ctx.seed)?;
    eprintln!(
        "built {} cases over {} lengths",
        manifest.cases.len(),
        cfg.lengths.len()
    );
    let doc = ManifestDoc { meta, manifest };
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    emit(args.out.as_deref(), &text)
}

fn read_manifest(path: &Path) -> Result<NiahManifest> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
}

fn cmd_niah_splice(ctx: &Ctx, args: NiahSpliceArgs) -> Result<()> {
    let mut meta = RunMeta::new(
        "niah splice",
        ctx.seed,
        serde_json::json!({ "case": args.case, "renormalize": ctx.renormalize }),
    );
    meta.digest_input(&args.manifest)?;
    meta.digest_input(&args.haystack)?;
    meta.digest_input(&args.needle)?;
    let manifest = read_manifest(&args.manifest)?;
    let case = manifest
        .cases
        .iter()
        .find(|c| c.case_id == args.case)
        .ok_or_else(|| anyhow!("case {:?} not found in manifest", args.case))?;
    let haystack = load_video(&args.haystack, ctx.load_opts())?;
    let needle = load_video(&args.needle, ctx.load_opts())?;
    let (spliced, map) = niah::splice_embeddings(&haystack, &needle, case)?;

    std::fs::create_dir_all(&ctx.out_dir)
        .with_context(|| format!("creating {}", ctx.out_dir.display()))?;
    let frame_file = format!("{}.frames.vlmp", case.case_id);
    tensor_file::write_frames(&spliced.frames, &ctx.out_dir.join(&frame_file))?;
    let patch_file = match &spliced.patches {
        Some(source) => {
            let name = format!("{}.patches.vlmp", case.case_id);
            tensor_file::write_patches_streaming(source.as_ref(), &ctx.out_dir.join(&name))?;
            Some(name)
        }
        None => None,
    };
    let video_manifest = VideoManifest {
        video_id: spliced.video_id.clone(),
        fps: spliced.fps,
        frame_file,
        patch_file,
        n_frames: spliced.n_frames(),
    };

    #[derive(serde::Serialize)]
    struct SpliceDoc {
        meta: RunMeta,
        video: VideoManifest,
        map: vlmp_core::niah::SpliceMap,
    }
    let manifest_path = ctx.out_dir.join(format!("{}.json", case.case_id));
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&video_manifest)? + "\n",
    )?;
    let doc = SpliceDoc {
        meta,
        video: video_manifest,
        map,
    };
    let map_path = ctx.out_dir.join(format!("{}.map.json", case.case_id));
    std::fs::write(&map_path, serde_json::to_string_pretty(&doc)? + "\n")?;
    eprintln!(
        "spliced case {} into {}",
        case.case_id,
        ctx.out_dir.display()
    );
    Ok(())
}

#[derive(Debug, serde::Deserialize)]
struct PredictionLine {
    case_id: String,
    answer: String,
}

fn cmd_niah_score(ctx: &Ctx, args: NiahScoreArgs) -> Result<()> {
    let mut meta = RunMeta::new(
        "niah score",
        ctx.seed,
        serde_json::json!({ "buckets": args.buckets, "strict": ctx.strict }),
    );
    meta.digest_input(&args.manifest)?;
    meta.digest_input(&args.predictions)?;
    let manifest = read_manifest(&args.manifest)?;
    let mut predictions = BTreeMap::new();
    let text = std::fs::read_to_string(&args.predictions)
        .with_context(|| format!("reading {}", args.predictions.display()))?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: PredictionLine = serde_json::from_str(line)
            .with_context(|| format!("bad prediction at line {}", lineno + 1))?;
        if predictions
            .insert(parsed.case_id.clone(), parsed.answer)
            .is_some()
        {
            bail!(
                "duplicate prediction for case {:?} at line {}",
                parsed.case_id,
                lineno + 1
            );
        }
    }
    let grid = niah::score(&manifest, &predictions, args.buckets, ctx.strict)?;

    let text = match ctx.format {
        OutputFormat::Json => {
            let doc = serde_json::json!({ "meta": meta, "grid": grid });
            serde_json::to_string_pretty(&doc)? + "\n"
        }
        OutputFormat::Csv => {
            let mut out = meta.csv_header();
            writeln!(
                out,
                "# missing_predictions={} missing_answer_keys={}",
                grid.missing_predictions, grid.missing_answer_keys
            )?;
            out.push_str("length,bucket_lo,bucket_hi,correct,total,accuracy\n");
            for cell in &grid.cells {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    cell.length,
                    cell.bucket_lo,
                    cell.bucket_hi,
                    cell.correct,
                    cell.total,
                    csv_float(cell.accuracy)
                )?;
            }
            out
        }
    };
    emit(args.out.as_deref(), &text)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Debug, serde::Deserialize)]
struct ScoreEntry {
    tau: f64,
    alpha: f64,
    score: f64,
}

fn cmd_sweep(ctx: &Ctx, args: SweepArgs) -> Result<()> {
    if args.videos.len() != args.queries.len() {
        bail!(
            "{} --video flags but {} --query flags",
            args.videos.len(),
            args.queries.len()
        );
    }
    let tau_grid = parse_f64_list(&args.tau_grid)?;
    let alpha_grid = parse_f64_list(&args.alpha_grid)?;
    let mut meta = RunMeta::new(
        "sweep",
        ctx.seed,
        serde_json::json!({
            "tau_grid": tau_grid,
            "alpha_grid": alpha_grid,
            "k_max": args.k_max,
            "lambda": args.lambda,
            "mode": mode_of(args.mode),
        }),
    );

    let mut videos: Vec<VideoEmbeddingSet> = Vec::with_capacity(args.videos.len());
    for path in &args.videos {
        meta.digest_input(path)?;
        videos.push(load_video(path, ctx.load_opts())?);
    }
    let mut queries: Vec<QueryEmbedding> = Vec::with_capacity(args.queries.len());
    for path in &args.queries {
        meta.digest_input(path)?;
        queries.push(load_query(path, ctx.load_opts())?);
    }

    let scores: Option<Vec<ScoreEntry>> = match &args.scores {
        Some(path) => {
            meta.digest_input(path)?;
            Some(
                serde_json::from_str(
                    &std::fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?,
                )
                .context("parsing scores JSON")?,
            )
        }
        None => None,
    };
    let hook = |tau: f64, alpha: f64| -> Option<f64> {
        scores
            .as_ref()?
            .iter()
            .find(|e| e.tau == tau && e.alpha == alpha)
            .map(|e| e.score)
    };

    let base = DistillConfig {
        dks: DksConfig {
            tau: 0.85,
            k_max: args.k_max,
        },
        dfm: DfmConfig {
            lambda: args.lambda,
            alpha: 1e-2,
        },
        sampling_mode: mode_of(args.mode),
    };

    // Cells are independent; run them on a bounded pool and reassemble in
    // grid order so the bytes never depend on --jobs.
    let cells: Vec<(f64, f64)> = alpha_grid
        .iter()
        .flat_map(|&alpha| tau_grid.iter().map(move |&tau| (tau, alpha)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs)
        .build()
        .context("building worker pool")?;
    let rows: Result<Vec<Vec<SweepRow>>, vlmp_core::pipeline::PipelineError> = pool.install(|| {
        use rayon::prelude::*;
        cells
            .par_iter()
            .map(|&(tau, alpha)| {
                pipeline::run_sweep(&videos, &queries, &[tau], &[alpha], &base, Some(&hook))
            })
            .collect()
    });
    let rows: Vec<SweepRow> = rows?.into_iter().flatten().collect();

    let text = match ctx.format {
        OutputFormat::Json => {
            let doc = serde_json::json!({ "meta": meta, "rows": rows });
            serde_json::to_string_pretty(&doc)? + "\n"
        }
        OutputFormat::Csv => {
            let mut out = meta.csv_header();
            out.push_str("tau,alpha,n_videos,mean_keyframes,mean_reduction,score\n");
            for row in &rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    row.tau,
                    row.alpha,
                    row.n_videos,
                    row.mean_keyframes,
                    row.mean_reduction,
                    csv_float(row.score)
                )?;
            }
            out
        }
    };
    emit(args.out.as_deref(), &text)
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

fn cmd_gen_embeddings(ctx: &Ctx, args: GenEmbeddingsArgs) -> Result<()> {
    let spec = SynthSpec {
        n_frames: args.n,
        m_patches: args.m,
        d_f: args.d_f,
        d_p: args.d_p,
        cluster_centers: args.centers,
        blend: args.blend,
        seed: ctx.seed,
    };
    let meta = RunMeta::new("gen embeddings", ctx.seed, serde_json::to_value(spec)?);
    let (video, query) = gen_embeddings(&spec)?;
    let id = args.id.clone().unwrap_or_else(|| video.video_id.clone());

    std::fs::create_dir_all(&ctx.out_dir)
        .with_context(|| format!("creating {}", ctx.out_dir.display()))?;
    let frame_file = format!("{id}.frames.vlmp");
    tensor_file::write_frames(&video.frames, &ctx.out_dir.join(&frame_file))?;
    let patch_file = format!("{id}.patches.vlmp");
    tensor_file::write_patches_streaming(
        video.patches.as_ref().unwrap().as_ref(),
        &ctx.out_dir.join(&patch_file),
    )?;
    let query_files = if spec.d_f == spec.d_p {
        let name = format!("{id}.query.vlmp");
        tensor_file::write_query(&query, &ctx.out_dir.join(&name))?;
        vec![name]
    } else {
        let qf = format!("{id}.query_frame.vlmp");
        let qp = format!("{id}.query_patch.vlmp");
        tensor_file::write_query_single(&query.frame_space, &ctx.out_dir.join(&qf))?;
        tensor_file::write_query_single(&query.patch_space, &ctx.out_dir.join(&qp))?;
        vec![qf, qp]
    };
    let manifest = VideoManifest {
        video_id: id.clone(),
        fps: 1.0,
        frame_file,
        patch_file: Some(patch_file),
        n_frames: spec.n_frames,
    };
    std::fs::write(
        ctx.out_dir.join(format!("{id}.json")),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    #[derive(serde::Serialize)]
    struct GenDoc {
        meta: RunMeta,
        manifest: VideoManifest,
        query_files: Vec<String>,
    }
    std::fs::write(
        ctx.out_dir.join(format!("{id}.gen.json")),
        serde_json::to_string_pretty(&GenDoc {
            meta,
            manifest,
            query_files,
        })? + "\n",
    )?;
    eprintln!("generated video {id} in {}", ctx.out_dir.display());
    Ok(())
}

fn cmd_gen_attention(ctx: &Ctx, args: GenAttentionArgs) -> Result<()> {
    let meta = RunMeta::new(
        "gen attention",
        ctx.seed,
        serde_json::json!({
            "n": args.n, "m": args.m,
            "top_frac": args.top_frac, "mass_frac": args.mass_frac,
        }),
    );
    let dump = gen_attention_dump(args.n, args.m, args.top_frac, args.mass_frac, ctx.seed)?;
    let path = match &args.out {
        Some(path) => path.clone(),
        None => {
            std::fs::create_dir_all(&ctx.out_dir)
                .with_context(|| format!("creating {}", ctx.out_dir.display()))?;
            ctx.out_dir.join(format!("{}.vlmp", dump.video_id()))
        }
    };
    tensor_file::write_attention(&dump, &path)?;
    std::fs::write(
        path.with_extension("gen.json"),
        serde_json::to_string_pretty(&serde_json::json!({ "meta": meta }))? + "\n",
    )?;
    eprintln!("wrote {}", path.display());
    Ok(())
}
