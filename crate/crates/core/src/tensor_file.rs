//! Binary tensor file format and the JSON sidecar manifest.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "VLMP" (4) | version u32 | kind u8 | pad (3) | n u32 | m u32 | d u32
//! payload: n * m * d float32, row-major (frame, then patch, then dimension)
//! ```
//!
//! `m` is 1 for FRAME_SET and QUERY files. Endianness is fixed regardless of
//! host; a golden file in the test corpus pins the byte layout. Loading
//! validates unit norms (frame/patch/query kinds) or the `[0, 1]` entry range
//! (attention); it rejects rather than repairs, unless renormalization is
//! explicitly requested.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::embedding::{
    renormalize, FrameEmbedding, PatchGrid, PatchIter, PatchSource, PatchStreamError,
    QueryEmbedding, VideoEmbeddingSet, NORM_TOLERANCE,
};
use crate::math::l2_norm;
use crate::profiler::AttentionDump;

pub const MAGIC: [u8; 4] = *b"VLMP";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    FrameSet = 0,
    PatchSet = 1,
    Query = 2,
    Attention = 3,
}

impl TensorKind {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(TensorKind::FrameSet),
            1 => Some(TensorKind::PatchSet),
            2 => Some(TensorKind::Query),
            3 => Some(TensorKind::Attention),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TensorFileHeader {
    pub version: u32,
    pub kind: TensorKind,
    pub n: u32,
    pub m: u32,
    pub d: u32,
}

impl TensorFileHeader {
    pub fn payload_len(&self) -> u64 {
        self.n as u64 * self.m as u64 * self.d as u64 * 4
    }

    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut buf = [0u8; HEADER_LEN];
        buf[0..4].copy_from_slice(&MAGIC);
        buf[4..8].copy_from_slice(&self.version.to_le_bytes());
        buf[8] = self.kind as u8;
        buf[12..16].copy_from_slice(&self.n.to_le_bytes());
        buf[16..20].copy_from_slice(&self.m.to_le_bytes());
        buf[20..24].copy_from_slice(&self.d.to_le_bytes());
        buf
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TensorFileError {
    #[error("bad magic in {path}: expected \"VLMP\"")]
    BadMagic { path: PathBuf },
    #[error("unsupported format version {found} in {path} (supported: {FORMAT_VERSION})")]
    VersionUnsupported { path: PathBuf, found: u32 },
    #[error("unknown tensor kind byte {found} in {path}")]
    UnknownKind { path: PathBuf, found: u8 },
    #[error(
        "size mismatch in {path}: header declares {expected} payload bytes, file holds {found}"
    )]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        found: u64,
    },
    #[error("norm violation in {path}: vector {index} has norm {norm}")]
    NormViolation {
        path: PathBuf,
        index: usize,
        norm: f64,
    },
    #[error("entry out of [0, 1] in {path} at flat index {index}: {value}")]
    EntryOutOfRange {
        path: PathBuf,
        index: usize,
        value: f32,
    },
    #[error("malformed {path}: {detail}")]
    Malformed { path: PathBuf, detail: String },
    #[error("expected {expected:?} file, found {found:?} in {path}")]
    WrongKind {
        path: PathBuf,
        expected: TensorKind,
        found: TensorKind,
    },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest error in {path}: {detail}")]
    Manifest { path: PathBuf, detail: String },
    #[error(transparent)]
    Embedding(#[from] crate::embedding::EmbeddingError),
}

impl TensorFileError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        TensorFileError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Ingestion options. `renormalize` applies explicit L2 renormalization to
/// every vector before the norm check; zero vectors still fail (cosine is
/// undefined for them, with no epsilon fallback). Turning `validate_norms`
/// off defers the norm check to a later `violations()` sweep, which is how
/// the validate command reports bad vectors as data instead of aborting on
/// the first one.
#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub renormalize: bool,
    pub validate_norms: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            renormalize: false,
            validate_norms: true,
        }
    }
}

#[derive(Debug)]
pub enum LoadedTensor {
    Frames(VideoEmbeddingSet),
    Patches(Vec<PatchGrid>),
    /// Rows of a QUERY file: one row (a single-space query vector) or two
    /// rows (frame space then patch space, which requires d_f == d_p).
    Query(Vec<Vec<f32>>),
    Attention(AttentionDump),
}

fn read_header_from(
    reader: &mut impl Read,
    path: &Path,
) -> Result<TensorFileHeader, TensorFileError> {
    let mut buf = [0u8; HEADER_LEN];
    reader
        .read_exact(&mut buf)
        .map_err(|e| TensorFileError::io(path, e))?;
    if buf[0..4] != MAGIC {
        return Err(TensorFileError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(TensorFileError::VersionUnsupported {
            path: path.to_path_buf(),
            found: version,
        });
    }
    let kind = TensorKind::from_byte(buf[8]).ok_or(TensorFileError::UnknownKind {
        path: path.to_path_buf(),
        found: buf[8],
    })?;
    let n = u32::from_le_bytes(buf[12..16].try_into().unwrap());
    let m = u32::from_le_bytes(buf[16..20].try_into().unwrap());
    let d = u32::from_le_bytes(buf[20..24].try_into().unwrap());
    Ok(TensorFileHeader {
        version,
        kind,
        n,
        m,
        d,
    })
}

/// Read just the header of a tensor file.
pub fn read_header(path: &Path) -> Result<TensorFileHeader, TensorFileError> {
    let file = File::open(path).map_err(|e| TensorFileError::io(path, e))?;
    let mut reader = BufReader::new(file);
    read_header_from(&mut reader, path)
}

fn validate_header(header: &TensorFileHeader, path: &Path) -> Result<(), TensorFileError> {
    if header.n == 0 || header.m == 0 || header.d == 0 {
        return Err(TensorFileError::Malformed {
            path: path.to_path_buf(),
            detail: format!(
                "zero dimension in header: n={} m={} d={}",
                header.n, header.m, header.d
            ),
        });
    }
    if (header.kind == TensorKind::FrameSet || header.kind == TensorKind::Query) && header.m != 1 {
        return Err(TensorFileError::Malformed {
            path: path.to_path_buf(),
            detail: format!("{:?} requires m=1, header has m={}", header.kind, header.m),
        });
    }
    Ok(())
}

fn read_payload(
    reader: &mut impl Read,
    header: &TensorFileHeader,
    path: &Path,
) -> Result<Vec<f32>, TensorFileError> {
    let expected = header.payload_len();
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| TensorFileError::io(path, e))?;
    if bytes.len() as u64 != expected {
        return Err(TensorFileError::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn check_unit_rows(
    data: &mut [f32],
    dim: usize,
    opts: LoadOptions,
    path: &Path,
) -> Result<(), TensorFileError> {
    for (i, row) in data.chunks_exact_mut(dim).enumerate() {
        if opts.renormalize {
            renormalize(row);
        }
        if !opts.validate_norms {
            continue;
        }
        let norm = l2_norm(row);
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(TensorFileError::NormViolation {
                path: path.to_path_buf(),
                index: i,
                norm,
            });
        }
    }
    Ok(())
}

/// Load any tensor file into its typed container. FRAME_SET files become a
/// `VideoEmbeddingSet` (video_id from the file stem, fps 1) with no patch
/// source attached; use [`load_video`] to assemble a full set from a sidecar
/// manifest.
pub fn load_tensor_file(path: &Path, opts: LoadOptions) -> Result<LoadedTensor, TensorFileError> {
    let file = File::open(path).map_err(|e| TensorFileError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let header = read_header_from(&mut reader, path)?;
    validate_header(&header, path)?;
    let mut data = read_payload(&mut reader, &header, path)?;
    let (n, m, d) = (header.n as usize, header.m as usize, header.d as usize);

    match header.kind {
        TensorKind::FrameSet => {
            check_unit_rows(&mut data, d, opts, path)?;
            let frames = data
                .chunks_exact(d)
                .enumerate()
                .map(|(i, row)| FrameEmbedding {
                    vector: row.to_vec(),
                    frame_index: i,
                })
                .collect();
            let video_id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "video".to_string());
            Ok(LoadedTensor::Frames(VideoEmbeddingSet::new(
                video_id, 1.0, frames, None,
            )?))
        }
        TensorKind::PatchSet => {
            check_unit_rows(&mut data, d, opts, path)?;
            let grids = data
                .chunks_exact(m * d)
                .enumerate()
                .map(|(i, rows)| PatchGrid::new(i, m, d, rows.to_vec()))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(LoadedTensor::Patches(grids))
        }
        TensorKind::Query => {
            if n > 2 {
                return Err(TensorFileError::Malformed {
                    path: path.to_path_buf(),
                    detail: format!("QUERY files hold 1 or 2 rows, header has n={n}"),
                });
            }
            check_unit_rows(&mut data, d, opts, path)?;
            Ok(LoadedTensor::Query(
                data.chunks_exact(d).map(|r| r.to_vec()).collect(),
            ))
        }
        TensorKind::Attention => {
            if let Some((i, &v)) = data
                .iter()
                .enumerate()
                .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
            {
                return Err(TensorFileError::EntryOutOfRange {
                    path: path.to_path_buf(),
                    index: i,
                    value: v,
                });
            }
            let video_id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "attention".to_string());
            let weights = data.iter().map(|&v| v as f64).collect();
            Ok(LoadedTensor::Attention(
                AttentionDump::new(video_id, n, m, weights).map_err(|e| {
                    TensorFileError::Malformed {
                        path: path.to_path_buf(),
                        detail: e.to_string(),
                    }
                })?,
            ))
        }
    }
}

/// Load a two-row QUERY file into a `QueryEmbedding` (requires d_f == d_p
/// by construction of the format).
pub fn load_query(path: &Path, opts: LoadOptions) -> Result<QueryEmbedding, TensorFileError> {
    match load_tensor_file(path, opts)? {
        LoadedTensor::Query(rows) if rows.len() == 2 => {
            let mut it = rows.into_iter();
            Ok(QueryEmbedding {
                frame_space: it.next().unwrap(),
                patch_space: it.next().unwrap(),
            })
        }
        LoadedTensor::Query(rows) => Err(TensorFileError::Malformed {
            path: path.to_path_buf(),
            detail: format!(
                "expected 2 query rows (frame space, patch space), found {}",
                rows.len()
            ),
        }),
        other => Err(TensorFileError::WrongKind {
            path: path.to_path_buf(),
            expected: TensorKind::Query,
            found: kind_of(&other),
        }),
    }
}

/// Assemble a `QueryEmbedding` from two single-row QUERY files; this is the
/// route for queries whose frame-space and patch-space dimensions differ.
pub fn load_query_pair(
    frame_path: &Path,
    patch_path: &Path,
    opts: LoadOptions,
) -> Result<QueryEmbedding, TensorFileError> {
    let one_row = |path: &Path| -> Result<Vec<f32>, TensorFileError> {
        match load_tensor_file(path, opts)? {
            LoadedTensor::Query(rows) if rows.len() == 1 => Ok(rows.into_iter().next().unwrap()),
            LoadedTensor::Query(rows) => Err(TensorFileError::Malformed {
                path: path.to_path_buf(),
                detail: format!("expected a single query row, found {}", rows.len()),
            }),
            other => Err(TensorFileError::WrongKind {
                path: path.to_path_buf(),
                expected: TensorKind::Query,
                found: kind_of(&other),
            }),
        }
    };
    Ok(QueryEmbedding {
        frame_space: one_row(frame_path)?,
        patch_space: one_row(patch_path)?,
    })
}

fn kind_of(t: &LoadedTensor) -> TensorKind {
    match t {
        LoadedTensor::Frames(_) => TensorKind::FrameSet,
        LoadedTensor::Patches(_) => TensorKind::PatchSet,
        LoadedTensor::Query(_) => TensorKind::Query,
        LoadedTensor::Attention(_) => TensorKind::Attention,
    }
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

fn open_writer(path: &Path) -> Result<BufWriter<File>, TensorFileError> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| TensorFileError::io(path, e))?,
    ))
}

fn write_rows(
    w: &mut impl Write,
    rows: impl Iterator<Item = f32>,
    path: &Path,
) -> Result<(), TensorFileError> {
    for v in rows {
        w.write_all(&v.to_le_bytes())
            .map_err(|e| TensorFileError::io(path, e))?;
    }
    Ok(())
}

pub fn write_frames(frames: &[FrameEmbedding], path: &Path) -> Result<(), TensorFileError> {
    let d = frames.first().map(|f| f.vector.len()).unwrap_or(0);
    let header = TensorFileHeader {
        version: FORMAT_VERSION,
        kind: TensorKind::FrameSet,
        n: frames.len() as u32,
        m: 1,
        d: d as u32,
    };
    let mut w = open_writer(path)?;
    w.write_all(&header.encode())
        .map_err(|e| TensorFileError::io(path, e))?;
    write_rows(
        &mut w,
        frames.iter().flat_map(|f| f.vector.iter().copied()),
        path,
    )?;
    w.flush().map_err(|e| TensorFileError::io(path, e))
}

pub fn write_patch_grids(grids: &[PatchGrid], path: &Path) -> Result<(), TensorFileError> {
    let (m, d) = grids
        .first()
        .map(|g| (g.m_patches(), g.patch_dim()))
        .unwrap_or((0, 0));
    let header = TensorFileHeader {
        version: FORMAT_VERSION,
        kind: TensorKind::PatchSet,
        n: grids.len() as u32,
        m: m as u32,
        d: d as u32,
    };
    let mut w = open_writer(path)?;
    w.write_all(&header.encode())
        .map_err(|e| TensorFileError::io(path, e))?;
    write_rows(
        &mut w,
        grids.iter().flat_map(|g| g.raw().iter().copied()),
        path,
    )?;
    w.flush().map_err(|e| TensorFileError::io(path, e))
}

/// Stream a patch source to disk one grid at a time; peak memory is a single
/// grid regardless of video length.
pub fn write_patches_streaming(
    source: &dyn PatchSource,
    path: &Path,
) -> Result<(), TensorFileError> {
    let header = TensorFileHeader {
        version: FORMAT_VERSION,
        kind: TensorKind::PatchSet,
        n: source.n_frames() as u32,
        m: source.m_patches() as u32,
        d: source.patch_dim() as u32,
    };
    let mut w = open_writer(path)?;
    w.write_all(&header.encode())
        .map_err(|e| TensorFileError::io(path, e))?;
    let mut it = source.open().map_err(|e| TensorFileError::Malformed {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let mut count = 0usize;
    while let Some(grid) = it.next_grid() {
        let grid = grid.map_err(|e| TensorFileError::Malformed {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        write_rows(&mut w, grid.raw().iter().copied(), path)?;
        count += 1;
    }
    if count != source.n_frames() {
        return Err(TensorFileError::Malformed {
            path: path.to_path_buf(),
            detail: format!(
                "patch source yielded {count} grids, declared {}",
                source.n_frames()
            ),
        });
    }
    w.flush().map_err(|e| TensorFileError::io(path, e))
}

/// Two-row QUERY file (frame space, then patch space). Requires both spaces
/// to share one dimension; use [`write_query_single`] per space otherwise.
pub fn write_query(query: &QueryEmbedding, path: &Path) -> Result<(), TensorFileError> {
    if query.frame_space.len() != query.patch_space.len() {
        return Err(TensorFileError::Malformed {
            path: path.to_path_buf(),
            detail: format!(
                "a two-row QUERY file needs d_f == d_p, got {} and {}; write the spaces separately",
                query.frame_space.len(),
                query.patch_space.len()
            ),
        });
    }
    let header = TensorFileHeader {
        version: FORMAT_VERSION,
        kind: TensorKind::Query,
        n: 2,
        m: 1,
        d: query.frame_space.len() as u32,
    };
    let mut w = open_writer(path)?;
    w.write_all(&header.encode())
        .map_err(|e| TensorFileError::io(path, e))?;
    write_rows(
        &mut w,
        query
            .frame_space
            .iter()
            .chain(query.patch_space.iter())
            .copied(),
        path,
    )?;
    w.flush().map_err(|e| TensorFileError::io(path, e))
}

pub fn write_query_single(vector: &[f32], path: &Path) -> Result<(), TensorFileError> {
    let header = TensorFileHeader {
        version: FORMAT_VERSION,
        kind: TensorKind::Query,
        n: 1,
        m: 1,
        d: vector.len() as u32,
    };
    let mut w = open_writer(path)?;
    w.write_all(&header.encode())
        .map_err(|e| TensorFileError::io(path, e))?;
    write_rows(&mut w, vector.iter().copied(), path)?;
    w.flush().map_err(|e| TensorFileError::io(path, e))
}

pub fn write_attention(dump: &AttentionDump, path: &Path) -> Result<(), TensorFileError> {
    let header = TensorFileHeader {
        version: FORMAT_VERSION,
        kind: TensorKind::Attention,
        n: dump.n_frames() as u32,
        m: dump.m_patches() as u32,
        d: 1,
    };
    let mut w = open_writer(path)?;
    w.write_all(&header.encode())
        .map_err(|e| TensorFileError::io(path, e))?;
    write_rows(&mut w, dump.weights().iter().map(|&v| v as f32), path)?;
    w.flush().map_err(|e| TensorFileError::io(path, e))
}

// ---------------------------------------------------------------------------
// Sidecar manifest and lazy patch source
// ---------------------------------------------------------------------------

/// JSON sidecar describing one video's files. Paths are relative to the
/// manifest's own directory.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct VideoManifest {
    pub video_id: String,
    pub fps: f64,
    pub frame_file: String,
    pub patch_file: Option<String>,
    pub n_frames: usize,
}

/// Patch grids read lazily from a PATCH_SET file. Each `open` call gets an
/// independent file handle, so concurrent consumers do not interfere.
pub struct FilePatchSource {
    path: PathBuf,
    header: TensorFileHeader,
    opts: LoadOptions,
}

impl FilePatchSource {
    pub fn new(path: &Path, opts: LoadOptions) -> Result<Self, TensorFileError> {
        let header = read_header(path)?;
        validate_header(&header, path)?;
        if header.kind != TensorKind::PatchSet {
            return Err(TensorFileError::WrongKind {
                path: path.to_path_buf(),
                expected: TensorKind::PatchSet,
                found: header.kind,
            });
        }
        let meta = std::fs::metadata(path).map_err(|e| TensorFileError::io(path, e))?;
        let expected = header.payload_len();
        let found = meta.len().saturating_sub(HEADER_LEN as u64);
        if found != expected {
            return Err(TensorFileError::SizeMismatch {
                path: path.to_path_buf(),
                expected,
                found,
            });
        }
        Ok(Self {
            path: path.to_path_buf(),
            header,
            opts,
        })
    }
}

impl PatchSource for FilePatchSource {
    fn n_frames(&self) -> usize {
        self.header.n as usize
    }

    fn m_patches(&self) -> usize {
        self.header.m as usize
    }

    fn patch_dim(&self) -> usize {
        self.header.d as usize
    }

    fn open(&self) -> Result<Box<dyn PatchIter + Send + '_>, PatchStreamError> {
        let mut file = File::open(&self.path).map_err(|e| PatchStreamError::Io(e.to_string()))?;
        file.seek(SeekFrom::Start(HEADER_LEN as u64))
            .map_err(|e| PatchStreamError::Io(e.to_string()))?;
        Ok(Box::new(FilePatchIter {
            reader: BufReader::new(file),
            header: self.header,
            opts: self.opts,
            next_frame: 0,
        }))
    }
}

struct FilePatchIter {
    reader: BufReader<File>,
    header: TensorFileHeader,
    opts: LoadOptions,
    next_frame: usize,
}

impl PatchIter for FilePatchIter {
    fn next_grid(&mut self) -> Option<Result<PatchGrid, PatchStreamError>> {
        if self.next_frame >= self.header.n as usize {
            return None;
        }
        let m = self.header.m as usize;
        let d = self.header.d as usize;
        let mut bytes = vec![0u8; m * d * 4];
        if let Err(e) = self.reader.read_exact(&mut bytes) {
            return Some(Err(PatchStreamError::Io(e.to_string())));
        }
        let mut data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let frame = self.next_frame;
        for (i, row) in data.chunks_exact_mut(d).enumerate() {
            if self.opts.renormalize {
                renormalize(row);
            }
            if !self.opts.validate_norms {
                continue;
            }
            let norm = l2_norm(row);
            if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOLERANCE {
                return Some(Err(PatchStreamError::Invalid {
                    frame,
                    detail: format!("patch {i} has norm {norm}"),
                }));
            }
        }
        self.next_frame += 1;
        Some(
            PatchGrid::new(frame, m, d, data).map_err(|e| PatchStreamError::Invalid {
                frame,
                detail: e.to_string(),
            }),
        )
    }
}

/// Assemble a `VideoEmbeddingSet` from a sidecar manifest: frame embeddings
/// are loaded eagerly, patch grids stay behind a lazy file-backed source.
pub fn load_video(
    manifest_path: &Path,
    opts: LoadOptions,
) -> Result<VideoEmbeddingSet, TensorFileError> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| TensorFileError::io(manifest_path, e))?;
    let manifest: VideoManifest =
        serde_json::from_str(&text).map_err(|e| TensorFileError::Manifest {
            path: manifest_path.to_path_buf(),
            detail: e.to_string(),
        })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let frame_path = base.join(&manifest.frame_file);
    let frames = match load_tensor_file(&frame_path, opts)? {
        LoadedTensor::Frames(set) => set.frames,
        other => {
            return Err(TensorFileError::WrongKind {
                path: frame_path,
                expected: TensorKind::FrameSet,
                found: kind_of(&other),
            })
        }
    };
    if frames.len() != manifest.n_frames {
        return Err(TensorFileError::Manifest {
            path: manifest_path.to_path_buf(),
            detail: format!(
                "manifest declares {} frames, frame file holds {}",
                manifest.n_frames,
                frames.len()
            ),
        });
    }
    let patches: Option<Arc<dyn PatchSource>> = match &manifest.patch_file {
        Some(rel) => {
            let src = FilePatchSource::new(&base.join(rel), opts)?;
            if src.n_frames() != frames.len() {
                return Err(TensorFileError::Manifest {
                    path: manifest_path.to_path_buf(),
                    detail: format!(
                        "patch file holds {} grids for {} frames",
                        src.n_frames(),
                        frames.len()
                    ),
                });
            }
            Some(Arc::new(src))
        }
        None => None,
    };
    Ok(VideoEmbeddingSet::new(
        manifest.video_id,
        manifest.fps,
        frames,
        patches,
    )?)
}
