//! Run metadata, digests, and output plumbing shared by every subcommand.
//!
//! Every emitted artifact embeds the tool version, the fully resolved
//! configuration, and a SHA-256 digest of each input file, so any result can
//! be traced back to exactly what produced it. JSON artifacts carry this as
//! a `meta` object; CSV artifacts carry it as leading `#` comment lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub const TOOL_NAME: &str = "vlmp";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, serde::Serialize)]
pub struct RunMeta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
}

impl RunMeta {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            command: command.to_string(),
            seed,
            config,
            inputs: BTreeMap::new(),
        }
    }

    pub fn digest_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for b in digest {
            write!(hex, "{b:02x}").unwrap();
        }
        self.inputs.insert(path.display().to_string(), hex);
        Ok(())
    }

    /// `#`-prefixed comment block for CSV artifacts.
    pub fn csv_header(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# tool={} version={}", self.tool, self.version).unwrap();
        writeln!(out, "# command={} seed={}", self.command, self.seed).unwrap();
        writeln!(out, "# config={}", self.config).unwrap();
        for (path, digest) in &self.inputs {
            writeln!(out, "# input={} sha256={}", path, digest).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

/// Write data to `--out` when given, stdout otherwise.
pub fn emit(out: Option<&Path>, data: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)
                        .with_context(|| format!("creating {}", parent.display()))?;
                }
            }
            std::fs::write(path, data).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        None => {
            std::io::stdout().write_all(data.as_bytes())?;
            Ok(())
        }
    }
}

/// Resolve the output directory: explicit flag, then VLMP_OUT_DIR, then the
/// working directory.
pub fn resolve_out_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os("VLMP_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Minimal CSV field formatting: our fields are numbers and identifiers, so
/// quoting is needed only if a value ever carries a comma or quote.
pub fn csv_field(value: &str) -> String {
    if value.contains([',', '"', '\n']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

/// Shortest round-trip float formatting; empty for None.
pub fn csv_float(value: Option<f64>) -> String {
    value.map(|v| format!("{v}")).unwrap_or_default()
}

pub fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("bad number {s:?}"))
        })
        .collect()
}

pub fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .with_context(|| format!("bad integer {s:?}"))
        })
        .collect()
}
