//! Run manifests: what was run, on which inputs, producing which files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

pub const TOOL: &str = "gaze-align";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// File name of the manifest inside an output directory.
pub const DIR_MANIFEST: &str = "run_manifest.json";
/// Suffix appended to an output file's name for its manifest.
pub const FILE_MANIFEST_SUFFIX: &str = ".run_manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileRecord {
    pub fn of(path: &Path, bytes: &[u8]) -> Self {
        Self { path: path.display().to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    /// Every setting that influences the outputs. The worker count is
    /// deliberately absent: it never changes a byte of output.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    /// Content hashes of every input file read, in read order.
    pub inputs: Vec<FileRecord>,
    /// Paths relative to the manifest's directory.
    pub outputs: Vec<FileRecord>,
    /// RFC 3339; taken from `SOURCE_DATE_EPOCH` when set.
    pub timestamp: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn timestamp() -> String {
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| OffsetDateTime::from_unix_timestamp(secs).ok())
        .unwrap_or_else(OffsetDateTime::now_utc);
    now.format(&Rfc3339).unwrap_or_default()
}

/// Where the manifest for an output file lives.
pub fn manifest_beside(file: &Path) -> PathBuf {
    let mut name = file.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(FILE_MANIFEST_SUFFIX);
    file.with_file_name(name)
}

/// Loads the manifest written next to `file` and checks it came from
/// `command`.
pub fn load_manifest_for(file: &Path, command: &str) -> anyhow::Result<RunManifest> {
    let path = manifest_beside(file);
    let text = std::fs::read_to_string(&path).with_context(|| {
        format!("{}: no run manifest beside this input (expected {})", file.display(), path.display())
    })?;
    let m: RunManifest =
        serde_json::from_str(&text).with_context(|| format!("{}: malformed run manifest", path.display()))?;
    if m.tool != TOOL {
        bail!("{}: produced by {:?}, not {TOOL}", path.display(), m.tool);
    }
    if m.command != command {
        bail!("{}: produced by `{}`, expected `{command}`", file.display(), m.command);
    }
    Ok(m)
}

/// Collects the files written by one run so they can be listed, hashed,
/// in its manifest. All writes go through here, sequentially.
#[derive(Debug)]
pub struct Outputs {
    root: PathBuf,
    records: Vec<FileRecord>,
}

impl Outputs {
    pub fn in_dir(root: impl Into<PathBuf>) -> anyhow::Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root, records: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: impl AsRef<Path>, bytes: &[u8]) -> anyhow::Result<()> {
        let rel = rel.as_ref();
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.records.push(FileRecord::of(rel, bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: impl AsRef<Path>, value: &T) -> anyhow::Result<()> {
        self.write(rel, &to_json_bytes(value)?)
    }

    /// Writes the run manifest as `manifest_rel` under the output root.
    pub fn finish(
        self,
        manifest_rel: impl AsRef<Path>,
        command: &str,
        config: serde_json::Value,
        seeds: BTreeMap<String, u64>,
        inputs: Vec<FileRecord>,
    ) -> anyhow::Result<RunManifest> {
        let manifest = RunManifest {
            tool: TOOL.into(),
            tool_version: TOOL_VERSION.into(),
            command: command.into(),
            config,
            seeds,
            inputs,
            outputs: self.records,
            timestamp: timestamp(),
        };
        let path = self.root.join(manifest_rel);
        std::fs::write(&path, to_json_bytes(&manifest)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Reads a whole input file and records its hash.
pub fn read_input(path: &Path) -> anyhow::Result<(Vec<u8>, FileRecord)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let record = FileRecord::of(path, &bytes);
    Ok((bytes, record))
}

pub fn read_input_text(path: &Path) -> anyhow::Result<(String, FileRecord)> {
    let (bytes, record) = read_input(path)?;
    let text = String::from_utf8(bytes).with_context(|| format!("{}: not UTF-8", path.display()))?;
    Ok((text, record))
}
