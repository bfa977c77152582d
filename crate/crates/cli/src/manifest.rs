//! Run manifests and the hashing and atomic-write plumbing behind them.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// What a command consumed and produced, with fully resolved settings.
///
/// `config` holds the effective values after profile, file, and
/// environment overrides, so the manifest alone suffices to reproduce a
/// run. Timings are wall clock and vary between runs; everything else is
/// deterministic for fixed inputs and seed.
#[derive(Serialize)]
pub struct Manifest<C: Serialize> {
    pub command: &'static str,
    pub config: C,
    /// Input name to the path given on the command line.
    pub inputs: BTreeMap<&'static str, String>,
    /// Git-style digest of the input files: each file hashed as
    /// `blob <len>\0<bytes>` (SHA-256), then the sorted
    /// `<digest>  <name>` lines hashed together.
    pub input_hash: String,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    pub timings_s: BTreeMap<&'static str, f64>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn blob_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

/// Combined digest over named files; the entry order does not matter.
pub fn digest_files(entries: &[(String, PathBuf)]) -> std::io::Result<String> {
    let mut lines = Vec::with_capacity(entries.len());
    for (name, path) in entries {
        lines.push(format!("{}  {name}\n", blob_digest(&fs::read(path)?)));
    }
    lines.sort();
    let mut h = Sha256::new();
    for line in &lines {
        h.update(line.as_bytes());
    }
    Ok(hex(&h.finalize()))
}

/// Every regular file directly inside `dir`, named `<prefix>/<file>`.
pub fn dir_entries(prefix: &str, dir: &Path) -> std::io::Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            out.push((format!("{prefix}/{}", entry.file_name().to_string_lossy()), entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

/// Serializes to a sibling temp file and renames it into place, so a
/// crash never leaves a truncated JSON next to good outputs.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
