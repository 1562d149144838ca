use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use blockcert::{Error, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Serialize, Debug, Clone, PartialEq, Eq)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run. Contains no timestamp, so identical
/// manifests give byte-identical documents.
#[derive(Serialize, Debug)]
pub struct RunManifest {
    pub command: &'static str,
    pub config: Value,
    pub seed: u64,
    pub input_digests: BTreeMap<String, InputDigest>,
    pub tool_version: &'static str,
}

impl RunManifest {
    pub fn new(command: &'static str, config: Value, seed: u64) -> Self {
        Self {
            command,
            config,
            seed,
            input_digests: BTreeMap::new(),
            tool_version: TOOL_VERSION,
        }
    }

    /// Hashes `path` and records it under `role`.
    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<()> {
        let sha256 = digest_file(path)?;
        self.input_digests.insert(
            role.to_string(),
            InputDigest {
                path: path.display().to_string(),
                sha256,
            },
        );
        Ok(())
    }
}

#[derive(Serialize)]
struct Document<'a, R: Serialize> {
    manifest: &'a RunManifest,
    result: &'a R,
}

pub fn digest_file(path: &Path) -> Result<String> {
    let io_err = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut file = File::open(path).map_err(io_err)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(io_err)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_all(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    let target = out.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    let wrap = |e| Error::Io {
        path: target.clone(),
        source: e,
    };
    match out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(bytes).map_err(wrap)?;
            w.flush().map_err(wrap)
        }
        None => {
            let mut w = io::stdout().lock();
            w.write_all(bytes).map_err(wrap)?;
            w.flush().map_err(wrap)
        }
    }
}

/// Writes `{manifest, result}` as pretty JSON to `out`, or stdout.
pub fn emit<R: Serialize>(manifest: &RunManifest, result: &R, out: Option<&Path>) -> Result<()> {
    let doc = Document { manifest, result };
    let mut text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::InvalidInput(format!("cannot serialize output: {e}")))?;
    text.push('\n');
    write_all(out, text.as_bytes())
}

/// Tab-separated table with a header row.
pub fn write_tsv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut text = header.join("\t");
    text.push('\n');
    for row in rows {
        text.push_str(&row.join("\t"));
        text.push('\n');
    }
    write_all(Some(path), text.as_bytes())
}
