//! Fixed output layout, atomic writes and run manifests.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime};

use kinegen::ingest::{read_archive, write_archive};
use kinegen::{ClassLabel, Provenance, TrialSet};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Suffix of the run manifest written beside every output file.
pub const RUN_SUFFIX: &str = ".run.json";

#[derive(Clone, Debug)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn archives(&self) -> PathBuf {
        self.root.join("archives")
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn model_dir(&self, class: ClassLabel) -> PathBuf {
        self.models().join(class.to_string())
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn plots(&self) -> PathBuf {
        self.root.join("plots")
    }

    pub fn surrogate_archive(&self) -> PathBuf {
        self.archives().join("surrogate.csv")
    }

    pub fn real_archive(&self) -> PathBuf {
        self.archives().join("real.csv")
    }

    pub fn synthetic_archive(&self, class: ClassLabel) -> PathBuf {
        self.archives().join(format!("synthetic-{class}.csv"))
    }

    /// `path` relative to the workspace when inside it, for manifests.
    pub fn display_path(&self, path: &Path) -> String {
        path.strip_prefix(&self.root).unwrap_or(path).to_string_lossy().replace('\\', "/")
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(CliError::io(dir))?;
    tmp.write_all(bytes).map_err(CliError::io(path))?;
    tmp.as_file().sync_all().map_err(CliError::io(path))?;
    tmp.persist(path).map_err(|e| CliError::Io { path: path.to_owned(), source: e.error })?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(kinegen::Error::from)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(CliError::io(path))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

/// Machine-readable record of one command invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    /// RFC 3339; taken from `SOURCE_DATE_EPOCH` when set.
    pub timestamp: String,
    /// Provenance of an archive output, read back by later commands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub fn timestamp() -> String {
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<u64>().ok())
        .map(|secs| SystemTime::UNIX_EPOCH + Duration::from_secs(secs))
        .unwrap_or_else(SystemTime::now);
    humantime::format_rfc3339_seconds(now).to_string()
}

/// Accumulates inputs and outputs for a command's manifest.
pub struct Run<'a> {
    ws: &'a Workspace,
    manifest: RunManifest,
}

impl<'a> Run<'a> {
    pub fn new(ws: &'a Workspace, command: &str, config_hash: String, seed: u64) -> Self {
        Run {
            ws,
            manifest: RunManifest {
                command: command.to_owned(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                config_hash,
                seed,
                version: VERSION.to_owned(),
                timestamp: timestamp(),
                provenance: None,
                notes: Vec::new(),
            },
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path)?;
        self.manifest.inputs.push(InputRecord { path: self.ws.display_path(path), sha256 });
        Ok(())
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.manifest.notes.push(note.into());
    }

    pub fn provenance(&mut self, provenance: Provenance) {
        self.manifest.provenance = Some(provenance);
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.manifest.outputs.push(self.ws.display_path(path));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<()> {
        write_json(path, value)?;
        self.manifest.outputs.push(self.ws.display_path(path));
        Ok(())
    }

    pub fn write_archive(&mut self, path: &Path, set: &TrialSet) -> Result<()> {
        let mut buf = Vec::new();
        write_archive(set, &mut buf)?;
        self.write(path, &buf)
    }

    /// Writes the manifest to `path` and returns it.
    pub fn finish(mut self, path: &Path) -> Result<RunManifest> {
        self.manifest.outputs.sort();
        write_json(path, &self.manifest)?;
        Ok(self.manifest)
    }
}

/// Manifest path beside an output file: `x.csv` → `x.csv.run.json`.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(RUN_SUFFIX);
    PathBuf::from(s)
}

/// Loads an archive, taking its provenance from the sidecar manifest if one
/// exists and falling back to `default`.
pub fn load_archive(path: &Path, default: Provenance) -> Result<TrialSet> {
    let provenance = match std::fs::read_to_string(sidecar(path)) {
        Ok(text) => serde_json::from_str::<RunManifest>(&text).ok().and_then(|m| m.provenance).unwrap_or(default),
        Err(_) => default,
    };
    let file = std::fs::File::open(path).map_err(CliError::io(path))?;
    Ok(read_archive(std::io::BufReader::new(file), provenance)?)
}
