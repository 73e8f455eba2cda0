use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{runtime, CliError};

pub const SCHEMA_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Render one CSV artifact: a `# schema_version` comment line, a header
/// row, then the data rows. Floats go through `Display`, which prints the
/// shortest representation that round-trips.
pub fn csv_bytes<I>(header: &[&str], rows: I) -> Result<Vec<u8>, CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut body = csv::Writer::from_writer(Vec::new());
    body.write_record(header).map_err(|e| runtime(format!("csv: {e}")))?;
    for row in rows {
        body.write_record(&row).map_err(|e| runtime(format!("csv: {e}")))?;
    }
    let data = body
        .into_inner()
        .map_err(|e| runtime(format!("csv: {e}")))?;
    let mut out = format!("# schema_version={SCHEMA_VERSION}\n").into_bytes();
    out.extend_from_slice(&data);
    Ok(out)
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    tool_version: &'a str,
    command: &'a str,
    config_sha256: &'a str,
    master_seed: u64,
    created_unix: u64,
    wall_ms: u64,
    files: &'a [ManifestEntry],
}

/// Output directory of one command invocation. Every file written through
/// the sink is checksummed and listed in a closing `manifest.json`.
pub struct ArtifactSink {
    dir: PathBuf,
    command: String,
    config_sha256: String,
    master_seed: u64,
    started: Instant,
    files: Vec<ManifestEntry>,
}

impl ArtifactSink {
    /// Create the directory and drop the effective-config echo into it.
    pub fn create(
        dir: &Path,
        command: &str,
        effective_config: &str,
        master_seed: u64,
    ) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
        let mut sink = ArtifactSink {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config_sha256: sha256_hex(effective_config.as_bytes()),
            master_seed,
            started: Instant::now(),
            files: Vec::new(),
        };
        sink.write("config.effective.toml", effective_config.as_bytes())?;
        Ok(sink)
    }

    /// Like `create`, but for commands without a config file (`report`):
    /// the checksum covers the primary input instead.
    pub fn create_for_input(
        dir: &Path,
        command: &str,
        input: &[u8],
        master_seed: u64,
    ) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(ArtifactSink {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config_sha256: sha256_hex(input),
            master_seed,
            started: Instant::now(),
            files: Vec::new(),
        })
    }

    pub fn config_sha256(&self) -> &str {
        &self.config_sha256
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)
            .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(ManifestEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)
            .map_err(|e| runtime(format!("cannot serialize {name}: {e}")))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Write `manifest.json` listing every other emitted file.
    pub fn finish(self) -> Result<PathBuf, CliError> {
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            config_sha256: &self.config_sha256,
            master_seed: self.master_seed,
            created_unix,
            wall_ms: self.started.elapsed().as_millis() as u64,
            files: &self.files,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| runtime(format!("cannot serialize manifest: {e}")))?;
        bytes.push(b'\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, &bytes)
            .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}
