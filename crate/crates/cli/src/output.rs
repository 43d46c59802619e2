use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nerd_core::digest::{hex, sha256};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Writes through a temporary file in the same directory and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| CliError::io(format!("creating {}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .map_err(|e| CliError::io(format!("temporary file in {}: {e}", dir.display())))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| CliError::io(format!("renaming into {}: {}", path.display(), e.error)))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::config(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))
}

/// Parses a TOML or JSON config file (by extension, JSON otherwise tried
/// first) into a JSON value.
pub fn read_config(path: &Path) -> CliResult<Value> {
    let text = String::from_utf8(read_file(path)?)
        .map_err(|_| CliError::config(format!("{} is not UTF-8", path.display())))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let parsed = if is_toml {
        toml::from_str::<Value>(&text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str::<Value>(&text)
            .or_else(|json_err| toml::from_str::<Value>(&text).map_err(|_| json_err.to_string()))
    };
    parsed.map_err(|e| CliError::config(format!("parsing {}: {e}", path.display())))
}

/// Deserializes `value` into `T`, rejecting keys `T` does not know.
pub fn typed_config<T: Serialize + DeserializeOwned>(value: Value, what: &str) -> CliResult<T> {
    let known = match serde_json::to_value(
        serde_json::from_value::<T>(Value::Object(Default::default()))
            .map_err(|e| CliError::config(format!("{what}: {e}")))?,
    ) {
        Ok(Value::Object(map)) => map,
        _ => return Err(CliError::config(format!("{what}: not a table"))),
    };
    if let Value::Object(map) = &value {
        if let Some(bad) = map.keys().find(|k| !known.contains_key(*k)) {
            return Err(CliError::config(format!("{what}: unknown key \"{bad}\"")));
        }
    } else {
        return Err(CliError::config(format!("{what}: expected a table of settings")));
    }
    serde_json::from_value(value).map_err(|e| CliError::config(format!("{what}: {e}")))
}

/// Everything needed to rerun a command; written next to its outputs.
#[derive(Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: &'static str,
    pub config: Value,
    /// Settings taken from flags rather than the config file or defaults.
    pub overrides: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    /// SHA-256 of each input file.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
}

pub struct Run {
    manifest: RunManifest,
    started: Instant,
}

impl Run {
    pub fn new(subcommand: &str) -> Self {
        Run {
            manifest: RunManifest {
                subcommand: subcommand.to_string(),
                version: env!("CARGO_PKG_VERSION"),
                config: Value::Null,
                overrides: Vec::new(),
                seeds: BTreeMap::new(),
                inputs: BTreeMap::new(),
                outputs: Vec::new(),
                wall_clock_seconds: 0.0,
            },
            started: Instant::now(),
        }
    }

    pub fn config(&mut self, config: &impl Serialize) {
        self.manifest.config = serde_json::to_value(config).unwrap_or(Value::Null);
    }

    pub fn overrides(&mut self, names: Vec<String>) {
        self.manifest.overrides = names;
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.manifest.seeds.insert(name.to_string(), seed);
    }

    /// Reads an input file and records its digest.
    pub fn input(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = read_file(path)?;
        self.manifest
            .inputs
            .insert(path.display().to_string(), hex(&sha256(&bytes)));
        Ok(bytes)
    }

    pub fn output(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        write_atomic(path, bytes)?;
        self.manifest.outputs.push(path.display().to_string());
        Ok(())
    }

    pub fn output_json<T: Serialize + ?Sized>(&mut self, path: &Path, value: &T) -> CliResult<()> {
        write_json(path, value)?;
        self.manifest.outputs.push(path.display().to_string());
        Ok(())
    }

    pub fn finish(mut self, manifest_path: &Path) -> CliResult<()> {
        self.manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        write_json(manifest_path, &self.manifest)
    }
}

/// `out.manifest.json` beside a file output.
pub fn manifest_beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}
