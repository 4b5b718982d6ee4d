//! Per-command JSON manifests: config, input and output digests.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL: &str = "newsflow";
pub const MANIFEST_DIR: &str = "manifests";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config: serde_json::Value,
    /// Paths as given in the config.
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the artifact directory.
    pub outputs: Vec<FileDigest>,
    pub notes: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        match reader.read(&mut buf)? {
            0 => break,
            n => hasher.update(&buf[..n]),
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

fn manifest_path(out: &Path, command: &str) -> PathBuf {
    out.join(MANIFEST_DIR).join(format!("{command}.json"))
}

impl Manifest {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self, CliError> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            tool: TOOL.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: serde_json::to_value(config).map_err(|e| CliError::Config(e.to_string()))?,
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: BTreeMap::new(),
        })
    }

    /// Records an input under its configured name.
    pub fn input(&mut self, label: &Path, actual: &Path) -> Result<(), CliError> {
        let sha256 = sha256_file(actual)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", actual.display())))?;
        self.inputs.push(FileDigest {
            path: label.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn output(&mut self, out: &Path, rel: &Path) -> Result<(), CliError> {
        let sha256 = sha256_file(&out.join(rel))?;
        self.outputs.push(FileDigest {
            path: rel.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.insert(key.into(), value.to_string());
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf, CliError> {
        let path = manifest_path(out, &self.command);
        std::fs::create_dir_all(path.parent().expect("manifest dir"))?;
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }

    /// Loads the manifest of an upstream command and checks that its schema
    /// matches and that its outputs are still on disk unmodified.
    pub fn read_verified(out: &Path, command: &str) -> Result<Self, CliError> {
        let path = manifest_path(out, command);
        let text = std::fs::read_to_string(&path).map_err(|_| {
            CliError::Incompatible(format!("no `{command}` manifest in {}; run `{command}` first", out.display()))
        })?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Incompatible(format!("{}: {e}", path.display())))?;
        if m.schema_version != SCHEMA_VERSION || m.tool != TOOL {
            return Err(CliError::Incompatible(format!(
                "{} has schema {} from `{}`, expected {SCHEMA_VERSION} from `{TOOL}`",
                path.display(),
                m.schema_version,
                m.tool
            )));
        }
        for f in &m.outputs {
            let actual = sha256_file(&out.join(&f.path)).ok();
            if actual.as_deref() != Some(f.sha256.as_str()) {
                return Err(CliError::Incompatible(format!(
                    "`{}` is missing or changed since `{command}` wrote it",
                    f.path
                )));
            }
        }
        Ok(m)
    }

    /// Fails when an input shared with `upstream` changed in between.
    pub fn check_inputs_against(&self, upstream: &Manifest) -> Result<(), CliError> {
        for mine in &self.inputs {
            if let Some(theirs) = upstream.inputs.iter().find(|f| f.path == mine.path) {
                if theirs.sha256 != mine.sha256 {
                    return Err(CliError::Incompatible(format!(
                        "`{}` changed since `{}` ran",
                        mine.path, upstream.command
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn output_digests(&self) -> BTreeMap<&str, &str> {
        self.outputs
            .iter()
            .map(|f| (f.path.as_str(), f.sha256.as_str()))
            .collect()
    }
}
