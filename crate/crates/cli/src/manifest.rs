//! Dataset manifest: the index of generated or measured records.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::formats::{atomic_write, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordKind {
    S21Sweep,
    IqRecord,
    TuningCurve,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RecordMetadata {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub applied_flux_phi0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature_k: Option<f64>,
    /// Path of the calibration sweep an IQ record should be analyzed with,
    /// relative to the manifest.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRecord {
    /// Path relative to the manifest file.
    pub path: String,
    pub kind: RecordKind,
    pub checksum_sha256: String,
    #[serde(default)]
    pub metadata: RecordMetadata,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub records: Vec<ManifestRecord>,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self::new()
    }
}

impl DatasetManifest {
    pub fn new() -> Self {
        Self {
            format: "fluxres manifest".into(),
            version: FORMAT_VERSION,
            records: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        base_dir: &Path,
        relative_path: &str,
        kind: RecordKind,
        metadata: RecordMetadata,
    ) -> CliResult<()> {
        let checksum = sha256_file(&base_dir.join(relative_path))?;
        self.records.push(ManifestRecord {
            path: relative_path.to_string(),
            kind,
            checksum_sha256: checksum,
            metadata,
        });
        Ok(())
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Io(format!("encoding manifest: {e}")))?;
        atomic_write(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(&format!("reading manifest {}", path.display()), e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        if manifest.format != "fluxres manifest" {
            return Err(CliError::Validation(format!(
                "{}: unexpected format {:?}",
                path.display(),
                manifest.format
            )));
        }
        if manifest.version != FORMAT_VERSION {
            return Err(CliError::Validation(format!(
                "{}: unsupported manifest version {}",
                path.display(),
                manifest.version
            )));
        }
        Ok(manifest)
    }

    /// Verify a record's checksum against the file next to the manifest.
    pub fn verify(&self, base_dir: &Path, record: &ManifestRecord) -> CliResult<PathBuf> {
        let path = base_dir.join(&record.path);
        let checksum = sha256_file(&path)?;
        if checksum != record.checksum_sha256 {
            return Err(CliError::Validation(format!(
                "{}: checksum mismatch (manifest {}, file {})",
                path.display(),
                record.checksum_sha256,
                checksum
            )));
        }
        Ok(path)
    }
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::io(&format!("reading {}", path.display()), e))?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    Ok(hex)
}
