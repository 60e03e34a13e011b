use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};

pub const TRAIN_TAG: &str = "train";
pub const TEST_TAG: &str = "test";

/// One image with its observed aggregate gaze time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    /// Relative paths resolve against the manifest's directory.
    pub image_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_path: Option<String>,
    pub gaze_seconds: f64,
    pub split_tag: String,
}

/// A JSON Lines dataset description.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, records: Vec<ManifestRecord>) -> Self {
        Self {
            root: root.into(),
            records,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
        let mut records = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| PipelineError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord = serde_json::from_str(&line)
                .map_err(|e| PipelineError::Manifest(format!("{}:{}: {e}", path.display(), n + 1)))?;
            records.push(record);
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = Self { root, records };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(|e| PipelineError::Manifest(e.to_string()))?;
            out.push(b'\n');
        }
        let mut file = fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
        file.write_all(&out).map_err(|e| PipelineError::io(path, e))
    }

    /// Checks every gaze time is positive and finite and every referenced
    /// file exists.
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            if !(r.gaze_seconds > 0.0 && r.gaze_seconds.is_finite()) {
                return Err(PipelineError::Manifest(format!(
                    "record {i} ({}): gaze_seconds must be positive, got {}",
                    r.image_path, r.gaze_seconds
                )));
            }
            for p in std::iter::once(&r.image_path).chain(&r.context_path) {
                let full = self.resolve(p);
                if !full.is_file() {
                    return Err(PipelineError::Manifest(format!("record {i}: missing file {}", full.display())));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Indices of records carrying `tag`.
    pub fn tagged(&self, tag: &str) -> Vec<usize> {
        (0..self.records.len()).filter(|&i| self.records[i].split_tag == tag).collect()
    }

    /// Natural-log gaze targets, aligned with `records`.
    pub fn log_targets(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gaze_seconds.ln()).collect()
    }
}
