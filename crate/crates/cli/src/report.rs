//! Machine-readable experiment reports and their artifact files.
//!
//! A report is deterministic for a fixed config and seed: ordered maps,
//! no timestamps, and a content hash binding the report to its inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use chiplink_core::protocol::Shots;
use chiplink_core::serial::{matrix_csv, MatrixJson, MatrixPart};
use chiplink_core::tomography::StateCounts;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
}

impl Metric {
    pub fn point(value: f64) -> Self {
        Self { value, std: None }
    }

    pub fn with_std(value: f64, std: f64) -> Self {
        Self { value, std: Some(std) }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    /// Echo of the resolved configuration.
    pub config: serde_json::Value,
    pub content_hash: String,
    pub seed: u64,
    pub shots: Shots,
    pub metrics: BTreeMap<String, Metric>,
    pub notes: Vec<String>,
    /// Artifact name to path, relative to the report.
    pub artifacts: BTreeMap<String, String>,
}

impl Report {
    pub fn new(experiment: &str, config: &impl Serialize, seed: u64, shots: Shots) -> Result<Self> {
        let config_value = serde_json::to_value(config)?;
        let canonical = serde_json::to_string(&config_value)?;
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let content_hash = format!("sha256:{}", hex::encode(hasher.finalize()));
        Ok(Self {
            experiment: experiment.into(),
            config: config_value,
            content_hash,
            seed,
            shots,
            metrics: BTreeMap::new(),
            notes: Vec::new(),
            artifacts: BTreeMap::new(),
        })
    }

    pub fn metric(&mut self, name: &str, metric: Metric) -> &mut Self {
        self.metrics.insert(name.into(), metric);
        self
    }

    pub fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.notes.push(text.into());
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(format!("{}\n", serde_json::to_string_pretty(self)?))
    }
}

/// The published schema the report files validate against.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

/// Collects artifact files under the output directory.
pub struct ArtifactWriter {
    dir: PathBuf,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output dir {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_report(&self, report: &Report) -> Result<PathBuf> {
        let path = self.dir.join("report.json");
        std::fs::write(&path, report.to_json()?)?;
        Ok(path)
    }

    /// Write one matrix as real/imaginary CSV plus the JSON interchange
    /// form; records the artifacts in the report.
    pub fn write_matrix(
        &self,
        report: &mut Report,
        name: &str,
        matrix: &nalgebra::DMatrix<num_complex::Complex64>,
        labels: Option<&[String]>,
    ) -> Result<()> {
        let matrices = self.dir.join("matrices");
        std::fs::create_dir_all(&matrices)?;
        let real = matrices.join(format!("{name}_real.csv"));
        let imag = matrices.join(format!("{name}_imag.csv"));
        let json = matrices.join(format!("{name}.json"));
        std::fs::write(&real, matrix_csv(matrix, MatrixPart::Real, labels))?;
        std::fs::write(&imag, matrix_csv(matrix, MatrixPart::Imaginary, labels))?;
        std::fs::write(&json, serde_json::to_string_pretty(&MatrixJson::from_matrix(matrix))?)?;
        report.artifacts.insert(format!("{name}_real_csv"), rel(&self.dir, &real));
        report.artifacts.insert(format!("{name}_imag_csv"), rel(&self.dir, &imag));
        report.artifacts.insert(format!("{name}_json"), rel(&self.dir, &json));
        Ok(())
    }

    /// Write tomography counts as JSONL, one line per (input, setting).
    pub fn write_counts(
        &self,
        report: &mut Report,
        tables: &[(String, &StateCounts)],
    ) -> Result<()> {
        let path = self.dir.join("counts.jsonl");
        let mut out = String::new();
        for (input, counts) in tables {
            for (setting, table) in &counts.tables {
                let line = serde_json::json!({
                    "input": input,
                    "setting": setting,
                    "outcomes": {
                        "00": table[0],
                        "01": table[1],
                        "10": table[2],
                        "11": table[3],
                    },
                });
                out.push_str(&serde_json::to_string(&line)?);
                out.push('\n');
            }
        }
        std::fs::write(&path, out)?;
        report.artifacts.insert("counts".into(), rel(&self.dir, &path));
        Ok(())
    }

    pub fn write_named(&self, report: &mut Report, name: &str, file: &str, text: &str) -> Result<()> {
        let path = self.dir.join(file);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, text)?;
        report.artifacts.insert(name.into(), rel(&self.dir, &path));
        Ok(())
    }
}

fn rel(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir).unwrap_or(path).display().to_string()
}
