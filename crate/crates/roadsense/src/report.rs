//! Report files: JSON payload, tidy CSV, per-cell summary and run manifest.
//!
//! Everything except the manifest is a pure function of config and seeds;
//! clock readings live only in `manifest.json`.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use roadsense_core::coverage::CoverageReport;
use roadsense_core::experiment::{MetricsReport, SCHEMA_VERSION};
use roadsense_core::metrics::Metrics;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::{write_json, write_text, IoError};

pub const REPORT_FILE: &str = "report.json";
pub const TIDY_FILE: &str = "cells.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `strategy,model,budget,seed,metric,value`, one row per metric per cell.
pub fn tidy_csv(report: &MetricsReport) -> String {
    let mut out = String::from("strategy,model,budget,seed,metric,value\n");
    for c in report.cells() {
        for (name, value) in Metrics::NAMES.iter().zip(c.metrics.values()) {
            out.push_str(&format!("{},{},{},{},{name},{value}\n", c.strategy, c.model, c.budget, c.seed));
        }
        out.push_str(&format!("{},{},{},{},mape_excluded,{}\n", c.strategy, c.model, c.budget, c.seed, c.metrics.mape_excluded));
    }
    out
}

/// Mean and standard deviation per cell and metric.
pub fn summary_csv(report: &MetricsReport) -> String {
    let mut out = String::from("strategy,model,budget,metric,mean,std,n\n");
    for s in &report.summary {
        for (name, m) in [("mse", s.mse), ("rmse", s.rmse), ("mae", s.mae), ("mape_pct", s.mape_pct)] {
            out.push_str(&format!("{},{},{},{name},{},{},{}\n", s.strategy, s.model, s.budget, m.mean, m.std, m.n));
        }
    }
    out
}

pub fn coverage_csv(report: &CoverageReport) -> String {
    let mut out = String::from("road_class,segments,sensors_before");
    for b in &report.budgets {
        out.push_str(&format!(",sensors_after_{b}"));
    }
    out.push('\n');
    for row in &report.rows {
        out.push_str(&format!("{},{},{}", row.road_class.as_str(), row.segments, row.sensors_before));
        for a in &row.sensors_after {
            out.push_str(&format!(",{a}"));
        }
        out.push('\n');
    }
    out
}

/// Plain-text table of mean ± std MSE and RMSE for the hybrid model.
pub fn render_table(report: &MetricsReport) -> String {
    let mut out = format!("{:<22} {:<12} {:>6} {:>22} {:>18}\n", "strategy", "model", "budget", "mse", "rmse");
    for s in &report.summary {
        out.push_str(&format!(
            "{:<22} {:<12} {:>6} {:>12.2} ± {:<7.2} {:>8.2} ± {:<7.2}\n",
            s.strategy, s.model, s.budget, s.mse.mean, s.mse.std, s.rmse.mean, s.rmse.std
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub versions: Versions,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub wall_seconds: f64,
    /// `ok`, or `partial` when some seeds failed.
    pub status: String,
    pub errors: Vec<String>,
    pub files: Vec<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub roadsense: String,
    pub report_schema: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Self { roadsense: env!("CARGO_PKG_VERSION").to_string(), report_schema: SCHEMA_VERSION }
    }
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Collects written files and stamps the manifest when finished.
pub struct RunRecorder {
    command: String,
    config_sha256: String,
    seeds: Vec<u64>,
    started: f64,
    clock: std::time::Instant,
    out_dir: PathBuf,
    files: Vec<FileDigest>,
    errors: Vec<String>,
}

impl RunRecorder {
    pub fn new(command: &str, config_bytes: &[u8], seeds: Vec<u64>, out_dir: &Path) -> Self {
        Self {
            command: command.to_string(),
            config_sha256: sha256_hex(config_bytes),
            seeds,
            started: unix_now(),
            clock: std::time::Instant::now(),
            out_dir: out_dir.to_path_buf(),
            files: Vec::new(),
            errors: Vec::new(),
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), IoError> {
        write_text(text, &self.out_dir.join(name))?;
        self.files.push(FileDigest { name: name.to_string(), sha256: sha256_hex(text.as_bytes()) });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), IoError> {
        let path = self.out_dir.join(name);
        write_json(value, &path)?;
        let bytes = std::fs::read(&path).map_err(|e| IoError::Io { path: path.clone(), source: e })?;
        self.files.push(FileDigest { name: name.to_string(), sha256: sha256_hex(&bytes) });
        Ok(())
    }

    pub fn error(&mut self, message: String) {
        self.errors.push(message);
    }

    pub fn finish(self) -> Result<Manifest, IoError> {
        let finished = unix_now();
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            command: self.command,
            config_sha256: self.config_sha256,
            seeds: self.seeds,
            versions: Versions::default(),
            started_unix: self.started,
            finished_unix: finished,
            wall_seconds: self.clock.elapsed().as_secs_f64(),
            status: if self.errors.is_empty() { "ok" } else { "partial" }.to_string(),
            errors: self.errors,
            files: self.files,
        };
        write_json(&manifest, &self.out_dir.join(MANIFEST_FILE))?;
        Ok(manifest)
    }
}

/// Writes the JSON report, tidy CSV and summary CSV.
pub fn write_report(recorder: &mut RunRecorder, report: &MetricsReport) -> Result<(), IoError> {
    recorder.json(REPORT_FILE, report)?;
    recorder.text(TIDY_FILE, &tidy_csv(report))?;
    recorder.text(SUMMARY_FILE, &summary_csv(report))
}
