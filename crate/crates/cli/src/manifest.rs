use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
    /// A dependency failed or was not run.
    Skipped,
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    /// Input role → SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub failed_stage: Option<String>,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: &str, seed: Option<u64>) -> Self {
        Self {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            inputs: BTreeMap::new(),
            stages: Vec::new(),
            failed_stage: None,
            wall_time_s: 0.0,
        }
    }

    pub fn status(&self, stage: &str) -> Option<StageStatus> {
        self.stages.iter().find(|s| s.name == stage).map(|s| s.status)
    }

    pub fn record(&mut self, rec: StageRecord) {
        if rec.status == StageStatus::Failed && self.failed_stage.is_none() {
            self.failed_stage = Some(rec.name.clone());
        }
        self.stages.push(rec);
    }

    pub fn any_failed(&self) -> bool {
        self.stages.iter().any(|s| s.status == StageStatus::Failed)
    }

    pub fn file_name(command: &str) -> String {
        format!("{command}_manifest.json")
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let mut s = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        s.push('\n');
        let p = dir.join(Self::file_name(&self.command));
        std::fs::write(&p, s).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        serde_json::from_str(&s).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    /// Copy with every wall time zeroed, for run-to-run comparison.
    pub fn without_timings(&self) -> Self {
        let mut m = self.clone();
        m.wall_time_s = 0.0;
        for s in &mut m.stages {
            s.wall_time_s = 0.0;
        }
        m
    }
}
