use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Deterministic sub-seed: word 0 of ChaCha8 stream `stream` keyed by `root`.
pub fn split_seed(root: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream);
    rng.next_u64()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Structured outcome of one verification run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config_hash: String,
    pub version: String,
    pub flags: BTreeMap<String, bool>,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub table: Table,
}

impl ExperimentReport {
    pub fn new(experiment: &str) -> Self {
        Self {
            experiment: experiment.to_string(),
            ..Self::default()
        }
    }

    pub fn flag(&mut self, name: &str, pass: bool) {
        self.flags.insert(name.to_string(), pass);
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn columns(&mut self, names: &[&str]) {
        self.table.columns = names.iter().map(|s| s.to_string()).collect();
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        self.table.rows.push(row);
    }

    /// True when every flag passed (vacuously for none).
    pub fn all_pass(&self) -> bool {
        self.flags.values().all(|&p| p)
    }

    pub fn failed_flags(&self) -> Vec<&str> {
        self.flags
            .iter()
            .filter(|(_, &p)| !p)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    /// Merges another report's flags, metrics and notes under `prefix.`.
    pub fn absorb(&mut self, prefix: &str, other: &ExperimentReport) {
        for (k, v) in &other.flags {
            self.flags.insert(format!("{prefix}.{k}"), *v);
        }
        for (k, v) in &other.metrics {
            self.metrics.insert(format!("{prefix}.{k}"), *v);
        }
        self.notes
            .extend(other.notes.iter().map(|n| format!("{prefix}: {n}")));
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.table.columns)?;
        for row in &self.table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Human-readable digest: flags, then metrics, then notes.
    pub fn summary(&self) -> String {
        let mut s = format!("experiment: {}\n", self.experiment);
        if !self.version.is_empty() {
            s += &format!("version: {}\n", self.version);
        }
        if !self.config_hash.is_empty() {
            s += &format!("config: {}\n", self.config_hash);
        }
        for (k, v) in &self.flags {
            s += &format!("[{}] {k}\n", if *v { "PASS" } else { "FAIL" });
        }
        for (k, v) in &self.metrics {
            s += &format!("{k} = {v:.6e}\n");
        }
        for n in &self.notes {
            s += &format!("note: {n}\n");
        }
        s
    }
}
