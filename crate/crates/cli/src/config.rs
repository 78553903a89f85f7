//! Experiment configuration: one JSON document, dotted-path overrides, content hash.

use cea_core::contact::ModelConfig;
use cea_core::geodesics::Scheme;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the experiment named on the command line when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    pub model: ModelConfig,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    /// Number of seeded samples (pairs, fields or initial data).
    #[serde(default = "defaults::count")]
    pub count: usize,
    /// Band limit of the seeded fields.
    #[serde(default = "defaults::max_freq")]
    pub max_freq: usize,
    #[serde(default = "defaults::m_list")]
    pub m_list: Vec<usize>,
    #[serde(default = "defaults::epsilons")]
    pub epsilons: Vec<f64>,
    /// Bound the smallest degenerate `c_m` must fall below.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Absolute end time; overrides `t_fraction`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// End time as a fraction of the predicted blowup time.
    #[serde(default = "defaults::t_fraction")]
    pub t_fraction: f64,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "defaults::record_every")]
    pub record_every: usize,
}

mod defaults {
    pub fn seed() -> u64 {
        1
    }
    pub fn count() -> usize {
        10
    }
    pub fn max_freq() -> usize {
        3
    }
    pub fn m_list() -> Vec<usize> {
        vec![1, 2, 4]
    }
    pub fn epsilons() -> Vec<f64> {
        vec![1e-2, 5e-3, 2.5e-3]
    }
    pub fn t_fraction() -> f64 {
        0.5
    }
    pub fn dt() -> f64 {
        1e-3
    }
    pub fn record_every() -> usize {
        10
    }
}

impl ExperimentConfig {
    /// Parses `text`, applies `key=value` overrides and validates the result.
    pub fn resolve(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc: Value =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("parse: {e}")))?;
        for item in overrides {
            apply_override(&mut doc, item)?;
        }
        let cfg: Self = serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.t_fraction > 0.0 && self.t_fraction.is_finite()) {
            return bad("t_fraction must be positive");
        }
        if matches!(self.t_end, Some(t) if !(t > 0.0 && t.is_finite())) {
            return bad("t_end must be positive");
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1");
        }
        if self.m_list.contains(&0) {
            return bad("m_list entries must be positive");
        }
        if self.epsilons.iter().any(|e| e.is_nan() || *e <= 0.0) {
            return bad("epsilons must be positive");
        }
        if self.epsilons.windows(2).any(|p| p[1] >= p[0]) {
            return bad("epsilons must be strictly decreasing");
        }
        Ok(())
    }

    /// Canonical JSON of the resolved configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex sha256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `a.b.c=value`, where value is JSON when it parses and a bare string otherwise.
fn apply_override(doc: &mut Value, item: &str) -> Result<(), CliError> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{item}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!(
            "override `{item}` has an empty key"
        )));
    }
    let mut node = doc;
    for key in &keys[..keys.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| {
            CliError::Config(format!("override `{path}` descends into a non-object"))
        })?;
        node = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| CliError::Config(format!("override `{path}` descends into a non-object")))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}
