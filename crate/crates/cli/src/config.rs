//! Flat JSON experiment configuration shared by every subcommand.
//!
//! Keys are the field names of [`TrainConfig`] and [`SynthConfig`]; `seed`
//! feeds both. Missing keys take their defaults and unknown keys are rejected.

use std::collections::BTreeSet;
use std::path::Path;

use dtanet_core::{Error, Result, SynthConfig, TrainConfig};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub synth: SynthConfig,
}

fn keys_of<T: serde::Serialize>(value: &T) -> BTreeSet<String> {
    match serde_json::to_value(value) {
        Ok(Value::Object(map)) => map.keys().cloned().collect(),
        _ => BTreeSet::new(),
    }
}

fn pick(map: &Map<String, Value>, keys: &BTreeSet<String>) -> Value {
    Value::Object(map.iter().filter(|(k, _)| keys.contains(*k)).map(|(k, v)| (k.clone(), v.clone())).collect())
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("config is not valid JSON: {e}")))?;
        let Value::Object(map) = value else {
            return Err(Error::InvalidInput("config must be a flat JSON object".into()));
        };
        let train_keys = keys_of(&TrainConfig::default());
        let synth_keys = keys_of(&SynthConfig::default());
        let unknown: Vec<&str> =
            map.keys().filter(|k| !train_keys.contains(*k) && !synth_keys.contains(*k)).map(String::as_str).collect();
        if !unknown.is_empty() {
            return Err(Error::InvalidInput(format!("unknown config keys: {}", unknown.join(", "))));
        }
        let invalid = |e: serde_json::Error| Error::InvalidInput(format!("bad config value: {e}"));
        let cfg = ExperimentConfig {
            train: serde_json::from_value(pick(&map, &train_keys)).map_err(invalid)?,
            synth: serde_json::from_value(pick(&map, &synth_keys)).map_err(invalid)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.synth.validate()
    }

    /// Overrides the seed of both halves.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.synth.seed = seed;
        self
    }

    /// The flat document this configuration parses from.
    pub fn to_json(&self) -> Result<String> {
        let mut map = Map::new();
        for v in [serde_json::to_value(&self.synth)?, serde_json::to_value(&self.train)?] {
            if let Value::Object(m) = v {
                map.extend(m);
            }
        }
        Ok(serde_json::to_string_pretty(&Value::Object(map))?)
    }
}
