//! Versioned run reports shared by the command-line harness.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::costmodel::CostEval;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    /// Per-iteration (or per-epoch) series, all of one length per run.
    pub metrics: BTreeMap<String, Vec<f64>>,
    pub summary: BTreeMap<String, f64>,
    pub artifacts: Value,
}

impl SeedReport {
    pub fn new(seed: u64) -> Self {
        Self { seed, metrics: BTreeMap::new(), summary: BTreeMap::new(), artifacts: Value::Null }
    }

    /// True when every metric series has the same length.
    pub fn consistent(&self) -> bool {
        let mut lens = self.metrics.values().map(Vec::len);
        match lens.next() {
            Some(first) => lens.all(|l| l == first),
            None => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub config: Value,
    pub seeds: Vec<SeedReport>,
    pub costs: Vec<CostEval>,
    pub wall_clock_ms: f64,
}

impl RunReport {
    pub fn new(command: &str, config: Value) -> Self {
        Self { schema_version: SCHEMA_VERSION, command: command.into(), config, seeds: vec![], costs: vec![], wall_clock_ms: 0.0 }
    }

    /// Copy with wall-clock fields zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self { wall_clock_ms: 0.0, ..self.clone() }
    }
}
