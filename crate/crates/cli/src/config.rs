//! Config files, seed lists and data sources.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use qmldesk_core::dataset::{generate, DatasetSpec};
use qmldesk_core::rng::stream;
use qmldesk_core::Dataset;

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "QMLDESK_SEED";

/// Parses `"3"`, `"1,2,7"` or half-open ranges such as `"0..10"`.
pub fn parse_seed_list(s: &str) -> CliResult<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || CliError::config(format!("invalid seed `{part}`"));
        match part.split_once("..") {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a >= b {
                    return Err(bad());
                }
                out.extend(a..b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(CliError::config("seed list is empty"));
    }
    Ok(out)
}

/// Flag first, then the config's `seeds`, then the environment, then 0.
pub fn resolve_seeds(flag: Option<&str>, from_config: Option<Vec<u64>>) -> CliResult<Vec<u64>> {
    if let Some(s) = flag {
        return parse_seed_list(s);
    }
    if let Some(seeds) = from_config {
        if seeds.is_empty() {
            return Err(CliError::config("`seeds` must list at least one seed"));
        }
        return Ok(seeds);
    }
    match std::env::var(SEED_ENV) {
        Ok(s) => parse_seed_list(&s),
        Err(_) => Ok(vec![0]),
    }
}

pub fn load_config_value(path: Option<&Path>) -> CliResult<Value> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
            let v: Value = serde_json::from_str(&text)?;
            if !v.is_object() {
                return Err(CliError::config("config must be a JSON object"));
            }
            Ok(v)
        }
        None => Ok(Value::Object(Default::default())),
    }
}

/// Overlays `user` on `defaults`, recursing into objects present in both.
/// Single-key objects are enum values and are replaced whole.
pub fn merge(defaults: &mut Value, user: Value) {
    match (defaults, user) {
        (Value::Object(d), Value::Object(u)) => {
            for (k, v) in u {
                let recurse = matches!(d.get(&k), Some(Value::Object(inner)) if inner.len() > 1) && v.is_object();
                if recurse {
                    merge(d.get_mut(&k).expect("present"), v);
                } else {
                    d.insert(k, v);
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn resolve<T: Serialize + DeserializeOwned>(defaults: &T, user: Value) -> CliResult<T> {
    let mut v = serde_json::to_value(defaults)?;
    merge(&mut v, user);
    Ok(serde_json::from_value(v)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    File {
        path: PathBuf,
        #[serde(default = "yes")]
        labelled: bool,
    },
    Generate(DatasetSpec),
}

fn yes() -> bool {
    true
}

impl DataSource {
    /// Generated data uses a stream of its own so that it does not depend on
    /// what the experiment later draws.
    pub fn load(&self, seed: u64, min_norm: bool) -> CliResult<Dataset> {
        let ds = match self {
            DataSource::File { path, labelled } => {
                let f = std::fs::File::open(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
                Dataset::read_csv(f, *labelled)?
            }
            DataSource::Generate(spec) => generate(spec, &mut stream(seed, "dataset", 0, "generate"))?,
        };
        Ok(if min_norm { ds.min_norm_normalized()? } else { ds })
    }
}

pub fn require_data(data: &Option<DataSource>) -> CliResult<&DataSource> {
    data.as_ref().ok_or_else(|| CliError::config("config needs a `data` entry (a dataset spec with `kind`, or `path`)"))
}
