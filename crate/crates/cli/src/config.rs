//! Run configuration: defaults, then a JSON file, then `HWNAS_` environment
//! variables, then command-line flags.
//!
//! An environment variable names a config key path in upper case with `__`
//! between levels, e.g. `HWNAS_PARAMS__POPULATION=8` or
//! `HWNAS_BUDGET__DRAM_BANDWIDTH_BYTES_PER_CYCLE=16`. Values are read as
//! JSON when they parse, as strings otherwise.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use hwnas_core::accel::{fit_energy_coeffs, EnergyCoeffs, HardwareBudget};
use hwnas_core::cosearch::{Constraint, SearchParams};
use hwnas_core::repro::ReferenceData;
use hwnas_core::search_space::{default_space, SearchSpace};

pub const ENV_PREFIX: &str = "HWNAS_";

/// Explicit coefficients, or rows to fit them on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoeffSource {
    Explicit(EnergyCoeffs),
    /// `"bundled"` or a path to a reference-table JSON file.
    Fit { fit_from: String },
}

impl Default for CoeffSource {
    fn default() -> Self {
        CoeffSource::Fit {
            fit_from: "bundled".into(),
        }
    }
}

impl CoeffSource {
    pub fn resolve(&self) -> Result<EnergyCoeffs> {
        match self {
            CoeffSource::Explicit(c) => Ok(*c),
            CoeffSource::Fit { fit_from } => {
                let data = load_reference(fit_from)?;
                Ok(fit_energy_coeffs(&data.baseline_energy_rows())?)
            }
        }
    }
}

pub fn load_reference(src: &str) -> Result<ReferenceData> {
    if src == "bundled" {
        return Ok(ReferenceData::bundled());
    }
    let text = std::fs::read_to_string(src).with_context(|| format!("reading {src}"))?;
    ReferenceData::from_json(&text).with_context(|| format!("parsing {src}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub space: SearchSpace,
    pub budget: HardwareBudget,
    pub constraint: Constraint,
    pub params: SearchParams,
    pub coeffs: CoeffSource,
    pub output_dir: PathBuf,
    pub verbosity: u8,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            space: default_space(),
            budget: HardwareBudget::default(),
            constraint: Constraint::default(),
            params: SearchParams::default(),
            coeffs: CoeffSource::default(),
            output_dir: PathBuf::from("runs"),
            verbosity: 0,
        }
    }
}

/// Recursively overlays `over` onto `base`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_path(root: &mut Value, path: &[String], v: Value) -> Result<()> {
    let mut cur = root;
    for (i, key) in path.iter().enumerate() {
        let Value::Object(map) = cur else {
            bail!("config key {} is not a section", path[..i].join("."));
        };
        if i + 1 == path.len() {
            map.insert(key.clone(), v);
            return Ok(());
        }
        cur = map.entry(key.clone()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Applies `HWNAS_*` pairs to a config tree.
pub fn apply_env<I: IntoIterator<Item = (String, String)>>(root: &mut Value, vars: I) -> Result<()> {
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (k, raw) in vars {
        let path: Vec<String> = k[ENV_PREFIX.len()..]
            .split("__")
            .map(|s| s.to_ascii_lowercase())
            .collect();
        if path.iter().any(String::is_empty) {
            bail!("malformed override variable {k}");
        }
        let v = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        set_path(root, &path, v).with_context(|| format!("applying {k}"))?;
    }
    Ok(())
}

/// Defaults, overlaid by the config file (if any) and the environment.
pub fn load(file: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<RunConfig> {
    let mut tree = serde_json::to_value(RunConfig::default())?;
    if let Some(p) = file {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
        let over: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
        merge(&mut tree, over);
    }
    apply_env(&mut tree, env)?;
    let cfg: RunConfig = serde_json::from_value(tree).context("config does not match the schema")?;
    Ok(cfg)
}
