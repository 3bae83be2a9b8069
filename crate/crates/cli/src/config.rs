//! `RunConfig`: the JSON file accepted by `nlc synthesize --config`.
//!
//! ```json
//! {
//!   "benchmark": "pendulum",
//!   "synthesis": { "seed": 3, "risk": { "learning_rate": 0.01 } },
//!   "output_dir": "runs/pendulum-3"
//! }
//! ```
//!
//! `benchmark` is a name (`"nlink(3)"`) or a parameter object
//! (`{"name": "pendulum", "mass": 2.0}`); `system_file` points at an
//! s-expression system instead. `synthesis` overrides individual fields of
//! the benchmark preset, nested objects merged key by key.

use std::fs;
use std::path::{Path, PathBuf};

use neural_lyapunov::bench::{build, BenchmarkParams};
use neural_lyapunov::cegis::SynthesisConfig;
use neural_lyapunov::system::SystemSpec;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BenchmarkSelect {
    Name(String),
    Params(BenchmarkParams),
}

impl BenchmarkSelect {
    pub fn params(&self) -> Result<BenchmarkParams, CliError> {
        match self {
            BenchmarkSelect::Name(name) => BenchmarkParams::from_name(name).map_err(|e| CliError::Config(e.to_string())),
            BenchmarkSelect::Params(p) => Ok(p.clone()),
        }
    }
}

/// The file as written by the user.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkSelect>,
    /// Relative paths are taken from the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub synthesis: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// A validated run: everything `synthesize` needs.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub name: String,
    pub benchmark: Option<BenchmarkParams>,
    pub system: SystemSpec,
    pub synthesis: SynthesisConfig,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = RunConfig::from_json(&text)?;
        if let (Some(file), Some(dir)) = (&cfg.system_file, path.parent()) {
            if file.is_relative() {
                cfg.system_file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    /// Builds the system, applies the overrides to the preset and
    /// validates the result. Nothing is written to disk.
    pub fn resolve(&self) -> Result<ResolvedRun, CliError> {
        let (name, benchmark, system, preset) = match (&self.benchmark, &self.system_file) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give either `benchmark` or `system_file`, not both".into()))
            }
            (None, None) => return Err(CliError::Config("one of `benchmark` or `system_file` is required".into())),
            (Some(sel), None) => {
                let params = sel.params()?;
                let def = build(&params).map_err(|e| CliError::Config(e.to_string()))?;
                let preset = SynthesisConfig::for_benchmark(&def);
                (def.name, Some(params), def.system, preset)
            }
            (None, Some(path)) => {
                let text =
                    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
                let system = SystemSpec::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                (system.name.clone(), None, system, SynthesisConfig::default())
            }
        };
        let synthesis = apply_overrides(&preset, &self.synthesis)?;
        synthesis.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let output_dir = self.output_dir.clone().unwrap_or_else(|| default_output_dir(&name, synthesis.seed));
        Ok(ResolvedRun { name, benchmark, system, synthesis, output_dir })
    }
}

pub fn default_output_dir(name: &str, seed: u64) -> PathBuf {
    let clean: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    PathBuf::from("runs").join(format!("{}-seed{seed}", clean.trim_end_matches('_')))
}

/// Merges `overrides` into the serialized preset. Keys that the preset
/// does not have are rejected so that typos do not pass silently.
pub fn apply_overrides(preset: &SynthesisConfig, overrides: &Value) -> Result<SynthesisConfig, CliError> {
    let mut base = serde_json::to_value(preset).map_err(|e| CliError::Config(e.to_string()))?;
    match overrides {
        Value::Null => {}
        Value::Object(o) => merge(&mut base, o, "synthesis")?,
        _ => return Err(CliError::Config("`synthesis` must be an object".into())),
    }
    serde_json::from_value(base).map_err(|e| CliError::Config(format!("synthesis: {e}")))
}

fn merge(base: &mut Value, overrides: &Map<String, Value>, at: &str) -> Result<(), CliError> {
    let Value::Object(target) = base else {
        return Err(CliError::Config(format!("`{at}` is not an object")));
    };
    for (key, value) in overrides {
        let path = format!("{at}.{key}");
        match target.get_mut(key) {
            None => return Err(CliError::Config(format!("unknown field `{path}`"))),
            Some(slot @ Value::Object(_)) if value.is_object() => {
                merge(slot, value.as_object().expect("checked"), &path)?;
            }
            Some(slot) => *slot = value.clone(),
        }
    }
    Ok(())
}

impl ResolvedRun {
    /// A config that reproduces this run when loaded from `dir`, with the
    /// system copied to `dir/system.sexp` when it did not come from a
    /// benchmark.
    pub fn snapshot(&self, dir: &Path) -> Result<RunConfig, CliError> {
        let synthesis = serde_json::to_value(&self.synthesis).map_err(|e| CliError::Config(e.to_string()))?;
        let mut cfg = RunConfig {
            benchmark: self.benchmark.clone().map(BenchmarkSelect::Params),
            system_file: None,
            synthesis,
            output_dir: Some(self.output_dir.clone()),
        };
        if self.benchmark.is_none() {
            let path = dir.join("system.sexp");
            fs::write(&path, self.system.to_sexp_string()).map_err(|source| CliError::Io { path, source })?;
            cfg.system_file = Some(PathBuf::from("system.sexp"));
        }
        Ok(cfg)
    }
}
