//! Resolved run configuration, config hashing, and artifact output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::Failure;

/// A JSON argument given inline (starts with `{` or `[`) or as a file path.
pub fn load_json(arg: &str) -> Result<Value, Failure> {
    let trimmed = arg.trim_start();
    let text = if trimmed.starts_with('{') || trimmed.starts_with('[') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).map_err(|e| Failure::invalid(format!("cannot read {arg}: {e}")))?
    };
    Ok(serde_json::from_str(&text)?)
}

/// Config file contents: either a bare parameter object or a full run config
/// `{command, parameters, seed, output_dir}`.
pub struct FileConfig {
    pub parameters: Map<String, Value>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(arg: Option<&str>, command: &str) -> Result<Self, Failure> {
        let Some(arg) = arg else {
            return Ok(FileConfig {
                parameters: Map::new(),
                seed: None,
                output_dir: None,
            });
        };
        let Value::Object(mut obj) = load_json(arg)? else {
            return Err(Failure::invalid("config must be a JSON object"));
        };
        if !obj.contains_key("parameters") {
            return Ok(FileConfig {
                parameters: obj,
                seed: None,
                output_dir: None,
            });
        }
        if let Some(c) = obj.remove("command") {
            if c.as_str() != Some(command) {
                return Err(Failure::invalid(format!(
                    "config is for command {c}, not \"{command}\""
                )));
            }
        }
        let Some(Value::Object(parameters)) = obj.remove("parameters") else {
            return Err(Failure::invalid("config \"parameters\" must be an object"));
        };
        let seed = obj.remove("seed").map(serde_json::from_value).transpose()?;
        let output_dir = obj
            .remove("output_dir")
            .map(serde_json::from_value)
            .transpose()?;
        if let Some(k) = obj.keys().next() {
            return Err(Failure::invalid(format!("unknown config field \"{k}\"")));
        }
        Ok(FileConfig {
            parameters,
            seed,
            output_dir,
        })
    }
}

/// Overlays the flags that were given on the file parameters and parses the
/// result into the command's parameter type.
pub fn resolve<T: DeserializeOwned + Serialize>(
    mut base: Map<String, Value>,
    flags: impl Serialize,
) -> Result<(T, Value), Failure> {
    let Value::Object(flags) = serde_json::to_value(flags)? else {
        unreachable!("flag structs serialize to objects")
    };
    base.extend(flags.into_iter().filter(|(_, v)| !v.is_null()));
    let params: T = serde_json::from_value(Value::Object(base))?;
    let canonical = serde_json::to_value(&params)?;
    Ok((params, canonical))
}

pub struct Artifacts {
    pub command: String,
    pub parameters: Value,
    pub seed: u64,
    pub hash: String,
    pub out: Option<PathBuf>,
}

impl Artifacts {
    pub fn new(command: &str, parameters: Value, seed: u64, out: Option<PathBuf>) -> Self {
        let identity = json!({ "command": command, "parameters": parameters, "seed": seed });
        let hash = hex::encode(Sha256::digest(identity.to_string().as_bytes()));
        Artifacts {
            command: command.to_string(),
            parameters,
            seed,
            hash,
            out,
        }
    }

    pub fn report(&self, result: Value) -> Value {
        json!({
            "config": {
                "command": self.command,
                "parameters": self.parameters,
                "seed": self.seed,
                "output_dir": self.out,
            },
            "config_hash": self.hash,
            "seed": self.seed,
            "result": result,
        })
    }

    fn path(&self, name: &str) -> Result<Option<PathBuf>, Failure> {
        let Some(dir) = &self.out else {
            return Ok(None);
        };
        fs::create_dir_all(dir)?;
        Ok(Some(Path::new(dir).join(name)))
    }

    /// Prints the report and, with an output directory, writes it as `name`.
    pub fn emit_json(&self, name: &str, result: Value) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(&self.report(result))?;
        if let Some(path) = self.path(name)? {
            fs::write(path, format!("{text}\n"))?;
        }
        println!("{text}");
        Ok(())
    }

    /// Writes a CSV body under a one-line provenance header. No-op without an
    /// output directory.
    pub fn emit_csv(&self, name: &str, body: &str) -> Result<Option<PathBuf>, Failure> {
        let Some(path) = self.path(name)? else {
            return Ok(None);
        };
        fs::write(
            &path,
            format!("# config_hash={} seed={}\n{body}", self.hash, self.seed),
        )?;
        Ok(Some(path))
    }
}
