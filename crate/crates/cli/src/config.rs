//! JSON run configurations.
//!
//! A config names a subcommand and supplies its flags:
//!
//! ```json
//! {
//!   "subcommand": "cf",
//!   "measure": {"kind": "beta", "a": 1.0, "b": 1.0},
//!   "seed": 7,
//!   "out": "cf.csv",
//!   "tolerances": {"tol": 1e-12},
//!   "args": {"t": 1.0, "x-min": -5, "x-max": 5, "x-step": 0.5}
//! }
//! ```
//!
//! Top-level keys are fixed. Keys under `args` and `tolerances` are flag
//! names of the subcommand; the subcommand parser rejects unknown ones.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use crate::CliError;

const SUBCOMMANDS: [&str; 8] = ["rates", "simulate", "cf", "stationary", "converge", "duality", "cdi", "selftest"];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: String,
    /// Shorthand string or full JSON measure object.
    #[serde(default)]
    pub measure: Option<Value>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub args: BTreeMap<String, Value>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Equivalent command line, program name included.
    pub fn to_argv(&self) -> Result<Vec<String>, CliError> {
        if !SUBCOMMANDS.contains(&self.subcommand.as_str()) {
            return Err(CliError::Usage(format!(
                "config subcommand must be one of {}, got {:?}",
                SUBCOMMANDS.join(", "),
                self.subcommand
            )));
        }
        let mut argv = vec!["lambda-ou".to_string(), self.subcommand.clone()];
        let mut push = |k: &str, v: String| {
            argv.push(format!("--{k}"));
            argv.push(v);
        };
        if let Some(t) = self.threads {
            push("threads", t.to_string());
        }
        if let Some(m) = &self.measure {
            push("measure", scalar(m, "measure")?);
        }
        if let Some(b) = self.b {
            push("b", b.to_string());
        }
        if let Some(s) = self.seed {
            push("seed", s.to_string());
        }
        if let Some(o) = &self.out {
            push("out", o.display().to_string());
        }
        for (k, v) in &self.tolerances {
            push(k, v.to_string());
        }
        for (k, v) in &self.args {
            match v {
                Value::Bool(true) => argv.push(format!("--{k}")),
                Value::Bool(false) | Value::Null => {}
                _ => {
                    let s = scalar(v, k)?;
                    argv.push(format!("--{k}"));
                    argv.push(s);
                }
            }
        }
        Ok(argv)
    }
}

fn scalar(v: &Value, key: &str) -> Result<String, CliError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Object(_) if key == "measure" => Ok(v.to_string()),
        Value::Array(items) => {
            let parts = items.iter().map(|x| scalar(x, key)).collect::<Result<Vec<_>, _>>()?;
            Ok(parts.join(","))
        }
        _ => Err(CliError::Usage(format!("config key {key:?}: unsupported value {v}"))),
    }
}
