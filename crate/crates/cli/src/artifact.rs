//! Table artifacts with an embedded parameter header.
//!
//! Everything in the artifact body is a function of the config and seed.
//! Wall-clock measurements go to a separate `<out>.timing.json` file (or
//! stderr when writing to stdout).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value as Json};

use crate::config::{Format, RunConfig};
use crate::error::CliError;

pub const TOOL: &str = "deadtime";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Float(f64),
    Int(u64),
    Text(String),
    Missing,
}

impl Value {
    fn csv(&self) -> String {
        match self {
            Value::Float(v) if v.is_finite() => serde_json::to_string(v).expect("finite float"),
            Value::Float(v) if v.is_nan() => "NaN".into(),
            Value::Float(v) => if *v > 0.0 { "inf" } else { "-inf" }.into(),
            Value::Int(v) => v.to_string(),
            Value::Text(s) => s.clone(),
            Value::Missing => String::new(),
        }
    }

    fn json(&self) -> Json {
        match self {
            Value::Float(v) if v.is_finite() => json!(v),
            Value::Float(_) | Value::Missing => Json::Null,
            Value::Int(v) => json!(v),
            Value::Text(s) => json!(s),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Float(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub command: &'static str,
    pub config: RunConfig,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
    /// Deterministic scalars reported next to the table.
    pub meta: Map<String, Json>,
    pub warnings: Vec<String>,
}

impl Artifact {
    /// The destination path is dropped from the embedded config so the
    /// body does not depend on where it is written.
    pub fn new(command: &'static str, config: &RunConfig, columns: Vec<&'static str>) -> Self {
        let mut config = config.clone();
        config.output.path = None;
        Self {
            command,
            config,
            columns,
            rows: Vec::new(),
            meta: Map::new(),
            warnings: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl Serialize) {
        self.meta
            .insert(key.to_string(), serde_json::to_value(value).expect("serializable meta"));
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Value>> {
        let k = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| &r[k]).collect())
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.render_csv(),
            Format::Json => self.render_json(),
        }
    }

    fn render_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("# tool: {TOOL} {VERSION}\n"));
        s.push_str(&format!("# command: {}\n", self.command));
        let params = serde_json::to_string(&self.config.params).expect("serializable params");
        let config = serde_json::to_string(&self.config).expect("serializable config");
        s.push_str(&format!("# params: {params}\n"));
        s.push_str(&format!("# config: {config}\n"));
        for (k, v) in &self.meta {
            s.push_str(&format!("# {k}: {v}\n"));
        }
        for w in &self.warnings {
            s.push_str(&format!("# warning: {w}\n"));
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(Value::csv).collect();
            s.push_str(&fields.join(","));
            s.push('\n');
        }
        s
    }

    fn render_json(&self) -> String {
        let rows: Vec<Json> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Json> = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| (c.to_string(), v.json()))
                    .collect();
                Json::Object(obj)
            })
            .collect();
        let doc = json!({
            "tool": TOOL,
            "version": VERSION,
            "command": self.command,
            "params": self.config.params,
            "config": self.config,
            "meta": self.meta,
            "warnings": self.warnings,
            "columns": self.columns,
            "rows": rows,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("serializable artifact");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub threads: usize,
    pub wall_ms: f64,
    pub phases: Vec<(String, f64)>,
}

pub fn timing_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".timing.json");
    PathBuf::from(name)
}

/// Writes the artifact to `out` (or stdout) and its timing block next to it
/// (or to stderr).
pub fn emit(artifact: &Artifact, format: Format, out: Option<&Path>, timing: &Timing) -> Result<(), CliError> {
    let body = artifact.render(format);
    let timing_json = serde_json::to_string_pretty(timing).expect("serializable timing") + "\n";
    match out {
        Some(path) => {
            fs::write(path, body).map_err(|e| CliError::io(path, e))?;
            let tpath = timing_path(path);
            fs::write(&tpath, timing_json).map_err(|e| CliError::io(tpath, e))?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(body.as_bytes())
                .and_then(|_| lock.flush())
                .map_err(|e| CliError::io("<stdout>", e))?;
            eprint!("{timing_json}");
        }
    }
    Ok(())
}
