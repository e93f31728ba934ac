//! Artifact directory: JSON reports and CSV series stamped with the config hash.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nldp_core::grid::GridFunction;
use nldp_core::io::{write_atomic, write_json};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Artifacts {
    pub dir: PathBuf,
    pub meta: Value,
    written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: &Path, subcommand: &str, config_hash: Option<&str>, seed: Option<u64>) -> Self {
        let meta = json!({
            "subcommand": subcommand,
            "config_hash": config_hash,
            "toolkit_version": VERSION,
            "seed": seed,
        });
        Self { dir: dir.to_path_buf(), meta, written: Vec::new() }
    }

    pub fn json(&mut self, name: &str, report: &impl Serialize) -> Result<(), CliError> {
        let body = serde_json::to_value(report).map_err(nldp_core::Error::from)?;
        let path = self.dir.join(name);
        write_json(&path, &json!({ "meta": self.meta, "report": body }))?;
        self.written.push(path);
        Ok(())
    }

    /// Writes a CSV whose first lines are `# key=value` comments carrying the meta data.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut s = String::new();
        for key in ["config_hash", "toolkit_version"] {
            if let Some(v) = self.meta[key].as_str() {
                let _ = writeln!(s, "# {key}={v}");
            }
        }
        s.push_str(&header.join(","));
        s.push('\n');
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        let path = self.dir.join(name);
        write_atomic(&path, s.as_bytes())?;
        self.written.push(path);
        Ok(())
    }

    pub fn grid_function(&mut self, stem: &str, u: &GridFunction) -> Result<(), CliError> {
        let sidecar = u.write(&self.dir.join(stem), false, &self.meta)?;
        self.written.push(sidecar.with_extension("csv"));
        self.written.push(sidecar);
        Ok(())
    }

    pub fn error(&self, err: &CliError) -> Result<(), CliError> {
        let body = json!({
            "meta": self.meta,
            "error": { "kind": err.kind(), "message": err.to_string(), "exit_code": err.exit_code() },
        });
        write_json(&self.dir.join("error.json"), &body)?;
        Ok(())
    }

    /// Removes an `error.json` left by an earlier run.
    pub fn clear_error(&self) {
        let _ = std::fs::remove_file(self.dir.join("error.json"));
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}
