//! Run manifests: a text record of what a command ran with, written
//! when the run starts and finalized (with wall-clock totals) when it
//! completes.

use std::path::Path;
use strg::{Error, Result};

pub struct RunManifest {
    pub command: String,
    pub entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest { command: command.to_string(), entries: Vec::new() }
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    fn render(&self, status: &str, wall_ms: Option<f64>) -> String {
        let mut out = String::new();
        out.push_str("# run manifest\n");
        out.push_str(&format!("status = {}\n", status));
        out.push_str(&format!("command = {}\n", self.command));
        out.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
        for (k, v) in &self.entries {
            // multi-line values (config snapshots) are indented so the
            // manifest stays line-parsable
            if v.contains('\n') {
                out.push_str(&format!("{} =\n", k));
                for line in v.lines() {
                    out.push_str("    ");
                    out.push_str(line);
                    out.push('\n');
                }
            } else {
                out.push_str(&format!("{} = {}\n", k, v));
            }
        }
        if let Some(ms) = wall_ms {
            out.push_str(&format!("wall_ms_total = {:.1}\n", ms));
        }
        out
    }

    fn write(&self, path: &Path, status: &str, wall_ms: Option<f64>) -> Result<()> {
        std::fs::write(path, self.render(status, wall_ms))
            .map_err(|source| Error::Io { path: path.display().to_string(), source })
    }

    /// Written before the run body so a crash still leaves a record.
    pub fn write_started(&self, path: &Path) -> Result<()> {
        self.write(path, "started", None)
    }

    pub fn write_complete(&self, path: &Path, wall_ms: f64) -> Result<()> {
        self.write(path, "complete", Some(wall_ms))
    }
}
