use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::grid::GridSpec;
use crate::solver::SolverSettings;

pub const MANIFEST_FORMAT: &str = "stopflow-manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Record of one command run. Written last: its presence means every listed
/// output is complete.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub format: &'static str,
    pub tool_version: &'static str,
    pub command: String,
    pub configs: Vec<String>,
    pub grid: Option<GridSpec>,
    pub settings: Option<SolverSettings>,
    pub seeds: Vec<u64>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_s: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            format: MANIFEST_FORMAT,
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            configs: Vec::new(),
            grid: None,
            settings: None,
            seeds: Vec::new(),
            outputs: Vec::new(),
            wall_clock_s: 0.0,
            checks: Vec::new(),
            pass: true,
        }
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.pass &= pass;
        self.checks.push(Check { name: name.into(), pass, detail: detail.into() });
    }

    /// Writes the manifest into `dir` and returns its path.
    pub fn finish(mut self, dir: &Path, wall_clock_s: f64) -> Result<PathBuf> {
        self.wall_clock_s = wall_clock_s;
        let path = dir.join(MANIFEST_FILE);
        super::write_json(&path, &self)?;
        Ok(path)
    }
}
