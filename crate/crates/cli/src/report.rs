//! Run outputs: CSV tables, manifest and text summary.

use std::fs;
use std::io;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::ExperimentConfig;

pub const MANIFEST: &str = "manifest.toml";
pub const SUMMARY: &str = "summary.txt";

#[derive(Clone, Debug, Default)]
pub struct CsvTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write(&self, dir: &Path) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(dir.join(&self.name))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip decimal form; identical values give identical text.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub tables: Vec<CsvTable>,
    pub lines: Vec<String>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary_text(&self, cfg: &ExperimentConfig) -> String {
        let mut s = format!("cbolab {} (seed {})\n\n", cfg.experiment, cfg.seed);
        for l in &self.lines {
            s.push_str(l);
            s.push('\n');
        }
        if !self.checks.is_empty() {
            s.push('\n');
            for c in &self.checks {
                s.push_str(&format!("check {:<28} {}  {}\n", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail));
            }
        }
        if !self.tables.is_empty() {
            s.push_str("\nfiles:");
            for t in &self.tables {
                s.push_str(&format!(" {}", t.name));
            }
            s.push('\n');
        }
        s
    }

    pub fn write(&self, cfg: &ExperimentConfig, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for t in &self.tables {
            t.write(dir).map_err(io::Error::other)?;
        }
        fs::write(dir.join(MANIFEST), manifest_text(cfg))?;
        fs::write(dir.join(SUMMARY), self.summary_text(cfg))
    }
}

/// The resolved config preceded by comment lines; the timestamp line is the
/// only part that differs between identical runs.
pub fn manifest_text(cfg: &ExperimentConfig) -> String {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    format!(
        "# cbolab {} manifest; rerun with `cbolab run --config <this file>`\n# timestamp: {stamp}\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.to_toml()
    )
}
