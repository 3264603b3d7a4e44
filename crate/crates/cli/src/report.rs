//! Summary entries and CSV emission.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use lrex::verify::montecarlo::{Estimate, SE_BAND};

/// One checked quantity. `bound` is the target or limit the value is
/// compared against; `se` is present for statistical checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entry {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub se: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct Summary {
    pub entries: Vec<Entry>,
}

impl Summary {
    pub fn push(&mut self, name: impl Into<String>, value: f64, bound: f64, se: Option<f64>, pass: bool) {
        self.entries.push(Entry {
            name: name.into(),
            value,
            bound,
            se,
            pass,
        });
    }

    /// `value <= bound`.
    pub fn at_most(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.push(name, value, bound, None, value <= bound);
    }

    /// Mean within four standard errors of `target`.
    pub fn estimate(&mut self, name: impl Into<String>, e: &Estimate, target: f64) {
        self.push(name, e.mean, target, Some(e.se), (e.mean - target).abs() <= SE_BAND * e.se);
    }

    /// Recorded for reference; never fails.
    pub fn info(&mut self, name: impl Into<String>, value: f64, se: Option<f64>) {
        self.push(name, value, f64::NAN, se, true);
    }

    pub fn extend(&mut self, other: Summary) {
        self.entries.extend(other.entries);
    }

    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn print(&self) {
        for e in &self.entries {
            let verdict = if e.pass { "PASS" } else { "FAIL" };
            let se = e.se.map(|s| format!(" +- {s:.4e}")).unwrap_or_default();
            if e.bound.is_nan() {
                println!("{verdict} {}: {:.6e}{se}", e.name, e.value);
            } else {
                println!("{verdict} {}: {:.6e}{se} (bound {:.6e})", e.name, e.value, e.bound);
            }
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.entries)?;
        fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

/// CSV writer for a fixed column layout.
pub fn csv_writer(path: &Path, header: &[String]) -> Result<csv::Writer<fs::File>> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    Ok(w)
}

/// Full round-trip precision, so reruns are byte-identical.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}
