//! Aggregates per-suite results found in a run directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliResult;
use crate::io::{read_json, write_json};
use crate::suites::{SuiteResult, REGISTRY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub name: String,
    pub status: Status,
    pub result: Option<SuiteResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub suites: Vec<SummaryEntry>,
}

pub fn suite_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("suite_{name}.json"))
}

/// Missing suite files become SKIPPED; unreadable ones are errors.
pub fn build_summary(dir: &Path) -> CliResult<Summary> {
    let mut suites = Vec::new();
    for name in REGISTRY {
        let p = suite_path(dir, name);
        let entry = if p.exists() {
            let r: SuiteResult = read_json(&p)?;
            SummaryEntry { name: name.into(), status: if r.pass { Status::Pass } else { Status::Fail }, result: Some(r) }
        } else {
            SummaryEntry { name: name.into(), status: Status::Skipped, result: None }
        };
        suites.push(entry);
    }
    let count = |s: Status| suites.iter().filter(|e| e.status == s).count();
    Ok(Summary { passed: count(Status::Pass), failed: count(Status::Fail), skipped: count(Status::Skipped), suites })
}

pub fn write_summary(dir: &Path) -> CliResult<Summary> {
    let s = build_summary(dir)?;
    write_json(&dir.join("summary.json"), &s)?;
    Ok(s)
}
