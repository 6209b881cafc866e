use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::InferenceConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub position: usize,
    pub token: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub position: usize,
    pub old: String,
    pub proposed: String,
    pub probability: f64,
    pub margin: f64,
    pub instability: f64,
    pub accepted: bool,
}

/// One line of a decode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    Start {
        config: InferenceConfig,
        length: usize,
        triggers: Vec<usize>,
    },
    Step {
        step: usize,
        forward_passes: usize,
        commits: Vec<CommitRecord>,
    },
    Trigger {
        step: usize,
        candidates: Vec<usize>,
        margins: Vec<(usize, f64)>,
        instabilities: Vec<(usize, f64)>,
        proposals: Vec<ProposalRecord>,
    },
    Summary {
        steps_run: usize,
        forward_passes: usize,
        revisions: usize,
        tokens: Vec<String>,
    },
}

pub fn write_trace(records: &[TraceRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::parse(format!("line {}", n + 1), e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}
