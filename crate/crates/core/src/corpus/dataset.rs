//! Line-delimited JSON dataset: one record per report.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::finding::{sample_condition, FindingVector};
use super::grammar::{generate_report, ReportSample};
use super::CorpusConfig;
use crate::anchor::{parse_entity_graph, token_boundaries, EntityLabel, RelationType};
use crate::{seed, Error, Result};

#[derive(Serialize)]
struct EntityRecord {
    start: usize,
    end: usize,
    label: EntityLabel,
    tokens: [usize; 2],
}

#[derive(Serialize)]
struct RelationRecord {
    src: usize,
    dst: usize,
    #[serde(rename = "type")]
    kind: RelationType,
}

#[derive(Serialize)]
struct Record<'a> {
    text: String,
    entities: Vec<EntityRecord>,
    relations: Vec<RelationRecord>,
    condition: &'a FindingVector,
    seed: u64,
}

/// Serializes one sample as a single JSON line (no trailing newline).
pub fn record_line(sample: &ReportSample) -> Result<String> {
    let text = sample.text();
    let bounds = token_boundaries(&sample.tokens);
    let token_span = |start: usize, end: usize| {
        let first = bounds.iter().position(|&(_, e)| e > start).unwrap_or(0);
        let last = bounds.iter().rposition(|&(s, _)| s < end).unwrap_or(0);
        [first, last + 1]
    };
    let record = Record {
        entities: sample
            .entity_graph
            .entities
            .iter()
            .map(|e| EntityRecord {
                start: e.char_start,
                end: e.char_end,
                label: e.label,
                tokens: token_span(e.char_start, e.char_end),
            })
            .collect(),
        relations: sample
            .entity_graph
            .relations
            .iter()
            .map(|r| RelationRecord {
                src: r.src,
                dst: r.dst,
                kind: r.kind,
            })
            .collect(),
        text,
        condition: &sample.condition,
        seed: sample.seed,
    };
    Ok(serde_json::to_string(&record)?)
}

/// Parses and validates one dataset line.
pub fn parse_record(line: &str) -> Result<ReportSample> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| Error::parse("record", e.to_string()))?;
    let text = value
        .get("text")
        .and_then(|t| t.as_str())
        .ok_or_else(|| Error::parse("text", "missing or not a string"))?;
    let entity_graph = parse_entity_graph(&value)?;
    if let Some(e) = entity_graph.entities.iter().find(|e| e.char_end > text.len()) {
        return Err(Error::parse(
            format!("entities[{}].end", e.id),
            "span exceeds text length",
        ));
    }
    let condition: FindingVector = serde_json::from_value(
        value
            .get("condition")
            .cloned()
            .ok_or_else(|| Error::parse("condition", "missing"))?,
    )
    .map_err(|e| Error::parse("condition", e.to_string()))?;
    let seed = value
        .get("seed")
        .and_then(|s| s.as_u64())
        .ok_or_else(|| Error::parse("seed", "missing or not an unsigned integer"))?;
    let tokens = if text.is_empty() {
        Vec::new()
    } else {
        text.split(' ').map(str::to_string).collect()
    };
    Ok(ReportSample {
        tokens,
        entity_graph,
        condition,
        seed,
    })
}

/// Draws `n` samples; record `i` uses a seed split from the root by index.
pub fn generate_dataset(n: usize, config: &CorpusConfig, root_seed: u64) -> Result<Vec<ReportSample>> {
    config.validate()?;
    (0..n)
        .map(|i| {
            let record_seed = seed::derive_indexed(root_seed, "record", i as u64);
            let mut rng = seed::rng(record_seed);
            let condition = sample_condition(config, &mut rng);
            generate_report(&condition, config, &mut rng, record_seed)
        })
        .collect()
}

pub fn write_dataset(samples: &[ReportSample], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        writeln!(w, "{}", record_line(s)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn build_dataset(n: usize, config: &CorpusConfig, root_seed: u64, path: &Path) -> Result<()> {
    if n == 0 {
        return Err(Error::Contract("dataset size must be at least 1".into()));
    }
    write_dataset(&generate_dataset(n, config, root_seed)?, path)
}

pub fn read_dataset(path: &Path) -> Result<Vec<ReportSample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line).map_err(|e| match e {
            Error::Parse { field, message } => Error::Parse {
                field: format!("line {}: {field}", i + 1),
                message,
            },
            other => other,
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::extract_findings;

    #[test]
    fn record_round_trip_matches_generator() {
        let cfg = CorpusConfig {
            abnormal_prior: [0.6; 6],
            ..CorpusConfig::default()
        };
        for s in generate_dataset(50, &cfg, 11).unwrap() {
            let line = record_line(&s).unwrap();
            let back = parse_record(&line).unwrap();
            assert_eq!(back, s);
            assert_eq!(extract_findings(&back.tokens), s.condition);
        }
    }

    #[test]
    fn entity_token_ranges_cover_spans() {
        let cfg = CorpusConfig {
            abnormal_prior: [1.0; 6],
            ..CorpusConfig::default()
        };
        let s = &generate_dataset(1, &cfg, 3).unwrap()[0];
        let v: serde_json::Value = serde_json::from_str(&record_line(s).unwrap()).unwrap();
        for e in v["entities"].as_array().unwrap() {
            let [a, b] = [e["tokens"][0].as_u64().unwrap(), e["tokens"][1].as_u64().unwrap()];
            let covered = s.tokens[a as usize..b as usize].join(" ");
            let text = s.text();
            let span = &text[e["start"].as_u64().unwrap() as usize..e["end"].as_u64().unwrap() as usize];
            assert_eq!(covered, span);
        }
    }

    #[test]
    fn zero_records_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(build_dataset(0, &CorpusConfig::default(), 1, &dir.path().join("d.jsonl")).is_err());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = build_dataset(1, &CorpusConfig::default(), 1, Path::new("/nonexistent/dir/d.jsonl"))
            .unwrap_err();
        assert_eq!(err.kind(), "io");
    }
}
