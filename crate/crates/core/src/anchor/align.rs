use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};

use super::graph::{assign_levels, EntityGraph};
use crate::corpus::ReportSample;
use crate::{Error, Result};

/// Discrete anchor level. Lower non-negative levels are more protected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnchorLevel {
    NonAnchor,
    Anatomy,
    Finding,
    Modifier,
}

impl AnchorLevel {
    pub const ALL: [AnchorLevel; 4] = [
        AnchorLevel::NonAnchor,
        AnchorLevel::Anatomy,
        AnchorLevel::Finding,
        AnchorLevel::Modifier,
    ];

    pub fn value(self) -> i32 {
        match self {
            AnchorLevel::NonAnchor => -1,
            AnchorLevel::Anatomy => 0,
            AnchorLevel::Finding => 1,
            AnchorLevel::Modifier => 2,
        }
    }

    pub fn from_value(v: i32) -> Option<AnchorLevel> {
        AnchorLevel::ALL.into_iter().find(|l| l.value() == v)
    }
}

impl Serialize for AnchorLevel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i32(self.value())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchyConfig {
    /// Level decay rate.
    pub beta: f64,
    /// Masking protection strength.
    pub gamma: f64,
    /// Loss weight scale.
    pub lambda: f64,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            beta: 1.0,
            gamma: 1.5,
            lambda: 1.1,
        }
    }
}

impl HierarchyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.gamma > 0.0 && self.lambda >= 0.0) {
            return Err(Error::Config(
                "hierarchy requires beta > 0, gamma > 0, lambda >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// `exp(-beta * level)` for a non-negative level.
pub fn level_decay(level: i32, beta: f64) -> Result<f64> {
    if level < 0 {
        return Err(Error::Contract(format!(
            "level decay is undefined for level {level}"
        )));
    }
    Ok((-beta * f64::from(level)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TokenAnnotation {
    pub level: AnchorLevel,
    /// Masking exponent: the token is masked with probability `t^phi`.
    pub phi: f64,
    /// Loss multiplier applied when the token is masked.
    pub weight: f64,
}

impl TokenAnnotation {
    pub const NEUTRAL: TokenAnnotation = TokenAnnotation {
        level: AnchorLevel::NonAnchor,
        phi: 1.0,
        weight: 1.0,
    };

    pub fn new(level: AnchorLevel, config: &HierarchyConfig) -> Self {
        match level {
            AnchorLevel::NonAnchor => TokenAnnotation::NEUTRAL,
            _ => {
                let eta = level_decay(level.value(), config.beta)
                    .expect("anchor levels are non-negative");
                TokenAnnotation {
                    level,
                    phi: config.gamma * eta,
                    weight: 1.0 + config.lambda * eta,
                }
            }
        }
    }
}

/// Character ranges for space-joined tokens. Each token owns its trailing
/// separator, so the ranges tile the detokenized text exactly.
pub fn token_boundaries<S: AsRef<str>>(tokens: &[S]) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        let sep = usize::from(i + 1 < tokens.len());
        let end = start + t.as_ref().len() + sep;
        out.push((start, end));
        start = end;
    }
    out
}

/// Per-token annotations: a token takes the minimum level among the entities
/// whose span intersects it, or `NonAnchor` when it touches none.
pub fn align_tokens(
    text: &str,
    boundaries: &[(usize, usize)],
    graph: &EntityGraph,
    levels: &[(usize, AnchorLevel)],
    config: &HierarchyConfig,
) -> Result<Vec<TokenAnnotation>> {
    let mut expect = 0;
    for (i, &(s, e)) in boundaries.iter().enumerate() {
        if s != expect || e <= s {
            return Err(Error::Alignment(format!(
                "token {i} boundary ({s}, {e}) does not continue the tiling at {expect}"
            )));
        }
        expect = e;
    }
    if expect != text.len() {
        return Err(Error::Alignment(format!(
            "token boundaries end at {expect}, text length is {}",
            text.len()
        )));
    }

    let level_of = |id: usize| {
        levels
            .iter()
            .find(|&&(eid, _)| eid == id)
            .map(|&(_, l)| l)
            .ok_or_else(|| Error::Alignment(format!("entity {id} has no assigned level")))
    };
    let mut spans = Vec::with_capacity(graph.entities.len());
    for e in &graph.entities {
        spans.push((e.char_start, e.char_end, level_of(e.id)?));
    }

    Ok(boundaries
        .iter()
        .map(|&(ts, te)| {
            let level = spans
                .iter()
                .filter(|&&(s, e, _)| s < te && ts < e)
                .map(|&(_, _, l)| l)
                .min_by_key(|l| l.value())
                .unwrap_or(AnchorLevel::NonAnchor);
            TokenAnnotation::new(level, config)
        })
        .collect())
}

pub fn annotate_sample(sample: &ReportSample, config: &HierarchyConfig) -> Result<Vec<TokenAnnotation>> {
    let levels = assign_levels(&sample.entity_graph);
    align_tokens(
        &sample.text(),
        &token_boundaries(&sample.tokens),
        &sample.entity_graph,
        &levels,
        config,
    )
}

#[derive(Serialize)]
struct SidecarLine<'a> {
    tokens: &'a [String],
    annotations: Vec<TokenAnnotation>,
}

/// One line per sample with per-token `{level, phi, weight}`.
pub fn write_sidecar(samples: &[ReportSample], config: &HierarchyConfig, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        let line = SidecarLine {
            tokens: &s.tokens,
            annotations: annotate_sample(s, config)?,
        };
        writeln!(w, "{}", serde_json::to_string(&line)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor::{Entity, EntityLabel};
    use proptest::prelude::*;

    #[test]
    fn decay_values() {
        assert_eq!(level_decay(0, 3.7).unwrap(), 1.0);
        assert!((level_decay(1, 1.0).unwrap() - 0.367879).abs() < 1e-6);
        assert!((level_decay(2, 1.0).unwrap() - 0.135335).abs() < 1e-6);
        assert!(matches!(level_decay(-1, 1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn annotation_values_at_defaults() {
        let cfg = HierarchyConfig::default();
        let a0 = TokenAnnotation::new(AnchorLevel::Anatomy, &cfg);
        assert_eq!(a0.phi, 1.5);
        assert_eq!(a0.weight, 2.1);
        let a1 = TokenAnnotation::new(AnchorLevel::Finding, &cfg);
        assert!((a1.phi - 0.551819).abs() < 1e-6);
        assert!((a1.weight - 1.404667).abs() < 1e-6);
        let n = TokenAnnotation::new(AnchorLevel::NonAnchor, &cfg);
        assert_eq!((n.phi, n.weight), (1.0, 1.0));
    }

    #[test]
    fn monotone_protection() {
        let cfg = HierarchyConfig::default();
        let phis: Vec<f64> = [AnchorLevel::Anatomy, AnchorLevel::Finding, AnchorLevel::Modifier]
            .iter()
            .map(|&l| TokenAnnotation::new(l, &cfg).phi)
            .collect();
        assert!(phis[0] > phis[1] && phis[1] > phis[2]);
        for t in [0.05, 0.3, 0.5, 0.9, 0.999] {
            let p: Vec<f64> = phis.iter().map(|&phi| f64::powf(t, phi)).collect();
            assert!(p[0] < p[1] && p[1] < p[2]);
            assert!(p[0] < t);
        }
    }

    #[test]
    fn boundaries_tile() {
        let toks = ["left", "lung", "."];
        let b = token_boundaries(&toks);
        assert_eq!(b, vec![(0, 5), (5, 10), (10, 11)]);
        assert_eq!(b.last().unwrap().1, "left lung .".len());
    }

    #[test]
    fn non_tiling_boundaries_rejected() {
        let g = EntityGraph::default();
        let cfg = HierarchyConfig::default();
        let err = align_tokens("ab cd", &[(0, 2), (3, 5)], &g, &[], &cfg).unwrap_err();
        assert!(matches!(err, Error::Alignment(_)));
        let err = align_tokens("ab cd", &[(0, 3)], &g, &[], &cfg).unwrap_err();
        assert!(matches!(err, Error::Alignment(_)));
    }

    #[test]
    fn multi_token_entity_covers_both_tokens() {
        let text = "effusion in pleural space .";
        let toks: Vec<&str> = text.split(' ').collect();
        let g = EntityGraph {
            entities: vec![
                Entity { id: 0, char_start: 0, char_end: 8, label: EntityLabel::Observation },
                Entity { id: 1, char_start: 12, char_end: 25, label: EntityLabel::Anatomy },
            ],
            relations: vec![],
        };
        let levels = assign_levels(&g);
        let ann = align_tokens(text, &token_boundaries(&toks), &g, &levels, &HierarchyConfig::default()).unwrap();
        let got: Vec<i32> = ann.iter().map(|a| a.level.value()).collect();
        assert_eq!(got, vec![1, -1, 0, 0, -1]);
    }

    fn brute_force_level(ts: usize, te: usize, spans: &[(usize, usize, i32)]) -> i32 {
        let mut best: Option<i32> = None;
        for c in ts..te {
            for &(s, e, l) in spans {
                if (s..e).contains(&c) {
                    best = Some(best.map_or(l, |b| b.min(l)));
                }
            }
        }
        best.unwrap_or(-1)
    }

    proptest! {
        #[test]
        fn overlap_rule_matches_brute_force(
            widths in prop::collection::vec(1usize..5, 1..12),
            raw in prop::collection::vec((0usize..40, 1usize..8, 0usize..3), 0..6),
        ) {
            let toks: Vec<String> = widths.iter().map(|&w| "x".repeat(w)).collect();
            let text = toks.join(" ");
            let n = text.len();
            let mut entities = Vec::new();
            let mut levels = Vec::new();
            let mut spans = Vec::new();
            for (i, &(s, len, lvl)) in raw.iter().enumerate() {
                let s = s % n;
                let e = (s + len).min(n);
                if s >= e { continue; }
                let level = [AnchorLevel::Anatomy, AnchorLevel::Finding, AnchorLevel::Modifier][lvl];
                let id = entities.len();
                let _ = i;
                entities.push(Entity { id, char_start: s, char_end: e, label: EntityLabel::Observation });
                levels.push((id, level));
                spans.push((s, e, level.value()));
            }
            let g = EntityGraph { entities, relations: vec![] };
            let b = token_boundaries(&toks);
            let ann = align_tokens(&text, &b, &g, &levels, &HierarchyConfig::default()).unwrap();
            for (a, &(ts, te)) in ann.iter().zip(&b) {
                prop_assert_eq!(a.level.value(), brute_force_level(ts, te, &spans));
                prop_assert!(a.weight >= 1.0);
                prop_assert_eq!(a.weight == 1.0, a.level == AnchorLevel::NonAnchor);
            }
        }
    }
}
