use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::AnchorLevel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntityLabel {
    #[serde(rename = "ANATOMY")]
    Anatomy,
    #[serde(rename = "OBSERVATION")]
    Observation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationType {
    Modify,
    LocatedAt,
    SuggestiveOf,
}

/// Half-open character span `[char_start, char_end)` over the detokenized text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Entity {
    pub id: usize,
    pub char_start: usize,
    pub char_end: usize,
    pub label: EntityLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Relation {
    pub src: usize,
    pub dst: usize,
    pub kind: RelationType,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityGraph {
    pub entities: Vec<Entity>,
    pub relations: Vec<Relation>,
}

impl EntityGraph {
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for (i, e) in self.entities.iter().enumerate() {
            if e.char_start >= e.char_end {
                return Err(Error::parse(
                    format!("entities[{i}]"),
                    "malformed span: start must be < end",
                ));
            }
            if !ids.insert(e.id) {
                return Err(Error::parse(format!("entities[{i}]"), "duplicate entity id"));
            }
        }
        for (i, r) in self.relations.iter().enumerate() {
            if !ids.contains(&r.src) || !ids.contains(&r.dst) {
                return Err(Error::parse(
                    format!("relations[{i}]"),
                    "dangling relation endpoint",
                ));
            }
            if r.src == r.dst {
                return Err(Error::parse(format!("relations[{i}]"), "self-loop"));
            }
        }
        Ok(())
    }
}

fn field<'a>(v: &'a Value, key: &str, path: &str) -> Result<&'a Value> {
    v.get(key)
        .ok_or_else(|| Error::parse(format!("{path}.{key}"), "missing"))
}

fn uint(v: &Value, key: &str, path: &str) -> Result<usize> {
    field(v, key, path)?
        .as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| Error::parse(format!("{path}.{key}"), "not an unsigned integer"))
}

fn list<'a>(v: &'a Value, key: &str) -> Result<&'a [Value]> {
    match v.get(key) {
        None => Ok(&[]),
        Some(Value::Array(a)) => Ok(a),
        Some(_) => Err(Error::parse(key, "not a list")),
    }
}

/// Reads the `entities` and `relations` lists of a dataset record. Entity ids
/// are list indices. Label subtypes with a suffix (`OBSERVATION-DP` etc.)
/// collapse onto their base label.
pub fn parse_entity_graph(record: &Value) -> Result<EntityGraph> {
    let mut graph = EntityGraph::default();
    for (i, e) in list(record, "entities")?.iter().enumerate() {
        let path = format!("entities[{i}]");
        let char_start = uint(e, "start", &path)?;
        let char_end = uint(e, "end", &path)?;
        let label = match field(e, "label", &path)?.as_str() {
            Some(l) if l == "ANATOMY" || l.starts_with("ANATOMY-") => EntityLabel::Anatomy,
            Some(l) if l == "OBSERVATION" || l.starts_with("OBSERVATION-") => {
                EntityLabel::Observation
            }
            Some(other) => {
                return Err(Error::parse(
                    format!("{path}.label"),
                    format!("unknown label `{other}`"),
                ))
            }
            None => return Err(Error::parse(format!("{path}.label"), "not a string")),
        };
        if let Some(tokens) = e.get("tokens") {
            let ok = tokens
                .as_array()
                .filter(|a| a.len() == 2)
                .and_then(|a| Some((a[0].as_u64()?, a[1].as_u64()?)))
                .is_some_and(|(a, b)| a < b);
            if !ok {
                return Err(Error::parse(format!("{path}.tokens"), "malformed token range"));
            }
        }
        if char_start >= char_end {
            return Err(Error::parse(
                format!("{path}.end"),
                "malformed span: start must be < end",
            ));
        }
        graph.entities.push(Entity {
            id: i,
            char_start,
            char_end,
            label,
        });
    }
    for (i, r) in list(record, "relations")?.iter().enumerate() {
        let path = format!("relations[{i}]");
        let src = uint(r, "src", &path)?;
        let dst = uint(r, "dst", &path)?;
        let kind = match field(r, "type", &path)?.as_str() {
            Some("modify") => RelationType::Modify,
            Some("located_at") => RelationType::LocatedAt,
            Some("suggestive_of") => RelationType::SuggestiveOf,
            other => {
                return Err(Error::parse(
                    format!("{path}.type"),
                    format!("unknown relation type {other:?}"),
                ))
            }
        };
        let n = graph.entities.len();
        if src >= n || dst >= n {
            return Err(Error::parse(path, "dangling relation endpoint"));
        }
        if src == dst {
            return Err(Error::parse(path, "self-loop"));
        }
        graph.relations.push(Relation { src, dst, kind });
    }
    Ok(graph)
}

/// Anatomy is level 0; an observation that is the source of a `modify` edge is
/// level 2; every other observation is level 1. Returned in entity order.
pub fn assign_levels(graph: &EntityGraph) -> Vec<(usize, AnchorLevel)> {
    let modifiers: HashSet<usize> = graph
        .relations
        .iter()
        .filter(|r| r.kind == RelationType::Modify)
        .map(|r| r.src)
        .collect();
    graph
        .entities
        .iter()
        .map(|e| {
            let level = match e.label {
                EntityLabel::Anatomy => AnchorLevel::Anatomy,
                EntityLabel::Observation if modifiers.contains(&e.id) => AnchorLevel::Modifier,
                EntityLabel::Observation => AnchorLevel::Finding,
            };
            (e.id, level)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn ent(id: usize, s: usize, e: usize, label: EntityLabel) -> Entity {
        Entity {
            id,
            char_start: s,
            char_end: e,
            label,
        }
    }

    #[test]
    fn empty_record_is_empty_graph() {
        let g = parse_entity_graph(&json!({"entities": [], "relations": []})).unwrap();
        assert_eq!(g, EntityGraph::default());
    }

    #[test]
    fn dangling_endpoint_is_named() {
        let rec = json!({
            "entities": [{"start": 0, "end": 4, "label": "ANATOMY"}],
            "relations": [{"src": 0, "dst": 3, "type": "modify"}],
        });
        let err = parse_entity_graph(&rec).unwrap_err();
        assert!(err.to_string().contains("dangling relation endpoint"), "{err}");
        assert!(err.to_string().contains("relations[0]"));
    }

    #[test]
    fn malformed_span_and_label_are_named() {
        let rec = json!({"entities": [{"start": 5, "end": 5, "label": "ANATOMY"}]});
        let err = parse_entity_graph(&rec).unwrap_err().to_string();
        assert!(err.contains("entities[0].end"), "{err}");
        let rec = json!({"entities": [{"start": 0, "end": 5, "label": "DEVICE"}]});
        let err = parse_entity_graph(&rec).unwrap_err().to_string();
        assert!(err.contains("entities[0].label") && err.contains("DEVICE"), "{err}");
        let rec = json!({"entities": [{"start": 0, "label": "ANATOMY"}]});
        let err = parse_entity_graph(&rec).unwrap_err().to_string();
        assert!(err.contains("entities[0].end") && err.contains("missing"), "{err}");
    }

    #[test]
    fn self_loop_rejected() {
        let rec = json!({
            "entities": [{"start": 0, "end": 4, "label": "OBSERVATION"}],
            "relations": [{"src": 0, "dst": 0, "type": "modify"}],
        });
        assert!(parse_entity_graph(&rec).is_err());
    }

    #[test]
    fn uncertainty_subtypes_collapse() {
        let rec = json!({"entities": [{"start": 0, "end": 4, "label": "OBSERVATION-DA"}]});
        let g = parse_entity_graph(&rec).unwrap();
        assert_eq!(g.entities[0].label, EntityLabel::Observation);
    }

    #[test]
    fn levels_follow_hierarchy() {
        // "mild effusion heart": mild modifies effusion
        let g = EntityGraph {
            entities: vec![
                ent(0, 0, 4, EntityLabel::Observation),
                ent(1, 5, 13, EntityLabel::Observation),
                ent(2, 14, 19, EntityLabel::Anatomy),
            ],
            relations: vec![
                Relation {
                    src: 0,
                    dst: 1,
                    kind: RelationType::Modify,
                },
                Relation {
                    src: 1,
                    dst: 2,
                    kind: RelationType::LocatedAt,
                },
            ],
        };
        g.validate().unwrap();
        assert_eq!(
            assign_levels(&g),
            vec![
                (0, AnchorLevel::Modifier),
                (1, AnchorLevel::Finding),
                (2, AnchorLevel::Anatomy)
            ]
        );
    }

    #[test]
    fn lone_entities() {
        let heart = EntityGraph {
            entities: vec![ent(0, 0, 5, EntityLabel::Anatomy)],
            relations: vec![],
        };
        assert_eq!(assign_levels(&heart), vec![(0, AnchorLevel::Anatomy)]);
        let effusion = EntityGraph {
            entities: vec![ent(0, 0, 8, EntityLabel::Observation)],
            relations: vec![],
        };
        assert_eq!(assign_levels(&effusion), vec![(0, AnchorLevel::Finding)]);
    }

    #[test]
    fn located_at_and_suggestive_of_do_not_promote() {
        let g = EntityGraph {
            entities: vec![
                ent(0, 0, 4, EntityLabel::Observation),
                ent(1, 5, 9, EntityLabel::Observation),
            ],
            relations: vec![Relation {
                src: 0,
                dst: 1,
                kind: RelationType::SuggestiveOf,
            }],
        };
        assert!(assign_levels(&g).iter().all(|&(_, l)| l == AnchorLevel::Finding));
    }
}
