//! Fixed-width clause grammar. Every clause of a template set has the same
//! token count, so report length depends only on the template set and each
//! clause occupies an exact sixth of the report.

use rand::seq::SliceRandom;
use rand::Rng;

use super::finding::{Finding, FindingVector, Laterality, Observation, Severity, Slot};
use super::{ClauseOrder, CorpusConfig};
use crate::anchor::{Entity, EntityGraph, EntityLabel, Relation, RelationType};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSample {
    pub tokens: Vec<String>,
    pub entity_graph: EntityGraph,
    pub condition: FindingVector,
    pub seed: u64,
}

impl ReportSample {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

const FILLERS: [&str; 10] = [
    "is", "within", "normal", "limits", ".", "in", "noted", "the", "there", "seen",
];

pub fn surface_tokens() -> impl Iterator<Item = &'static str> {
    Slot::ALL
        .into_iter()
        .flat_map(|s| s.surface())
        .chain(Observation::ALL.into_iter().map(Observation::token))
        .chain(Severity::ALL.into_iter().map(Severity::token))
        .chain(Laterality::ALL.into_iter().map(Laterality::token))
        .chain(FILLERS)
}

/// Tokens per clause for a template set.
pub fn clause_width(template_set: u32) -> usize {
    match template_set {
        0 => 7,
        _ => 8,
    }
}

pub fn report_length(template_set: u32) -> usize {
    Slot::COUNT * clause_width(template_set)
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    Filler,
    Anatomy,
    Observation,
    Modifier,
}

fn render_clause(slot: Slot, finding: Finding, template_set: u32) -> Vec<(&'static str, Role)> {
    use Role::*;
    let [a1, a2] = slot.surface();
    match finding {
        Finding::Normal => {
            let mut out = Vec::with_capacity(8);
            if template_set != 0 {
                out.push(("the", Filler));
            }
            out.extend([
                (a1, Anatomy),
                (a2, Anatomy),
                ("is", Filler),
                ("within", Filler),
                ("normal", Filler),
                ("limits", Filler),
                (".", Filler),
            ]);
            out
        }
        Finding::Abnormal {
            observation,
            severity,
            laterality,
        } => {
            let mods: Vec<_> = severity
                .map(Severity::token)
                .into_iter()
                .chain(laterality.map(Laterality::token))
                .map(|t| (t, Modifier))
                .collect();
            let obs = (observation.token(), Observation);
            let anat = [(a1, Anatomy), (a2, Anatomy)];
            let mut out = Vec::with_capacity(8);
            match (template_set, mods.len()) {
                (0, 2) => {
                    out.extend(mods);
                    out.extend([obs, ("in", Filler)]);
                    out.extend(anat);
                    out.push((".", Filler));
                }
                (0, 1) => {
                    out.extend(mods);
                    out.extend([obs, ("in", Filler)]);
                    out.extend(anat);
                    out.extend([("noted", Filler), (".", Filler)]);
                }
                (0, _) => {
                    out.extend([obs, ("in", Filler)]);
                    out.extend(anat);
                    out.extend([("is", Filler), ("noted", Filler), (".", Filler)]);
                }
                (_, 2) => {
                    out.extend(mods);
                    out.extend([obs, ("in", Filler), ("the", Filler)]);
                    out.extend(anat);
                    out.push((".", Filler));
                }
                (_, 1) => {
                    out.extend(mods);
                    out.extend([obs, ("seen", Filler), ("in", Filler), ("the", Filler)]);
                    out.extend(anat);
                    out.push((".", Filler));
                }
                (_, _) => {
                    out.extend([("there", Filler), ("is", Filler), obs, ("in", Filler), ("the", Filler)]);
                    out.extend(anat);
                    out.push((".", Filler));
                }
            }
            out
        }
    }
}

/// Renders one clause per slot and records the ground-truth entity graph:
/// an anatomy entity per clause, an observation entity per abnormal slot,
/// a modifier entity per attribute with a `modify` edge to its observation,
/// and a `located_at` edge from each observation to its anatomy.
pub fn generate_report<R: Rng + ?Sized>(
    condition: &FindingVector,
    config: &CorpusConfig,
    rng: &mut R,
    seed: u64,
) -> Result<ReportSample> {
    let mut order = Slot::ALL;
    if config.clause_order == ClauseOrder::Shuffled {
        order.shuffle(rng);
    }

    let mut tokens: Vec<String> = Vec::with_capacity(report_length(config.template_set));
    let mut entities = Vec::new();
    let mut relations = Vec::new();
    let mut cursor = 0usize;

    for slot in order {
        let clause = render_clause(slot, condition.get(slot), config.template_set);
        let mut modifiers = Vec::new();
        let mut observation = None;
        let mut anatomy_start: Option<usize> = None;
        let mut anatomy_end = 0;
        for (tok, role) in clause {
            if !config.vocabulary.iter().any(|v| v == tok) {
                return Err(Error::Config(format!(
                    "vocabulary missing required surface token `{tok}`"
                )));
            }
            if !tokens.is_empty() {
                cursor += 1;
            }
            let start = cursor;
            cursor += tok.len();
            tokens.push(tok.to_string());
            match role {
                Role::Filler => {}
                Role::Anatomy => {
                    anatomy_start.get_or_insert(start);
                    anatomy_end = cursor;
                }
                Role::Modifier | Role::Observation => {
                    let id = entities.len();
                    entities.push(Entity {
                        id,
                        char_start: start,
                        char_end: cursor,
                        label: EntityLabel::Observation,
                    });
                    if role == Role::Modifier {
                        modifiers.push(id);
                    } else {
                        observation = Some(id);
                    }
                }
            }
        }
        let anatomy = entities.len();
        entities.push(Entity {
            id: anatomy,
            char_start: anatomy_start.expect("every clause names its anatomy"),
            char_end: anatomy_end,
            label: EntityLabel::Anatomy,
        });
        if let Some(obs) = observation {
            relations.extend(modifiers.iter().map(|&m| Relation {
                src: m,
                dst: obs,
                kind: RelationType::Modify,
            }));
            relations.push(Relation {
                src: obs,
                dst: anatomy,
                kind: RelationType::LocatedAt,
            });
        }
    }

    Ok(ReportSample {
        tokens,
        entity_graph: EntityGraph {
            entities,
            relations,
        },
        condition: *condition,
        seed,
    })
}
