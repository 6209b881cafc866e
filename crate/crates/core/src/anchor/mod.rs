//! Entity graphs, the three-level anchor hierarchy, and per-token masking
//! exponents and loss weights.

mod align;
mod graph;

pub use align::{
    align_tokens, annotate_sample, level_decay, token_boundaries, write_sidecar, AnchorLevel,
    HierarchyConfig, TokenAnnotation,
};
pub use graph::{
    assign_levels, parse_entity_graph, Entity, EntityGraph, EntityLabel, Relation, RelationType,
};
