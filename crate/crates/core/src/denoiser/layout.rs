use std::ops::Range;

use super::DenoiserConfig;

/// Rows of the observation-code table: normal, twelve observations, and an
/// empty code for prefix positions beyond the six slots.
pub(crate) const OBS_CODES: usize = 14;
pub(crate) const EMPTY_OBS_CODE: usize = 13;
/// none + three severities / lateralities.
pub(crate) const ATTR_CODES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LayerLayout {
    pub ln1_w: Range<usize>,
    pub ln1_b: Range<usize>,
    pub qkv_w: Range<usize>,
    pub qkv_b: Range<usize>,
    pub out_w: Range<usize>,
    pub out_b: Range<usize>,
    pub ln2_w: Range<usize>,
    pub ln2_b: Range<usize>,
    pub fc_w: Range<usize>,
    pub fc_b: Range<usize>,
    pub proj_w: Range<usize>,
    pub proj_b: Range<usize>,
}

/// Offsets of every named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub(crate) tok_emb: Range<usize>,
    pub(crate) pos_emb: Range<usize>,
    pub(crate) cond_obs: Range<usize>,
    pub(crate) cond_sev: Range<usize>,
    pub(crate) cond_lat: Range<usize>,
    pub(crate) layers: Vec<LayerLayout>,
    pub(crate) lnf_w: Range<usize>,
    pub(crate) lnf_b: Range<usize>,
    pub(crate) head_w: Range<usize>,
    pub(crate) head_b: Range<usize>,
    tensors: Vec<TensorSpec>,
    size: usize,
}

struct Builder {
    tensors: Vec<TensorSpec>,
    size: usize,
}

impl Builder {
    fn add(&mut self, name: impl Into<String>, shape: &[usize]) -> Range<usize> {
        let len: usize = shape.iter().product();
        let range = self.size..self.size + len;
        self.size += len;
        self.tensors.push(TensorSpec {
            name: name.into(),
            shape: shape.to_vec(),
            range: range.clone(),
        });
        range
    }
}

impl Layout {
    pub fn new(c: &DenoiserConfig) -> Self {
        let (v, d, f) = (c.vocab_size, c.d_model, c.hidden());
        let mut b = Builder {
            tensors: Vec::new(),
            size: 0,
        };
        let tok_emb = b.add("embed.tokens", &[v, d]);
        let pos_emb = b.add("embed.positions", &[c.max_len, d]);
        let cond_obs = b.add("condition.observation", &[OBS_CODES, d]);
        let cond_sev = b.add("condition.severity", &[ATTR_CODES, d]);
        let cond_lat = b.add("condition.laterality", &[ATTR_CODES, d]);
        let layers = (0..c.layers)
            .map(|l| LayerLayout {
                ln1_w: b.add(format!("layers.{l}.ln1.weight"), &[d]),
                ln1_b: b.add(format!("layers.{l}.ln1.bias"), &[d]),
                qkv_w: b.add(format!("layers.{l}.attn.qkv.weight"), &[d, 3 * d]),
                qkv_b: b.add(format!("layers.{l}.attn.qkv.bias"), &[3 * d]),
                out_w: b.add(format!("layers.{l}.attn.out.weight"), &[d, d]),
                out_b: b.add(format!("layers.{l}.attn.out.bias"), &[d]),
                ln2_w: b.add(format!("layers.{l}.ln2.weight"), &[d]),
                ln2_b: b.add(format!("layers.{l}.ln2.bias"), &[d]),
                fc_w: b.add(format!("layers.{l}.mlp.fc.weight"), &[d, f]),
                fc_b: b.add(format!("layers.{l}.mlp.fc.bias"), &[f]),
                proj_w: b.add(format!("layers.{l}.mlp.proj.weight"), &[f, d]),
                proj_b: b.add(format!("layers.{l}.mlp.proj.bias"), &[d]),
            })
            .collect();
        let lnf_w = b.add("final_norm.weight", &[d]);
        let lnf_b = b.add("final_norm.bias", &[d]);
        let head_w = b.add("head.weight", &[d, v]);
        let head_b = b.add("head.bias", &[v]);
        Layout {
            tok_emb,
            pos_emb,
            cond_obs,
            cond_sev,
            cond_lat,
            layers,
            lnf_w,
            lnf_b,
            head_w,
            head_b,
            tensors: b.tensors,
            size: b.size,
        }
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}
