use std::collections::HashMap;

use crate::{Error, Result};

pub type TokenId = u32;

pub const PAD: &str = "[PAD]";
pub const MASK: &str = "[MASK]";
pub const EOS: &str = "[EOS]";
pub const MAX_VOCAB: usize = 256;
pub const DEFAULT_PREFIX_PLACEHOLDERS: usize = 8;

pub fn prefix_placeholder(i: usize) -> String {
    format!("[COND{i}]")
}

/// Explicit token inventory with the reserved markers resolved to ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    pad: TokenId,
    mask: TokenId,
    eos: TokenId,
    placeholders: usize,
}

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() > MAX_VOCAB {
            return Err(Error::Config(format!(
                "vocabulary has {} tokens, limit is {MAX_VOCAB}",
                tokens.len()
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains(char::is_whitespace) {
                return Err(Error::Config(format!("vocabulary token {i} is empty or contains whitespace")));
            }
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token `{t}`")));
            }
        }
        let need = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Config(format!("vocabulary missing reserved token `{name}`")))
        };
        let pad = need(PAD)?;
        let mask = need(MASK)?;
        let eos = need(EOS)?;
        let placeholders = (0..)
            .take_while(|&i| index.contains_key(&prefix_placeholder(i)))
            .count();
        if placeholders == 0 {
            return Err(Error::Config(
                "vocabulary missing condition-prefix placeholders `[COND0]`..".into(),
            ));
        }
        Ok(Vocab {
            tokens,
            index,
            pad,
            mask,
            eos,
            placeholders,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn pad(&self) -> TokenId {
        self.pad
    }

    pub fn mask(&self) -> TokenId {
        self.mask
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn placeholders(&self) -> usize {
        self.placeholders
    }

    /// Reserved markers never appear as report content.
    pub fn is_reserved(&self, id: TokenId) -> bool {
        let t = self.token(id);
        t.starts_with('[') && t.ends_with(']')
    }

    pub fn encode(&self, tokens: &[String]) -> Result<Vec<TokenId>> {
        tokens
            .iter()
            .map(|t| {
                self.id(t)
                    .ok_or_else(|| Error::Config(format!("token `{t}` not in vocabulary")))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }
}

/// Reserved markers, placeholders, then every surface token the grammar emits.
pub fn default_vocabulary() -> Vec<String> {
    let mut v: Vec<String> = vec![PAD.into(), MASK.into(), EOS.into()];
    v.extend((0..DEFAULT_PREFIX_PLACEHOLDERS).map(prefix_placeholder));
    for t in super::grammar::surface_tokens() {
        if !v.iter().any(|x| x == t) {
            v.push(t.to_string());
        }
    }
    v
}
