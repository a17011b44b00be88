use std::fmt;

use serde::{Deserialize, Serialize};

use super::tagger::{Tag, Token};

/// An adjective-noun visual attribute such as "bright orange beak".
///
/// Equality is equality of the canonical lowercase string form; sort with
/// [`Attribute::canonical`] when a total order is needed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Attribute {
    pub adjective: String,
    pub noun: String,
}

impl Attribute {
    pub fn new(adjective: impl Into<String>, noun: impl Into<String>) -> Self {
        Self {
            adjective: adjective.into(),
            noun: noun.into(),
        }
    }

    /// `"adjective noun"`.
    pub fn canonical(&self) -> String {
        format!("{} {}", self.adjective, self.noun)
    }

    /// Parses `"bright orange beak"` as adjective `"bright orange"` + noun `"beak"`.
    pub fn parse(text: &str) -> Option<Self> {
        let words: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
        match words.split_last() {
            Some((noun, adjs)) if !adjs.is_empty() => Some(Self::new(adjs.join(" "), noun.clone())),
            _ => None,
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.adjective, self.noun)
    }
}

/// Emits one attribute per `ADJ+ NOUN` run. Adjacent adjectives are joined
/// into a single adjective field; a noun without a directly preceding
/// adjective emits nothing. No recursion into compound nouns.
pub fn chunk_attributes(tagged: &[Token]) -> Vec<Attribute> {
    let mut out = Vec::new();
    let mut adjectives: Vec<&str> = Vec::new();
    for token in tagged {
        match token.tag {
            Tag::Adj => adjectives.push(&token.text),
            Tag::Noun => {
                if !adjectives.is_empty() {
                    out.push(Attribute::new(adjectives.join(" "), token.text.clone()));
                }
                adjectives.clear();
            }
            Tag::Other => adjectives.clear(),
        }
    }
    out
}
