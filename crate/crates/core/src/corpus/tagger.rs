use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result, ValidationIssue};

/// Coarse part-of-speech classes; only adjectives and nouns matter for chunking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    Adj,
    Noun,
    Other,
}

impl FromStr for Tag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ADJ" => Ok(Tag::Adj),
            "NOUN" => Ok(Tag::Noun),
            "OTHER" => Ok(Tag::Other),
            other => Err(format!("unknown tag {other:?}")),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tag::Adj => "ADJ",
            Tag::Noun => "NOUN",
            Tag::Other => "OTHER",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub tag: Tag,
}

impl Token {
    pub fn new(text: impl Into<String>, tag: Tag) -> Self {
        Self {
            text: text.into(),
            tag,
        }
    }
}

const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.tsv");

/// Suffixes that mark an out-of-lexicon word as an adjective.
const ADJ_SUFFIXES: &[&str] = &["colored", "coloured", "ish", "ed", "y"];

/// Word → tag table, loaded from a `word<TAB>tag` file.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, Tag>,
}

impl Lexicon {
    /// The caption lexicon shipped with the crate (`data/lexicon.tsv`).
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is well-formed")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses TSV lines. Blank lines and `#` comments are skipped; words are lowercased.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        let mut issues = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some(word), Some(tag), None) if !word.trim().is_empty() => {
                    match tag.trim().parse::<Tag>() {
                        Ok(tag) => {
                            entries.insert(word.trim().to_lowercase(), tag);
                        }
                        Err(e) => issues.push(ValidationIssue::global(format!(
                            "lexicon line {}: {e}",
                            lineno + 1
                        ))),
                    }
                }
                _ => issues.push(ValidationIssue::global(format!(
                    "lexicon line {}: expected word<TAB>tag",
                    lineno + 1
                ))),
            }
        }
        if issues.is_empty() {
            Ok(Self { entries })
        } else {
            Err(Error::Validation(issues))
        }
    }

    pub fn insert(&mut self, word: impl Into<String>, tag: Tag) {
        self.entries.insert(word.into(), tag);
    }

    /// Adds `other`'s entries, overriding existing ones.
    pub fn extend(&mut self, other: Lexicon) {
        self.entries.extend(other.entries);
    }

    pub fn get(&self, word: &str) -> Option<Tag> {
        self.entries.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Tags one word: lexicon first, then the fallback heuristics.
    pub fn tag_word(&self, word: &str) -> Tag {
        if let Some(tag) = self.get(word) {
            return tag;
        }
        // Hyphenated compounds ("rose-pink", "black-capped") are adjectives
        // if any component is one.
        if word.contains('-') {
            let any_adj = word
                .split('-')
                .filter(|p| !p.is_empty())
                .any(|part| self.get(part) == Some(Tag::Adj) || has_adj_suffix(part));
            if any_adj {
                return Tag::Adj;
            }
        }
        // "-ly" words are adverbs ("mostly", "entirely") unless listed.
        if word.ends_with("ly") {
            return Tag::Other;
        }
        if has_adj_suffix(word) {
            return Tag::Adj;
        }
        // Regular plurals of known nouns.
        if let Some(stem) = word.strip_suffix('s') {
            if self.get(stem) == Some(Tag::Noun) {
                return Tag::Noun;
            }
        }
        Tag::Other
    }
}

fn has_adj_suffix(word: &str) -> bool {
    ADJ_SUFFIXES
        .iter()
        .any(|suffix| word.len() > suffix.len() + 1 && word.ends_with(suffix))
}

/// Tags each token with the lexicon, falling back to suffix heuristics.
pub fn pos_tag<S: AsRef<str>>(tokens: &[S], lexicon: &Lexicon) -> Vec<Token> {
    tokens
        .iter()
        .map(|t| {
            let text = t.as_ref();
            Token::new(text, lexicon.tag_word(text))
        })
        .collect()
}
