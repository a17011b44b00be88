use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::chunk::{chunk_attributes, Attribute};
use super::tagger::{pos_tag, Lexicon};
use super::tokenize::tokenize;
use crate::error::{Error, Result, ValidationIssue};
use crate::exec;

pub const VOCABULARY_FORMAT_VERSION: u32 = 1;

/// The captions attached to one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionDoc {
    pub image_id: String,
    pub captions: Vec<String>,
}

impl CaptionDoc {
    pub fn new(image_id: impl Into<String>, captions: Vec<String>) -> Result<Self> {
        let image_id = image_id.into();
        if captions.is_empty() {
            return Err(Error::Validation(vec![ValidationIssue::image(
                image_id,
                "caption file has no captions",
            )]));
        }
        Ok(Self { image_id, captions })
    }

    /// Reads one caption per non-blank line.
    pub fn from_file(image_id: impl Into<String>, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let captions = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        Self::new(image_id, captions)
    }
}

/// Loads every `<image_id>.txt` in a directory, sorted by image id.
pub fn load_caption_dir(dir: impl AsRef<Path>) -> Result<Vec<CaptionDoc>> {
    let dir = dir.as_ref();
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.extension().is_some_and(|ext| ext == "txt") && path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();
    exec::try_map_indexed(paths.len(), |i| {
        let path = &paths[i];
        let id = path.file_stem().and_then(|s| s.to_str()).ok_or_else(|| {
            Error::InvalidArgument(format!("non UTF-8 file name {}", path.display()))
        })?;
        CaptionDoc::from_file(id, path)
    })
}

/// Turns caption text into adjective-noun attributes.
#[derive(Debug, Clone)]
pub struct AttributeExtractor {
    lexicon: Lexicon,
}

impl Default for AttributeExtractor {
    fn default() -> Self {
        Self::new(Lexicon::builtin())
    }
}

impl AttributeExtractor {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    /// All attribute occurrences in one caption, in reading order.
    pub fn extract(&self, caption: &str) -> Vec<Attribute> {
        let tokens = tokenize(caption);
        chunk_attributes(&pos_tag(&tokens, &self.lexicon))
    }

    /// Occurrence count of every attribute in a caption file.
    pub fn term_counts(&self, doc: &CaptionDoc) -> HashMap<Attribute, usize> {
        let mut counts = HashMap::new();
        for caption in &doc.captions {
            for attr in self.extract(caption) {
                *counts.entry(attr).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Term frequency: total occurrences of `attribute` over all captions in `doc`.
    pub fn tf(&self, attribute: &Attribute, doc: &CaptionDoc) -> usize {
        doc.captions
            .iter()
            .map(|c| self.extract(c).iter().filter(|a| *a == attribute).count())
            .sum()
    }

    /// `ln(N / D)` over `corpus`, where D counts files containing the attribute.
    pub fn idf(&self, attribute: &Attribute, corpus: &[CaptionDoc]) -> Result<f64> {
        let containing = corpus
            .iter()
            .filter(|doc| self.tf(attribute, doc) > 0)
            .count();
        idf(corpus.len(), containing).ok_or_else(|| Error::UnknownAttribute(attribute.canonical()))
    }
}

/// `ln(n_docs / doc_frequency)`; `None` when the attribute occurs nowhere.
pub fn idf(n_docs: usize, doc_frequency: usize) -> Option<f64> {
    if doc_frequency == 0 || doc_frequency > n_docs {
        None
    } else {
        Some((n_docs as f64 / doc_frequency as f64).ln())
    }
}

/// Attribute vocabulary with its TF/IDF prior.
///
/// Attribute ids are positions in `attributes`, ordered by descending corpus
/// frequency with ties broken by the canonical string.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    attributes: Vec<Attribute>,
    prior: Vec<f64>,
    doc_frequency: Vec<usize>,
    image_attributes: BTreeMap<String, Vec<usize>>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from explicit parts, checking every invariant.
    pub fn from_parts(
        attributes: Vec<Attribute>,
        prior: Vec<f64>,
        doc_frequency: Vec<usize>,
        image_attributes: BTreeMap<String, Vec<usize>>,
    ) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let mut issues = Vec::new();
        let l = attributes.len();
        if prior.len() != l || doc_frequency.len() != l {
            issues.push(ValidationIssue::global(format!(
                "{l} attributes but {} prior entries and {} doc frequencies",
                prior.len(),
                doc_frequency.len()
            )));
        }
        if prior.iter().any(|p| !p.is_finite() || *p < 0.0) {
            issues.push(ValidationIssue::global(
                "prior has negative or non-finite entries",
            ));
        }
        let total: f64 = prior.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            issues.push(ValidationIssue::global(format!(
                "prior sums to {total}, not 1"
            )));
        }
        let mut index = HashMap::with_capacity(l);
        for (i, a) in attributes.iter().enumerate() {
            if a.adjective.is_empty() || a.noun.is_empty() {
                issues.push(ValidationIssue::global(format!(
                    "attribute {i} has an empty field"
                )));
            }
            if index.insert(a.canonical(), i).is_some() {
                issues.push(ValidationIssue::global(format!(
                    "duplicate attribute {:?}",
                    a.canonical()
                )));
            }
        }
        let mut image_attributes = image_attributes;
        for (id, ids) in image_attributes.iter_mut() {
            ids.sort_unstable();
            ids.dedup();
            if ids.iter().any(|&j| j >= l) {
                issues.push(ValidationIssue::image(
                    id.clone(),
                    "attribute id out of range",
                ));
            }
        }
        if !issues.is_empty() {
            return Err(Error::Validation(issues));
        }
        Ok(Self {
            attributes,
            prior,
            doc_frequency,
            image_attributes,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, id: usize) -> &Attribute {
        &self.attributes[id]
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn doc_frequency(&self) -> &[usize] {
        &self.doc_frequency
    }

    pub fn image_attributes(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.image_attributes
    }

    /// Sorted attribute ids attached to an image, or `None` for an unknown image.
    pub fn attributes_of(&self, image_id: &str) -> Option<&[usize]> {
        self.image_attributes.get(image_id).map(Vec::as_slice)
    }

    pub fn contains(&self, image_id: &str, attribute: usize) -> bool {
        self.attributes_of(image_id)
            .is_some_and(|ids| ids.binary_search(&attribute).is_ok())
    }

    pub fn id_of(&self, attribute: &Attribute) -> Option<usize> {
        self.index.get(&attribute.canonical()).copied()
    }

    pub fn id_of_str(&self, canonical: &str) -> Option<usize> {
        Attribute::parse(canonical).and_then(|a| self.id_of(&a))
    }

    /// SHA-256 over the ordered canonical attribute strings.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for a in &self.attributes {
            hasher.update(a.canonical().as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    pub fn to_json(&self) -> String {
        let file = VocabularyFile {
            version: VOCABULARY_FORMAT_VERSION,
            attributes: self
                .attributes
                .iter()
                .zip(&self.prior)
                .zip(&self.doc_frequency)
                .map(|((a, &prior), &doc_frequency)| AttributeEntry {
                    adjective: a.adjective.clone(),
                    noun: a.noun.clone(),
                    prior,
                    doc_frequency,
                })
                .collect(),
            image_attributes: self.image_attributes.clone(),
        };
        serde_json::to_string_pretty(&file).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, VocabularyParseError> {
        let file: VocabularyFile =
            serde_json::from_str(text).map_err(VocabularyParseError::Json)?;
        if file.version != VOCABULARY_FORMAT_VERSION {
            return Err(VocabularyParseError::Invalid(Error::InvalidArgument(
                format!("unsupported vocabulary version {}", file.version),
            )));
        }
        let mut attributes = Vec::with_capacity(file.attributes.len());
        let mut prior = Vec::with_capacity(file.attributes.len());
        let mut doc_frequency = Vec::with_capacity(file.attributes.len());
        for e in file.attributes {
            attributes.push(Attribute::new(e.adjective, e.noun));
            prior.push(e.prior);
            doc_frequency.push(e.doc_frequency);
        }
        Self::from_parts(attributes, prior, doc_frequency, file.image_attributes)
            .map_err(VocabularyParseError::Invalid)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            VocabularyParseError::Json(source) => Error::json(path, source),
            VocabularyParseError::Invalid(err) => err,
        })
    }
}

#[derive(Debug)]
pub enum VocabularyParseError {
    Json(serde_json::Error),
    Invalid(Error),
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    version: u32,
    attributes: Vec<AttributeEntry>,
    image_attributes: BTreeMap<String, Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct AttributeEntry {
    adjective: String,
    noun: String,
    prior: f64,
    doc_frequency: usize,
}

/// Extracts attributes from every caption file and computes the TF/IDF prior.
///
/// Per-attribute score is mean TF over the files containing it times
/// `ln(N / D)`; the prior is the L1-normalised score vector (uniform if every
/// score is zero).
pub fn build_vocabulary(
    corpus: &[CaptionDoc],
    extractor: &AttributeExtractor,
) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("caption corpus"));
    }
    let per_doc = exec::map_indexed(corpus.len(), |i| extractor.term_counts(&corpus[i]));

    // canonical -> (attribute, corpus frequency, doc frequency)
    let mut stats: BTreeMap<String, (Attribute, usize, usize)> = BTreeMap::new();
    for counts in &per_doc {
        for (attr, &count) in counts {
            let entry = stats
                .entry(attr.canonical())
                .or_insert_with(|| (attr.clone(), 0, 0));
            entry.1 += count;
            entry.2 += 1;
        }
    }
    if stats.is_empty() {
        return Err(Error::EmptyVocabulary);
    }

    let mut ordered: Vec<(String, Attribute, usize, usize)> = stats
        .into_iter()
        .map(|(key, (attr, freq, df))| (key, attr, freq, df))
        .collect();
    ordered.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(&b.0)));

    let n_docs = corpus.len();
    let scores: Vec<f64> = ordered
        .iter()
        .map(|(_, _, freq, df)| {
            let mean_tf = *freq as f64 / *df as f64;
            mean_tf * idf(n_docs, *df).expect("df in 1..=N")
        })
        .collect();
    let prior = l1_normalize(&scores);

    let index: HashMap<&str, usize> = ordered
        .iter()
        .enumerate()
        .map(|(i, (key, ..))| (key.as_str(), i))
        .collect();
    let mut image_attributes = BTreeMap::new();
    for (doc, counts) in corpus.iter().zip(&per_doc) {
        let mut ids: Vec<usize> = counts
            .keys()
            .map(|a| index[a.canonical().as_str()])
            .collect();
        ids.sort_unstable();
        image_attributes
            .entry(doc.image_id.clone())
            .or_insert_with(Vec::new)
            .extend(ids);
    }

    let (attributes, doc_frequency) = ordered
        .into_iter()
        .map(|(_, attr, _, df)| (attr, df))
        .unzip();
    Vocabulary::from_parts(attributes, prior, doc_frequency, image_attributes)
}

fn l1_normalize(scores: &[f64]) -> Vec<f64> {
    let total: f64 = scores.iter().sum();
    if total > 0.0 {
        scores.iter().map(|s| s / total).collect()
    } else {
        vec![1.0 / scores.len() as f64; scores.len()]
    }
}
