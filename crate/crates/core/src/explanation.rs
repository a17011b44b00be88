//! Template sentences, contrastive comparisons and failure reports.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::{Attribute, Vocabulary};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::inference::{
    class_attribute_pdf, image_class_attribute_pdf, AttributePdf, FilterAttributePdf,
};

pub const DEFAULT_TOP_K: usize = 5;

/// Margin below which a probability difference does not favour either class.
pub const CONTRAST_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedAttribute {
    pub attribute: Attribute,
    pub probability: f64,
}

/// `k` most probable attributes, descending; exact ties go to the
/// lexicographically smaller canonical string.
pub fn top_k(pdf: &AttributePdf, vocab: &Vocabulary, k: usize) -> Vec<RankedAttribute> {
    let probs = &pdf.probabilities;
    let canon: Vec<String> = vocab
        .attributes()
        .iter()
        .map(Attribute::canonical)
        .collect();
    let mut ids: Vec<usize> = (0..probs.len().min(vocab.len())).collect();
    ids.sort_by(|&a, &b| {
        probs[b]
            .total_cmp(&probs[a])
            .then_with(|| canon[a].cmp(&canon[b]))
    });
    ids.truncate(k.max(1));
    ids.into_iter()
        .map(|j| RankedAttribute {
            attribute: vocab.attribute(j).clone(),
            probability: probs[j],
        })
        .collect()
}

/// Several adjectives sharing one noun, e.g. "long, striped tail".
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergedPhrase {
    pub adjectives: Vec<String>,
    pub noun: String,
    /// Probability of the strongest member.
    pub probability: f64,
}

impl MergedPhrase {
    pub fn text(&self) -> String {
        format!("{} {}", self.adjectives.join(", "), self.noun)
    }
}

/// Collapses attributes that share a noun into one phrase, placed where its
/// most probable member was. Adjectives are listed strongest first.
pub fn merge_adjectives(attrs: &[RankedAttribute]) -> Vec<MergedPhrase> {
    let phrases: Vec<MergedPhrase> = attrs
        .iter()
        .map(|r| MergedPhrase {
            adjectives: vec![r.attribute.adjective.clone()],
            noun: r.attribute.noun.clone(),
            probability: r.probability,
        })
        .collect();
    merge_phrases(&phrases)
}

/// Noun-merging on already merged phrases; idempotent.
pub fn merge_phrases(phrases: &[MergedPhrase]) -> Vec<MergedPhrase> {
    // (adjective, probability) members per noun, in first-seen order.
    let mut groups: Vec<(String, Vec<(String, f64)>)> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for p in phrases {
        let g = *slot.entry(p.noun.as_str()).or_insert_with(|| {
            groups.push((p.noun.clone(), Vec::new()));
            groups.len() - 1
        });
        for adj in &p.adjectives {
            if !groups[g].1.iter().any(|(a, _)| a == adj) {
                groups[g].1.push((adj.clone(), p.probability));
            }
        }
    }
    let mut merged: Vec<MergedPhrase> = groups
        .into_iter()
        .map(|(noun, mut members)| {
            // stable: equal probabilities keep input order
            members.sort_by(|a, b| b.1.total_cmp(&a.1));
            MergedPhrase {
                probability: members[0].1,
                adjectives: members.into_iter().map(|(a, _)| a).collect(),
                noun,
            }
        })
        .collect();
    // Position = position of the strongest member. With descending input that
    // is the first occurrence, which `groups` already preserves; otherwise
    // reorder by where each group's best member appeared.
    let first_best: HashMap<String, usize> = merged
        .iter()
        .map(|m| {
            let pos = phrases
                .iter()
                .position(|p| p.noun == m.noun && p.probability == m.probability)
                .unwrap_or(usize::MAX);
            (m.noun.clone(), pos)
        })
        .collect();
    merged.sort_by_key(|m| first_best[&m.noun]);
    merged
}

/// `"This is a {class} because it has {p1}, {p2}, ..., and {pn}."`
pub fn render_sentence<S: AsRef<str>>(class_name: &str, phrases: &[S]) -> Result<String> {
    let list = match phrases {
        [] => return Err(Error::EmptyInput("explanation phrases")),
        [one] => one.as_ref().to_string(),
        [a, b] => format!("{} and {}", a.as_ref(), b.as_ref()),
        [init @ .., last] => {
            let mut s = String::new();
            for p in init {
                s.push_str(p.as_ref());
                s.push_str(", ");
            }
            s.push_str("and ");
            s.push_str(last.as_ref());
            s
        }
    };
    Ok(format!("This is a {class_name} because it has {list}."))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Explanation {
    /// `None` for class-level descriptions.
    pub image_id: Option<String>,
    pub class_id: usize,
    pub top_attributes: Vec<RankedAttribute>,
    pub sentence: String,
}

impl Explanation {
    /// The merged attribute phrases without the template, comma separated.
    pub fn attribute_text(&self) -> String {
        merge_adjectives(&self.top_attributes)
            .iter()
            .map(MergedPhrase::text)
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn probability_of(&self, attribute: &Attribute) -> Option<f64> {
        self.top_attributes
            .iter()
            .find(|r| &r.attribute == attribute)
            .map(|r| r.probability)
    }
}

fn explanation_from_pdf(
    dataset: &Dataset,
    vocab: &Vocabulary,
    pdf: &AttributePdf,
    image_id: Option<&str>,
    class_id: usize,
    k: usize,
) -> Result<Explanation> {
    let top = top_k(pdf, vocab, k);
    let phrases: Vec<String> = merge_adjectives(&top)
        .iter()
        .map(MergedPhrase::text)
        .collect();
    let sentence = render_sentence(dataset.class_name(class_id)?, &phrases)?;
    Ok(Explanation {
        image_id: image_id.map(String::from),
        class_id,
        top_attributes: top,
        sentence,
    })
}

/// Explains why `image_id` would be assigned `class_id`, from its top-`k` attributes.
pub fn explain(
    dataset: &Dataset,
    vocab: &Vocabulary,
    fa_pdf: &FilterAttributePdf,
    image_id: &str,
    class_id: usize,
    k: usize,
) -> Result<Explanation> {
    let pdf = image_class_attribute_pdf(dataset, fa_pdf, image_id, class_id)?;
    explanation_from_pdf(dataset, vocab, &pdf, Some(image_id), class_id, k)
}

/// Class-level description from the classifier weights alone.
pub fn describe_class(
    dataset: &Dataset,
    vocab: &Vocabulary,
    fa_pdf: &FilterAttributePdf,
    class_id: usize,
    k: usize,
) -> Result<Explanation> {
    let pdf = class_attribute_pdf(dataset, fa_pdf, class_id)?;
    explanation_from_pdf(dataset, vocab, &pdf, None, class_id, k)
}

/// Explanations of every image against its predicted class (true class when
/// there is no prediction), in dataset order.
pub fn explain_all(
    dataset: &Dataset,
    vocab: &Vocabulary,
    fa_pdf: &FilterAttributePdf,
    k: usize,
) -> Result<Vec<Explanation>> {
    exec::try_map_indexed(dataset.len(), |i| {
        let img = &dataset.images()[i];
        explain(
            dataset,
            vocab,
            fa_pdf,
            &img.image_id,
            img.predicted_class.unwrap_or(img.true_class),
            k,
        )
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeDelta {
    pub attribute: Attribute,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastiveExplanation {
    pub image_id: String,
    pub class_a: usize,
    pub class_b: usize,
    pub shared: Vec<Attribute>,
    pub favors_a: Vec<AttributeDelta>,
    pub favors_b: Vec<AttributeDelta>,
}

/// Why `image_id` looks like `class_a` rather than `class_b` (and vice versa).
///
/// Attributes in both top-`k` lists are shared. The rest of each list is kept
/// when its probability exceeds the other class's by more than
/// [`CONTRAST_EPSILON`], ranked by that margin.
pub fn contrast(
    dataset: &Dataset,
    vocab: &Vocabulary,
    fa_pdf: &FilterAttributePdf,
    image_id: &str,
    class_a: usize,
    class_b: usize,
    k: usize,
) -> Result<ContrastiveExplanation> {
    if class_a == class_b {
        return Err(Error::InvalidArgument(format!(
            "contrast needs two different classes, got {class_a} twice"
        )));
    }
    let pdf_a = image_class_attribute_pdf(dataset, fa_pdf, image_id, class_a)?;
    let pdf_b = image_class_attribute_pdf(dataset, fa_pdf, image_id, class_b)?;
    let top_a = top_k(&pdf_a, vocab, k);
    let top_b = top_k(&pdf_b, vocab, k);
    let in_b = |a: &Attribute| top_b.iter().any(|r| &r.attribute == a);
    let shared: Vec<Attribute> = top_a
        .iter()
        .filter(|r| in_b(&r.attribute))
        .map(|r| r.attribute.clone())
        .collect();

    let favors = |top: &[RankedAttribute], mine: &AttributePdf, other: &AttributePdf| {
        let mut out: Vec<AttributeDelta> = top
            .iter()
            .filter(|r| !shared.contains(&r.attribute))
            .filter_map(|r| {
                let j = vocab.id_of(&r.attribute)?;
                let delta = mine.probabilities[j] - other.probabilities[j];
                (delta > CONTRAST_EPSILON).then(|| AttributeDelta {
                    attribute: r.attribute.clone(),
                    delta,
                })
            })
            .collect();
        out.sort_by(|x, y| {
            y.delta
                .total_cmp(&x.delta)
                .then_with(|| x.attribute.canonical().cmp(&y.attribute.canonical()))
        });
        out
    };
    let favors_a = favors(&top_a, &pdf_a, &pdf_b);
    let favors_b = favors(&top_b, &pdf_b, &pdf_a);
    Ok(ContrastiveExplanation {
        image_id: image_id.to_string(),
        class_a,
        class_b,
        shared,
        favors_a,
        favors_b,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureEntry {
    pub image_id: String,
    pub true_class: usize,
    pub predicted_class: usize,
    pub explanation_pred: Explanation,
    pub explanation_true: Explanation,
    /// `class_a` is the prediction, `class_b` the ground truth.
    pub contrastive: ContrastiveExplanation,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FailureReport {
    pub entries: Vec<FailureEntry>,
}

#[derive(Serialize)]
struct FailureJson<'a> {
    image_id: &'a str,
    true_class: usize,
    predicted_class: usize,
    sentence_pred: &'a str,
    sentence_true: &'a str,
    shared: Vec<String>,
    favors_pred: &'a [AttributeDelta],
    favors_true: &'a [AttributeDelta],
}

impl FailureReport {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<FailureJson> = self
            .entries
            .iter()
            .map(|e| FailureJson {
                image_id: &e.image_id,
                true_class: e.true_class,
                predicted_class: e.predicted_class,
                sentence_pred: &e.explanation_pred.sentence,
                sentence_true: &e.explanation_true.sentence,
                shared: e
                    .contrastive
                    .shared
                    .iter()
                    .map(Attribute::canonical)
                    .collect(),
                favors_pred: &e.contrastive.favors_a,
                favors_true: &e.contrastive.favors_b,
            })
            .collect();
        serde_json::to_string_pretty(&rows).expect("report serializes")
    }

    pub fn to_text(&self, dataset: &Dataset) -> String {
        let mut out = String::new();
        let name = |c: usize| dataset.class_name(c).unwrap_or("?").to_string();
        let fmt_deltas = |d: &[AttributeDelta]| {
            if d.is_empty() {
                "-".to_string()
            } else {
                d.iter()
                    .map(|x| format!("{} (+{:.4})", x.attribute, x.delta))
                    .collect::<Vec<_>>()
                    .join(", ")
            }
        };
        for e in &self.entries {
            let _ = writeln!(out, "== {} ==", e.image_id);
            let _ = writeln!(
                out,
                "predicted: {}  true: {}",
                name(e.predicted_class),
                name(e.true_class)
            );
            let _ = writeln!(out, "  predicted: {}", e.explanation_pred.sentence);
            let _ = writeln!(out, "  true:      {}", e.explanation_true.sentence);
            let shared: Vec<String> = e
                .contrastive
                .shared
                .iter()
                .map(Attribute::canonical)
                .collect();
            let _ = writeln!(
                out,
                "  shared: {}",
                if shared.is_empty() {
                    "-".into()
                } else {
                    shared.join(", ")
                }
            );
            let _ = writeln!(
                out,
                "  favours predicted: {}",
                fmt_deltas(&e.contrastive.favors_a)
            );
            let _ = writeln!(
                out,
                "  favours true:      {}",
                fmt_deltas(&e.contrastive.favors_b)
            );
            out.push('\n');
        }
        out
    }
}

/// One entry per misclassified image, sorted by image id.
pub fn failure_report(
    dataset: &Dataset,
    vocab: &Vocabulary,
    fa_pdf: &FilterAttributePdf,
    k: usize,
) -> Result<FailureReport> {
    let mut failed: Vec<&str> = dataset
        .images()
        .iter()
        .filter(|img| img.is_misclassified())
        .map(|img| img.image_id.as_str())
        .collect();
    failed.sort_unstable();
    let entries = exec::try_map_indexed(failed.len(), |i| {
        let img = dataset.image(failed[i])?;
        let pred = img
            .predicted_class
            .expect("misclassified implies prediction");
        Ok(FailureEntry {
            image_id: img.image_id.clone(),
            true_class: img.true_class,
            predicted_class: pred,
            explanation_pred: explain(dataset, vocab, fa_pdf, &img.image_id, pred, k)?,
            explanation_true: explain(dataset, vocab, fa_pdf, &img.image_id, img.true_class, k)?,
            contrastive: contrast(
                dataset,
                vocab,
                fa_pdf,
                &img.image_id,
                pred,
                img.true_class,
                k,
            )?,
        })
    })?;
    Ok(FailureReport { entries })
}
