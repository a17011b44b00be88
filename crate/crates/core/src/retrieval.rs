//! Attribute-based image retrieval over generated explanations.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::{Attribute, Vocabulary};
use crate::exec;
use crate::explanation::Explanation;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalResult {
    pub query: Vec<Attribute>,
    /// `(image_id, score)`, score nonincreasing.
    pub ranked_images: Vec<(String, f64)>,
}

impl RetrievalResult {
    pub fn image_ids(&self) -> BTreeSet<&str> {
        self.ranked_images
            .iter()
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

/// Images whose explanation lists every query attribute, ranked by the summed
/// probability of the query attributes (ties by image id).
///
/// A query attribute missing from the vocabulary yields an empty result.
pub fn retrieve(
    explanations: &[Explanation],
    vocab: &Vocabulary,
    query: &[Attribute],
) -> RetrievalResult {
    let result = |ranked_images| RetrievalResult {
        query: query.to_vec(),
        ranked_images,
    };
    if let Some(unknown) = query.iter().find(|a| vocab.id_of(a).is_none()) {
        log::warn!(
            "query attribute {:?} is not in the vocabulary",
            unknown.canonical()
        );
        return result(Vec::new());
    }
    let mut ranked: Vec<(String, f64)> = explanations
        .iter()
        .filter_map(|e| {
            let id = e.image_id.as_ref()?;
            let mut score = 0.0;
            for q in query {
                score += e.probability_of(q)?;
            }
            Some((id.clone(), score))
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    result(ranked)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Contingency {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Contingency {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn true_negative_rate(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    fn add(&mut self, other: &Contingency) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RateSummary {
    pub recall: Option<f64>,
    pub true_negative_rate: Option<f64>,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeRetrieval {
    pub attribute: String,
    pub counts: Contingency,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalMetrics {
    pub n_attributes: usize,
    pub n_images: usize,
    /// Mean over attributes of each rate (attributes where it is undefined are skipped).
    pub macro_average: RateSummary,
    /// Rates of the pooled contingency table.
    pub micro_average: RateSummary,
    pub per_attribute: Vec<AttributeRetrieval>,
}

impl RetrievalMetrics {
    pub fn to_table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{:.1}%", x * 100.0));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<6} {:>9} {:>14} {:>9} {:>10}",
            "", "Recall", "True Negative", "Accuracy", "Precision"
        );
        for (name, s) in [
            ("macro", &self.macro_average),
            ("micro", &self.micro_average),
        ] {
            let _ = writeln!(
                out,
                "{:<6} {:>9} {:>14} {:>9} {:>10}",
                name,
                pct(s.recall),
                pct(s.true_negative_rate),
                pct(s.accuracy),
                pct(s.precision)
            );
        }
        out
    }
}

/// Compares single-attribute retrieval with caption ground truth for the
/// `top_n` most frequent attributes, over the images that have explanations.
pub fn retrieval_metrics(
    explanations: &[Explanation],
    vocab: &Vocabulary,
    top_n: usize,
) -> RetrievalMetrics {
    let universe: Vec<&str> = explanations
        .iter()
        .filter_map(|e| e.image_id.as_deref())
        .collect();
    let selected: Vec<usize> = (0..vocab.len().min(top_n)).collect();
    let per_attribute = exec::map_indexed(selected.len(), |s| {
        let j = selected[s];
        let attr = vocab.attribute(j);
        let hits = retrieve(explanations, vocab, std::slice::from_ref(attr));
        let retrieved = hits.image_ids();
        let mut c = Contingency::default();
        for id in &universe {
            match (retrieved.contains(id), vocab.contains(id, j)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        AttributeRetrieval {
            attribute: attr.canonical(),
            counts: c,
        }
    });

    let mean = |f: &dyn Fn(&Contingency) -> Option<f64>| {
        let vals: Vec<f64> = per_attribute.iter().filter_map(|a| f(&a.counts)).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let macro_average = RateSummary {
        recall: mean(&Contingency::recall),
        true_negative_rate: mean(&Contingency::true_negative_rate),
        accuracy: mean(&Contingency::accuracy),
        precision: mean(&Contingency::precision),
    };
    let mut pooled = Contingency::default();
    for a in &per_attribute {
        pooled.add(&a.counts);
    }
    let micro_average = RateSummary {
        recall: pooled.recall(),
        true_negative_rate: pooled.true_negative_rate(),
        accuracy: pooled.accuracy(),
        precision: pooled.precision(),
    };
    RetrievalMetrics {
        n_attributes: selected.len(),
        n_images: universe.len(),
        macro_average,
        micro_average,
        per_attribute,
    }
}
