//! Sentence-level BLEU of explanations against caption references.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::{tokenize, CaptionDoc};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::explanation::Explanation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothing {
    /// Any zero n-gram precision makes the score zero.
    None,
    /// For n >= 2, a zero clipped count becomes `1 / (total + 1)`.
    AddOne,
}

/// Which reference length drives the brevity penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceLength {
    /// Shortest reference. Adding a reference never lowers the score.
    Shortest,
    /// Reference closest in length to the candidate (shorter wins ties).
    Closest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BleuConfig {
    pub max_n: usize,
    pub smoothing: Smoothing,
    pub reference_length: ReferenceLength,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self {
            max_n: 4,
            smoothing: Smoothing::AddOne,
            reference_length: ReferenceLength::Shortest,
        }
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU of `candidate` against `references`: clipped n-gram precisions for
/// n = 1..=max_n, geometric mean, brevity penalty `exp(1 - r/c)` when the
/// candidate is shorter than the reference length `r`.
pub fn sentence_bleu<S: AsRef<str>>(
    candidate: &str,
    references: &[S],
    config: &BleuConfig,
) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::EmptyInput("BLEU references"));
    }
    if config.max_n == 0 {
        return Err(Error::InvalidArgument(
            "BLEU max_n must be at least 1".into(),
        ));
    }
    let cand = tokenize(candidate);
    if cand.is_empty() {
        return Ok(0.0);
    }
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r.as_ref())).collect();

    let mut log_sum = 0.0;
    for n in 1..=config.max_n {
        let cand_counts = ngram_counts(&cand, n);
        let total = cand.len().saturating_sub(n - 1);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let clipped: usize = cand_counts
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let precision = if clipped > 0 {
            clipped as f64 / total as f64
        } else if n >= 2 && config.smoothing == Smoothing::AddOne {
            1.0 / (total as f64 + 1.0)
        } else {
            return Ok(0.0);
        };
        log_sum += precision.ln();
    }

    let c = cand.len();
    let r = match config.reference_length {
        ReferenceLength::Shortest => refs.iter().map(Vec::len).min().unwrap(),
        ReferenceLength::Closest => refs
            .iter()
            .map(Vec::len)
            .min_by_key(|&len| (len.abs_diff(c), len))
            .unwrap(),
    };
    let brevity = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    Ok((brevity * (log_sum / config.max_n as f64).exp()).clamp(0.0, 1.0))
}

/// What part of an explanation is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateMode {
    /// The full template sentence.
    Sentence,
    /// Only the merged attribute phrases.
    Attributes,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BleuReport {
    pub score_correct: Option<f64>,
    pub score_wrong: Option<f64>,
    pub score_overall: f64,
    pub n_correct: usize,
    pub n_wrong: usize,
    pub config: BleuConfig,
    pub mode: CandidateMode,
}

impl BleuReport {
    pub fn to_table(&self) -> String {
        let f = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
        let mut out = String::new();
        let _ = writeln!(out, "{:>8} {:>8} {:>8}", "Correct", "Wrong", "Overall");
        let _ = writeln!(
            out,
            "{:>8} {:>8} {:>8}",
            f(self.score_correct),
            f(self.score_wrong),
            f(Some(self.score_overall))
        );
        out
    }
}

/// Mean sentence BLEU of each predicted-class explanation against its
/// image's captions, split by whether the prediction was right.
pub fn bleu_report(
    dataset: &Dataset,
    explanations: &[Explanation],
    captions: &[CaptionDoc],
    config: &BleuConfig,
    mode: CandidateMode,
) -> Result<BleuReport> {
    let refs: HashMap<&str, &CaptionDoc> =
        captions.iter().map(|d| (d.image_id.as_str(), d)).collect();
    let scored: Vec<&Explanation> = explanations
        .iter()
        .filter(|e| {
            e.image_id
                .as_deref()
                .and_then(|id| dataset.image(id).ok())
                .is_some_and(|img| img.predicted_class.is_some())
        })
        .collect();
    if scored.is_empty() {
        return Err(Error::NoPredictions);
    }
    let results = exec::try_map_indexed(scored.len(), |i| {
        let e = scored[i];
        let id = e.image_id.as_deref().unwrap();
        let img = dataset.image(id)?;
        let doc = refs
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("no captions for image {id:?}")))?;
        let candidate = match mode {
            CandidateMode::Sentence => e.sentence.clone(),
            CandidateMode::Attributes => e.attribute_text(),
        };
        let score = sentence_bleu(&candidate, &doc.captions, config)?;
        Ok::<_, Error>((img.is_misclassified(), score))
    })?;

    let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let correct: Vec<f64> = results.iter().filter(|r| !r.0).map(|r| r.1).collect();
    let wrong: Vec<f64> = results.iter().filter(|r| r.0).map(|r| r.1).collect();
    let all: Vec<f64> = results.iter().map(|r| r.1).collect();
    Ok(BleuReport {
        score_correct: mean(&correct),
        score_wrong: mean(&wrong),
        score_overall: mean(&all).expect("nonempty"),
        n_correct: correct.len(),
        n_wrong: wrong.len(),
        config: *config,
        mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bleu(c: &str, refs: &[&str]) -> f64 {
        sentence_bleu(c, refs, &BleuConfig::default()).unwrap()
    }

    #[test]
    fn identity_is_one() {
        assert_eq!(
            bleu("this bird has a red crown", &["this bird has a red crown"]),
            1.0
        );
        assert_eq!(bleu("crown", &["crown"]), 1.0);
    }

    #[test]
    fn no_overlap_is_zero() {
        assert_eq!(bleu("green wings", &["a red crown"]), 0.0);
    }

    #[test]
    fn empty_candidate_and_references() {
        assert_eq!(bleu("", &["a red crown"]), 0.0);
        assert!(sentence_bleu::<&str>("x", &[], &BleuConfig::default()).is_err());
    }

    #[test]
    fn hand_computed_bleu4() {
        // p1 = 6/7, p2 = 5/6, p3 = 4/5, p4 = 3/4; equal lengths so BP = 1
        let expected = (6.0f64 / 7.0 * 5.0 / 6.0 * 4.0 / 5.0 * 3.0 / 4.0).powf(0.25);
        let got = bleu(
            "the small bird has a red crown",
            &["the small bird has a red head"],
        );
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn smoothing_of_zero_higher_orders() {
        // "red crown tail" vs "red crown": p1 = 2/3, p2 = 1/2, p3 zero -> 1/(1+1), p4 zero (total 0) -> 1/1
        // BP = 1 (c = 3 > r = 2)
        let expected = (2.0f64 / 3.0 * 0.5 * 0.5 * 1.0).powf(0.25);
        let got = bleu("red crown tail", &["red crown"]);
        assert!((got - expected).abs() < 1e-12);
        let none = BleuConfig {
            smoothing: Smoothing::None,
            ..BleuConfig::default()
        };
        assert_eq!(
            sentence_bleu("red crown tail", &["red crown"], &none).unwrap(),
            0.0
        );
    }

    #[test]
    fn brevity_penalty_modes() {
        // candidate of 2 tokens, references of 3 and 6 tokens
        let refs = ["red crown here", "a red crown on this bird"];
        let c = "red crown";
        let shortest = BleuConfig::default();
        let closest = BleuConfig {
            reference_length: ReferenceLength::Closest,
            ..shortest
        };
        let s = sentence_bleu(c, &refs, &shortest).unwrap();
        let k = sentence_bleu(c, &refs, &closest).unwrap();
        // p1 = 1, p2 = 1, p3 = p4 = 1/(0+1) = 1; BP = exp(1 - 3/2)
        assert!((s - (1.0f64 - 1.5).exp()).abs() < 1e-12);
        assert!((k - s).abs() < 1e-12);
    }

    #[test]
    fn closest_reference_can_lower_score_when_reference_added() {
        // Why the shortest-reference penalty is the default: with the closest
        // rule a longer, unrelated reference can shrink the score.
        let closest = BleuConfig {
            reference_length: ReferenceLength::Closest,
            ..BleuConfig::default()
        };
        let c = "a b c d e";
        let one = sentence_bleu(c, &["a b c"], &closest).unwrap();
        let two = sentence_bleu(c, &["a b c", "q q q q q q"], &closest).unwrap();
        assert!(two < one);
        let s1 = bleu(c, &["a b c"]);
        let s2 = bleu(c, &["a b c", "q q q q q q"]);
        assert!(s2 >= s1);
    }
}
