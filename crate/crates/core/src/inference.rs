//! Filter-attribute posteriors and the distributions derived from them.
//!
//! * `p(t | f)`: [`compute_filter_attribute_pdf`], one distribution over
//!   attributes per filter, with images marginalised out as latent variables.
//! * `p(t | x, c)`: [`image_class_attribute_pdf`], mixing filter rows by
//!   each filter's contribution to the class score of one image.
//! * `p(t | c)`: [`class_attribute_pdf`], mixing by the class weights alone.
//!
//! All inputs are `f32`; accumulation is `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Attribute, Vocabulary};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::tensor::Tensor;

/// Clamps negatives to zero and L1-normalises. All-nonpositive input maps to
/// the uniform distribution.
pub fn sigma(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("normalisation input"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite value {v} in normalisation input"
        )));
    }
    Ok(sigma_unchecked(values))
}

fn sigma_unchecked(values: &[f64]) -> Vec<f64> {
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    if total > 0.0 {
        values.iter().map(|v| v.max(0.0) / total).collect()
    } else {
        vec![1.0 / values.len() as f64; values.len()]
    }
}

/// `p(f | x_k)` for every image: row `k` is `sigma(pooled_k)`.
pub fn filter_given_image(dataset: &Dataset) -> Vec<Vec<f64>> {
    exec::map_indexed(dataset.len(), |k| {
        let pooled: Vec<f64> = dataset.images()[k]
            .pooled
            .iter()
            .map(|&v| v as f64)
            .collect();
        sigma_unchecked(&pooled)
    })
}

/// Row-stochastic `[n_filters, n_attributes]` matrix of `p(t_j | f_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterAttributePdf {
    n_filters: usize,
    n_attributes: usize,
    data: Vec<f64>,
}

impl FilterAttributePdf {
    /// Wraps explicit rows, normalising each with [`sigma`].
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_filters = rows.len();
        if n_filters == 0 {
            return Err(Error::EmptyInput("filter-attribute rows"));
        }
        let n_attributes = rows[0].len();
        let mut data = Vec::with_capacity(n_filters * n_attributes);
        for row in &rows {
            if row.len() != n_attributes {
                return Err(Error::InvalidArgument(
                    "ragged filter-attribute rows".into(),
                ));
            }
            data.extend(sigma(row)?);
        }
        Ok(Self {
            n_filters,
            n_attributes,
            data,
        })
    }

    /// Every entry `1 / n_attributes`: the attribute-agnostic baseline.
    pub fn constant(n_filters: usize, n_attributes: usize) -> Self {
        Self {
            n_filters,
            n_attributes,
            data: vec![1.0 / n_attributes as f64; n_filters * n_attributes],
        }
    }

    pub fn n_filters(&self) -> usize {
        self.n_filters
    }

    pub fn n_attributes(&self) -> usize {
        self.n_attributes
    }

    pub fn row(&self, filter: usize) -> &[f64] {
        &self.data[filter * self.n_attributes..(filter + 1) * self.n_attributes]
    }

    pub fn get(&self, filter: usize, attribute: usize) -> f64 {
        self.data[filter * self.n_attributes + attribute]
    }

    /// `p(t_j | f_k)` for all filters `k`: the grounding weights of attribute `j`.
    pub fn column(&self, attribute: usize) -> Vec<f64> {
        (0..self.n_filters)
            .map(|k| self.get(k, attribute))
            .collect()
    }

    /// Most probable attribute of a filter (lowest id on ties).
    pub fn argmax(&self, filter: usize) -> usize {
        argmax(self.row(filter))
    }

    /// Writes `<stem>.ftns` (the matrix) and `<stem>.json` (attribute order and
    /// vocabulary fingerprint) for a path `<stem>.ftns`.
    pub fn save(&self, path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<()> {
        let path = path.as_ref();
        let tensor = Tensor::new(
            vec![self.n_filters, self.n_attributes],
            self.data.iter().map(|&v| v as f32).collect(),
        )
        .map_err(|source| Error::Tensor {
            path: path.to_path_buf(),
            source,
        })?;
        tensor.save(path)?;
        let sidecar = PdfSidecar {
            version: 1,
            n_filters: self.n_filters,
            vocabulary_hash: vocab.fingerprint(),
            attributes: vocab
                .attributes()
                .iter()
                .map(Attribute::canonical)
                .collect(),
        };
        let side_path = sidecar_path(path);
        let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        std::fs::write(&side_path, json).map_err(|e| Error::io(&side_path, e))
    }

    /// Loads a saved matrix, refusing it if it was built against another vocabulary.
    pub fn load(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self> {
        let path = path.as_ref();
        let side_path = sidecar_path(path);
        let text = std::fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
        let sidecar: PdfSidecar =
            serde_json::from_str(&text).map_err(|e| Error::json(&side_path, e))?;
        let found = vocab.fingerprint();
        if sidecar.vocabulary_hash != found {
            return Err(Error::VocabularyMismatch {
                expected: sidecar.vocabulary_hash,
                found,
            });
        }
        let tensor = Tensor::load(path)?;
        if tensor.dims() != [sidecar.n_filters, vocab.len()] {
            return Err(Error::InvalidArgument(format!(
                "p.d.f. tensor dims {:?} do not match [{}, {}]",
                tensor.dims(),
                sidecar.n_filters,
                vocab.len()
            )));
        }
        let rows = (0..sidecar.n_filters)
            .map(|i| tensor.row(i).iter().map(|&v| v as f64).collect())
            .collect();
        Self::from_rows(rows)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

#[derive(Serialize, Deserialize)]
struct PdfSidecar {
    version: u32,
    n_filters: usize,
    vocabulary_hash: String,
    attributes: Vec<String>,
}

/// Where a distribution over attributes came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ImageClass,
    Class,
}

/// A distribution over the attribute vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributePdf {
    pub probabilities: Vec<f64>,
    pub provenance: Provenance,
}

/// `p(f | x, c)` or `p(f | c)`: a distribution over filters.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterImportance(pub Vec<f64>);

/// Computes `p(t_j | f_i) ∝ p(t_j) Σ_k p(f_i | x_k) · [t_j ∈ x_k]`.
///
/// Images are summed in dataset order. Every dataset image must have an entry
/// in the vocabulary's image-attribute table.
pub fn compute_filter_attribute_pdf(
    dataset: &Dataset,
    vocab: &Vocabulary,
) -> Result<FilterAttributePdf> {
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let image_attrs: Vec<&[usize]> = dataset
        .images()
        .iter()
        .map(|img| {
            vocab
                .attributes_of(&img.image_id)
                .ok_or_else(|| Error::UnknownImage(img.image_id.clone()))
        })
        .collect::<Result<_>>()?;
    if image_attrs.iter().all(|a| a.is_empty()) {
        return Err(Error::NoAttributeEvidence);
    }
    let given_image = filter_given_image(dataset);
    let l = vocab.len();
    let prior = vocab.prior();
    let rows = exec::map_indexed(dataset.n_filters(), |i| {
        let mut acc = vec![0.0f64; l];
        for (p_row, attrs) in given_image.iter().zip(&image_attrs) {
            let p = p_row[i];
            if p == 0.0 {
                continue;
            }
            for &j in *attrs {
                acc[j] += p;
            }
        }
        for (a, &pr) in acc.iter_mut().zip(prior) {
            *a *= pr;
        }
        sigma_unchecked(&acc)
    });
    Ok(FilterAttributePdf {
        n_filters: dataset.n_filters(),
        n_attributes: l,
        data: rows.into_iter().flatten().collect(),
    })
}

/// `p(f_k | x, c_m) = sigma(pooled[k] · W[m, k])`.
pub fn filter_importance(
    dataset: &Dataset,
    image_id: &str,
    class_id: usize,
) -> Result<FilterImportance> {
    let img = dataset.image(image_id)?;
    let w = dataset.weight_row(class_id)?;
    let contrib: Vec<f64> = img
        .pooled
        .iter()
        .zip(w)
        .map(|(&a, &b)| a as f64 * b as f64)
        .collect();
    Ok(FilterImportance(sigma_unchecked(&contrib)))
}

/// `p(f_k | c_m) = sigma(W[m, k])`.
pub fn class_filter_importance(dataset: &Dataset, class_id: usize) -> Result<FilterImportance> {
    let w: Vec<f64> = dataset
        .weight_row(class_id)?
        .iter()
        .map(|&v| v as f64)
        .collect();
    Ok(FilterImportance(sigma_unchecked(&w)))
}

/// Convex combination `Σ_k weight_k · row_k`, renormalised.
pub fn mix_rows(fa_pdf: &FilterAttributePdf, weights: &FilterImportance) -> Result<Vec<f64>> {
    if weights.0.len() != fa_pdf.n_filters() {
        return Err(Error::InvalidArgument(format!(
            "{} filter weights for a p.d.f. with {} filters",
            weights.0.len(),
            fa_pdf.n_filters()
        )));
    }
    let mut out = vec![0.0f64; fa_pdf.n_attributes()];
    for (k, &w) in weights.0.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, &p) in out.iter_mut().zip(fa_pdf.row(k)) {
            *o += w * p;
        }
    }
    Ok(sigma_unchecked(&out))
}

/// `p(t_j | x, c_m) = Σ_k p(t_j | f_k) · p(f_k | x, c_m)`.
pub fn image_class_attribute_pdf(
    dataset: &Dataset,
    fa_pdf: &FilterAttributePdf,
    image_id: &str,
    class_id: usize,
) -> Result<AttributePdf> {
    let importance = filter_importance(dataset, image_id, class_id)?;
    Ok(AttributePdf {
        probabilities: mix_rows(fa_pdf, &importance)?,
        provenance: Provenance::ImageClass,
    })
}

/// `p(t_j | c_m) = Σ_k p(t_j | f_k) · sigma(W[m])_k`.
pub fn class_attribute_pdf(
    dataset: &Dataset,
    fa_pdf: &FilterAttributePdf,
    class_id: usize,
) -> Result<AttributePdf> {
    let importance = class_filter_importance(dataset, class_id)?;
    Ok(AttributePdf {
        probabilities: mix_rows(fa_pdf, &importance)?,
        provenance: Provenance::Class,
    })
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
