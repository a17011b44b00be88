//! Attribute grounding heatmaps and PCK evaluation against keypoints.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{Attribute, Vocabulary};
use crate::dataset::{Dataset, ImageRecord, KeypointMapping};
use crate::error::{Error, Result};
use crate::exec;
use crate::inference::FilterAttributePdf;
use crate::tensor::Tensor;

pub const DEFAULT_ALPHAS: [f64; 3] = [0.1, 0.2, 0.3];
pub const DEFAULT_TOP_N_ATTRIBUTES: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    /// `[H, W]`, values in `[0, 1]`.
    pub grid: Tensor,
    pub image_id: String,
    pub attribute: Attribute,
}

impl Heatmap {
    pub fn height(&self) -> usize {
        self.grid.dims()[0]
    }

    pub fn width(&self) -> usize {
        self.grid.dims()[1]
    }

    pub fn is_zero(&self) -> bool {
        self.grid.data().iter().all(|&v| v == 0.0)
    }

    /// Binary PGM (P5, 8-bit), scaled so 1.0 maps to 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width(), self.height()).into_bytes();
        out.extend(
            self.grid
                .data()
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

/// Weighted sum of the image's feature maps with weights `alpha`, negatives
/// clamped, max-normalised to `[0, 1]`.
pub fn ground_with_weights(
    img: &ImageRecord,
    alpha: &[f64],
    attribute: Attribute,
) -> Result<Heatmap> {
    let spatial = img
        .spatial
        .as_ref()
        .ok_or_else(|| Error::MissingSpatial(img.image_id.clone()))?;
    let (n, h, w) = (spatial.dims()[0], spatial.dims()[1], spatial.dims()[2]);
    if alpha.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} grounding weights for {n} feature maps",
            alpha.len()
        )));
    }
    let mut acc = vec![0.0f64; h * w];
    for (k, &a) in alpha.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (o, &v) in acc.iter_mut().zip(spatial.row(k)) {
            *o += a * v as f64;
        }
    }
    let max = acc.iter().fold(0.0f64, |m, &v| m.max(v));
    let data: Vec<f32> = if max > 0.0 {
        acc.iter().map(|&v| (v.max(0.0) / max) as f32).collect()
    } else {
        vec![0.0; h * w]
    };
    Ok(Heatmap {
        grid: Tensor::new(vec![h, w], data).expect("finite heatmap"),
        image_id: img.image_id.clone(),
        attribute,
    })
}

/// Grounds vocabulary attribute `attribute` in `image_id`, weighting filter
/// `k` by `p(attribute | f_k)`.
pub fn ground(
    dataset: &Dataset,
    vocab: &Vocabulary,
    fa_pdf: &FilterAttributePdf,
    image_id: &str,
    attribute: &Attribute,
) -> Result<Heatmap> {
    let j = vocab
        .id_of(attribute)
        .ok_or_else(|| Error::UnknownAttribute(attribute.canonical()))?;
    let img = dataset.image(image_id)?;
    ground_with_weights(img, &fa_pdf.column(j), attribute.clone())
}

/// Pixel centre of the hottest cell (first in row-major order on ties).
/// `image_size` is `(width, height)`.
pub fn heatmap_peak(heatmap: &Heatmap, image_size: (u32, u32)) -> Result<(f64, f64)> {
    let data = heatmap.grid.data();
    let mut best = 0;
    for (i, &v) in data.iter().enumerate() {
        if v > data[best] {
            best = i;
        }
    }
    if data[best] <= 0.0 {
        return Err(Error::NoActivation);
    }
    let (h, w) = (heatmap.height(), heatmap.width());
    let (row, col) = (best / w, best % w);
    let x = (col as f64 + 0.5) * image_size.0 as f64 / w as f64;
    let y = (row as f64 + 0.5) * image_size.1 as f64 / h as f64;
    Ok((x, y))
}

/// `max(width, height)` of the (cropped) image.
pub fn object_size(image_size: (u32, u32)) -> f64 {
    image_size.0.max(image_size.1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributePck {
    pub attribute: String,
    pub n_evaluated: usize,
    pub fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PckResult {
    pub method: String,
    pub alphas: Vec<f64>,
    /// Fraction correct at each alpha, aligned with `alphas`.
    pub fractions: Vec<f64>,
    pub n_evaluated: usize,
    pub per_attribute: Vec<AttributePck>,
}

impl PckResult {
    pub fn at(&self, alpha: f64) -> Option<f64> {
        self.alphas
            .iter()
            .position(|&a| (a - alpha).abs() < 1e-12)
            .map(|i| self.fractions[i])
    }
}

/// One (image, attribute) pair eligible for PCK.
#[derive(Debug, Clone, PartialEq)]
pub struct PckPair {
    pub image_index: usize,
    pub attribute: usize,
    pub keypoint: (f64, f64),
}

/// The `top_n` most frequent vocabulary attributes whose noun has a keypoint.
pub fn mapped_attributes(
    vocab: &Vocabulary,
    mapping: &KeypointMapping,
    top_n: usize,
) -> Vec<usize> {
    (0..vocab.len())
        .filter(|&j| mapping.keypoint_for(&vocab.attribute(j).noun).is_some())
        .take(top_n)
        .collect()
}

/// Pairs where the captions contain the attribute and its keypoint is visible.
pub fn pck_pairs(
    dataset: &Dataset,
    vocab: &Vocabulary,
    mapping: &KeypointMapping,
    top_n: usize,
) -> Result<Vec<PckPair>> {
    let selected = mapped_attributes(vocab, mapping, top_n);
    let mut pairs = Vec::new();
    for (i, img) in dataset.images().iter().enumerate() {
        for &j in &selected {
            if !vocab.contains(&img.image_id, j) {
                continue;
            }
            let name = mapping
                .keypoint_for(&vocab.attribute(j).noun)
                .expect("selected attributes are mapped");
            if let Some(kp) = img.keypoint(name).filter(|k| k.visible) {
                pairs.push(PckPair {
                    image_index: i,
                    attribute: j,
                    keypoint: (kp.x as f64, kp.y as f64),
                });
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoEvaluablePairs);
    }
    Ok(pairs)
}

fn validate_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() || alphas.iter().any(|a| !a.is_finite() || *a <= 0.0) {
        return Err(Error::InvalidArgument(
            "alphas must be positive and non-empty".into(),
        ));
    }
    Ok(())
}

/// Tallies per-pair "distance / object size" values (`None` = never correct).
fn summarize(
    method: &str,
    vocab: &Vocabulary,
    pairs: &[PckPair],
    normalized_dist: &[Vec<Option<f64>>],
    alphas: &[f64],
) -> PckResult {
    let trials = |d: &[Option<f64>], a: f64| {
        d.iter().filter(|x| x.is_some_and(|v| v <= a)).count() as f64 / d.len() as f64
    };
    let mut per_attr: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (p, pair) in pairs.iter().enumerate() {
        per_attr.entry(pair.attribute).or_default().push(p);
    }
    let mean_over = |idx: &[usize], a: f64| {
        idx.iter()
            .map(|&p| trials(&normalized_dist[p], a))
            .sum::<f64>()
            / idx.len() as f64
    };
    let all: Vec<usize> = (0..pairs.len()).collect();
    PckResult {
        method: method.to_string(),
        alphas: alphas.to_vec(),
        fractions: alphas.iter().map(|&a| mean_over(&all, a)).collect(),
        n_evaluated: pairs.len(),
        per_attribute: per_attr
            .into_iter()
            .map(|(j, idx)| AttributePck {
                attribute: vocab.attribute(j).canonical(),
                n_evaluated: idx.len(),
                fractions: alphas.iter().map(|&a| mean_over(&idx, a)).collect(),
            })
            .collect(),
    }
}

fn grounding_pck(
    method: &str,
    dataset: &Dataset,
    vocab: &Vocabulary,
    fa_pdf: &FilterAttributePdf,
    pairs: &[PckPair],
    alphas: &[f64],
) -> Result<PckResult> {
    let dists = exec::try_map_indexed(pairs.len(), |p| {
        let pair = &pairs[p];
        let img = &dataset.images()[pair.image_index];
        let heat = ground_with_weights(
            img,
            &fa_pdf.column(pair.attribute),
            vocab.attribute(pair.attribute).clone(),
        )?;
        // An all-zero heatmap has no peak and counts as a miss.
        Ok::<_, Error>(match heatmap_peak(&heat, img.image_size) {
            Ok((x, y)) => {
                let d = ((x - pair.keypoint.0).powi(2) + (y - pair.keypoint.1).powi(2)).sqrt();
                vec![Some(d / object_size(img.image_size))]
            }
            Err(_) => vec![None],
        })
    })?;
    Ok(summarize(method, vocab, pairs, &dists, alphas))
}

/// PCK@alpha of p.d.f.-weighted grounding over the `top_n` most frequent mapped attributes.
pub fn pck(
    dataset: &Dataset,
    vocab: &Vocabulary,
    fa_pdf: &FilterAttributePdf,
    mapping: &KeypointMapping,
    alphas: &[f64],
    top_n: usize,
) -> Result<PckResult> {
    validate_alphas(alphas)?;
    let pairs = pck_pairs(dataset, vocab, mapping, top_n)?;
    grounding_pck("proposed", dataset, vocab, fa_pdf, &pairs, alphas)
}

/// PCK when the predicted location is uniform over the image. Each pair is
/// drawn `trials` times from its own seeded stream.
pub fn random_pck(
    dataset: &Dataset,
    vocab: &Vocabulary,
    mapping: &KeypointMapping,
    alphas: &[f64],
    top_n: usize,
    seed: u64,
    trials: usize,
) -> Result<PckResult> {
    validate_alphas(alphas)?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let pairs = pck_pairs(dataset, vocab, mapping, top_n)?;
    let dists = exec::map_indexed(pairs.len(), |p| {
        let pair = &pairs[p];
        let img = &dataset.images()[pair.image_index];
        let (w, h) = (img.image_size.0 as f64, img.image_size.1 as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(p as u64);
        (0..trials)
            .map(|_| {
                let x = rng.gen::<f64>() * w;
                let y = rng.gen::<f64>() * h;
                let d = ((x - pair.keypoint.0).powi(2) + (y - pair.keypoint.1).powi(2)).sqrt();
                Some(d / object_size(img.image_size))
            })
            .collect()
    });
    Ok(summarize("random", vocab, &pairs, &dists, alphas))
}

/// PCK with every `p(t | f)` replaced by `1 / l`.
pub fn constant_pdf_pck(
    dataset: &Dataset,
    vocab: &Vocabulary,
    mapping: &KeypointMapping,
    alphas: &[f64],
    top_n: usize,
) -> Result<PckResult> {
    validate_alphas(alphas)?;
    let pairs = pck_pairs(dataset, vocab, mapping, top_n)?;
    let constant = FilterAttributePdf::constant(dataset.n_filters(), vocab.len());
    grounding_pck("constant-pdf", dataset, vocab, &constant, &pairs, alphas)
}

/// The random-location and constant-p.d.f. baselines, in that order.
pub fn pck_baselines(
    dataset: &Dataset,
    vocab: &Vocabulary,
    mapping: &KeypointMapping,
    alphas: &[f64],
    top_n: usize,
    seed: u64,
) -> Result<(PckResult, PckResult)> {
    Ok((
        random_pck(dataset, vocab, mapping, alphas, top_n, seed, 1)?,
        constant_pdf_pck(dataset, vocab, mapping, alphas, top_n)?,
    ))
}

/// Aligned text table with one row per method.
pub fn pck_table(results: &[&PckResult]) -> String {
    let mut out = String::new();
    let Some(first) = results.first() else {
        return out;
    };
    let _ = write!(out, "{:<14}", "");
    for a in &first.alphas {
        let _ = write!(out, " {:>9}", format!("PCK@{a}"));
    }
    out.push('\n');
    for r in results {
        let _ = write!(out, "{:<14}", r.method);
        for f in &r.fractions {
            let _ = write!(out, " {:>8.1}%", f * 100.0);
        }
        out.push('\n');
    }
    out
}
