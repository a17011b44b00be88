//! Synthetic datasets with a known filter → attribute assignment.
//!
//! Filter `k` is planted on attribute `k`: it fires (pooled `high + U(0, noise)`,
//! a Gaussian bump at the attribute's keypoint) exactly when the attribute is
//! in the image's captions, and sits at a flat `low` otherwise. The
//! classifier maps class `m` one-hot onto filter `m`.
//!
//! Images are assigned to classes round-robin. An image of class `m` always
//! carries attribute `m`, never another class's attribute, and each remaining
//! (non-class) attribute independently with probability `attribute_rate`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{Attribute, CaptionDoc};
use crate::dataset::{Dataset, ImageRecord, Keypoint, KeypointMapping};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const PARTS: &[&str] = &[
    "bill", "crown", "throat", "breast", "belly", "back", "wing", "tail", "nape", "eye", "leg",
    "forehead", "cheek", "rump", "flank", "mantle",
];

const COLORS: &[&str] = &[
    "red", "orange", "yellow", "green", "blue", "purple", "pink", "brown", "black", "white",
    "grey", "olive",
];

/// Largest attribute vocabulary the generator can plant.
pub const MAX_SYNTHETIC_ATTRIBUTES: usize = 16 * 12;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_filters: usize,
    pub n_attributes: usize,
    pub n_images: usize,
    pub n_classes: usize,
    pub seed: u64,
    /// Probability that a non-class attribute appears in an image.
    pub attribute_rate: f64,
    pub high: f32,
    pub noise: f32,
    pub low: f32,
    /// Feature-map side length in cells.
    pub grid: usize,
    /// Square image side in pixels.
    pub image_size: u32,
    /// Gaussian bump standard deviation in cells.
    pub bump_sigma: f64,
    /// Minimum distance in cells between keypoints of attributes present in one image.
    pub min_separation: f64,
    /// Number of images whose prediction is switched to the next class.
    pub n_mispredicted: usize,
    pub with_spatial: bool,
}

impl SynthConfig {
    pub fn new(
        n_filters: usize,
        n_attributes: usize,
        n_images: usize,
        n_classes: usize,
        seed: u64,
    ) -> Self {
        Self {
            n_filters,
            n_attributes,
            n_images,
            n_classes,
            seed,
            attribute_rate: 0.2,
            high: 1.0,
            noise: 0.05,
            low: 0.1,
            grid: 14,
            image_size: 224,
            bump_sigma: 1.0,
            min_separation: 3.0,
            n_mispredicted: 0,
            with_spatial: true,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_filters != self.n_attributes {
            return bad(format!(
                "n_filters ({}) must equal n_attributes ({})",
                self.n_filters, self.n_attributes
            ));
        }
        if self.n_attributes == 0 || self.n_attributes > MAX_SYNTHETIC_ATTRIBUTES {
            return bad(format!(
                "n_attributes must be in 1..={MAX_SYNTHETIC_ATTRIBUTES}"
            ));
        }
        if self.n_classes == 0 || self.n_classes > self.n_attributes {
            return bad(format!("n_classes must be in 1..={}", self.n_attributes));
        }
        if self.n_images == 0 {
            return bad("n_images must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.attribute_rate) {
            return bad("attribute_rate must be in [0, 1]".into());
        }
        if !(self.low >= 0.0 && self.high > self.low && self.noise >= 0.0) {
            return bad("activation levels must satisfy 0 <= low < high, noise >= 0".into());
        }
        if self.grid == 0 || self.image_size == 0 {
            return bad("grid and image_size must be positive".into());
        }
        if self.n_mispredicted > self.n_images || (self.n_mispredicted > 0 && self.n_classes < 2) {
            return bad("n_mispredicted needs at least 2 classes and at most n_images".into());
        }
        Ok(())
    }
}

/// The planted filter → attribute assignment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantedMap {
    /// Attribute planted on filter `k`, at index `k`.
    pub filter_attributes: Vec<Attribute>,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub captions: Vec<CaptionDoc>,
    pub planted: PlantedMap,
    pub mapping: KeypointMapping,
    /// Ids of images whose prediction was deliberately made wrong, sorted.
    pub mispredicted: Vec<String>,
}

/// The `j`-th synthetic attribute; nouns cycle through the part list.
pub fn synthetic_attribute(j: usize) -> Attribute {
    let part = j % PARTS.len();
    let round = j / PARTS.len();
    Attribute::new(COLORS[(part + round) % COLORS.len()], PARTS[part])
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_filters;
    let o = config.n_classes;
    let attrs: Vec<Attribute> = (0..n).map(synthetic_attribute).collect();
    let id_width = config.n_images.saturating_sub(1).to_string().len().max(4);

    let mut images = Vec::with_capacity(config.n_images);
    let mut captions = Vec::with_capacity(config.n_images);
    for k in 0..config.n_images {
        let class = k % o;
        let present: Vec<usize> = (0..n)
            .filter(|&j| {
                if j < o {
                    j == class
                } else {
                    rng.gen_bool(config.attribute_rate)
                }
            })
            .collect();
        let mut is_present = vec![false; n];
        for &j in &present {
            is_present[j] = true;
        }
        let pooled: Vec<f32> = (0..n)
            .map(|j| {
                if is_present[j] {
                    config.high + rng.gen::<f32>() * config.noise
                } else {
                    config.low
                }
            })
            .collect();

        let image_id = format!("img{k:0id_width$}");
        let mut record = ImageRecord::new(&image_id, pooled, class);
        record.predicted_class = Some(class);
        record.image_size = (config.image_size, config.image_size);
        if config.with_spatial {
            let present_parts: Vec<usize> = {
                let mut p: Vec<usize> = present.iter().map(|&j| j % PARTS.len()).collect();
                p.sort_unstable();
                p.dedup();
                p
            };
            let cells = sample_keypoints(&mut rng, config, &present_parts);
            let cell_px = config.image_size as f64 / config.grid as f64;
            record.keypoints = cells
                .iter()
                .enumerate()
                .map(|(p, &(cy, cx))| Keypoint {
                    name: PARTS[p].to_string(),
                    x: (cx * cell_px) as f32,
                    y: (cy * cell_px) as f32,
                    visible: true,
                })
                .collect();
            record.spatial = Some(render_spatial(config, &record.pooled, &is_present, &cells));
        }
        images.push(record);

        let lines = present
            .iter()
            .map(|&j| format!("a bird with {} {}", attrs[j].adjective, attrs[j].noun))
            .collect();
        captions.push(CaptionDoc::new(image_id, lines)?);
    }

    let mut order: Vec<usize> = (0..config.n_images).collect();
    order.shuffle(&mut rng);
    let mut mispredicted: Vec<String> = order[..config.n_mispredicted]
        .iter()
        .map(|&k| {
            let img = &mut images[k];
            img.predicted_class = Some((img.true_class + 1) % o);
            img.image_id.clone()
        })
        .collect();
    mispredicted.sort();

    let mut weights = vec![0.0f32; o * n];
    for m in 0..o {
        weights[m * n + m] = 1.0;
    }
    let weights = Tensor::new(vec![o, n], weights).expect("finite one-hot weights");
    let class_names = (0..o).map(|m| format!("species {m:02}")).collect();
    let dataset = Dataset::new(images, class_names, weights, n)?;

    let mut mapping = KeypointMapping::new();
    for part in PARTS.iter().take(n.min(PARTS.len())) {
        mapping.insert(*part, *part);
    }
    Ok(SyntheticData {
        dataset,
        captions,
        planted: PlantedMap {
            filter_attributes: attrs,
        },
        mapping,
        mispredicted,
    })
}

/// Keypoint location (grid units, continuous) for every part. Parts in
/// `separated` are kept `min_separation` apart when possible.
fn sample_keypoints(
    rng: &mut ChaCha8Rng,
    config: &SynthConfig,
    separated: &[usize],
) -> Vec<(f64, f64)> {
    let g = config.grid as f64;
    let margin = (1.5 * config.bump_sigma).min(g / 2.0);
    let draw = |rng: &mut ChaCha8Rng| {
        let span = (g - 2.0 * margin).max(0.0);
        (
            margin + rng.gen::<f64>() * span,
            margin + rng.gen::<f64>() * span,
        )
    };
    let mut cells = vec![(0.0, 0.0); PARTS.len()];
    let mut placed: Vec<(f64, f64)> = Vec::new();
    for &p in separated {
        let mut candidate = draw(rng);
        for _ in 0..1000 {
            let ok = placed.iter().all(|&(y, x)| {
                ((y - candidate.0).powi(2) + (x - candidate.1).powi(2)).sqrt()
                    >= config.min_separation
            });
            if ok {
                break;
            }
            candidate = draw(rng);
        }
        placed.push(candidate);
        cells[p] = candidate;
    }
    for (p, cell) in cells.iter_mut().enumerate() {
        if !separated.contains(&p) {
            *cell = draw(rng);
        }
    }
    cells
}

fn render_spatial(
    config: &SynthConfig,
    pooled: &[f32],
    is_present: &[bool],
    cells: &[(f64, f64)],
) -> Tensor {
    let g = config.grid;
    let n = pooled.len();
    let mut data = Vec::with_capacity(n * g * g);
    let two_s2 = 2.0 * config.bump_sigma * config.bump_sigma;
    for k in 0..n {
        if !is_present[k] {
            data.extend(std::iter::repeat_n(pooled[k], g * g));
            continue;
        }
        let (ky, kx) = cells[k % PARTS.len()];
        let bump: Vec<f64> = (0..g * g)
            .map(|idx| {
                let cy = (idx / g) as f64 + 0.5;
                let cx = (idx % g) as f64 + 0.5;
                (-((cy - ky).powi(2) + (cx - kx).powi(2)) / two_s2).exp()
            })
            .collect();
        let scale = pooled[k] as f64 * (g * g) as f64 / bump.iter().sum::<f64>();
        data.extend(bump.iter().map(|b| (b * scale) as f32));
    }
    Tensor::new(vec![n, g, g], data).expect("finite synthetic maps")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_under_seed() {
        let cfg = SynthConfig::new(8, 8, 20, 3, 7);
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.captions, b.captions);
        let c = generate_synthetic(&SynthConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn hand_checkable_two_filter_case() {
        let data = generate_synthetic(&SynthConfig::new(2, 2, 4, 2, 1)).unwrap();
        let caps: Vec<&str> = data
            .captions
            .iter()
            .map(|d| d.captions[0].as_str())
            .collect();
        let a0 = synthetic_attribute(0);
        let a1 = synthetic_attribute(1);
        let c0 = format!("a bird with {a0}");
        let c1 = format!("a bird with {a1}");
        assert_eq!(caps, [c0.as_str(), c1.as_str(), c0.as_str(), c1.as_str()]);
        assert!(data.captions.iter().all(|d| d.captions.len() == 1));
        for (k, img) in data.dataset.images().iter().enumerate() {
            let on = k % 2;
            assert!(img.pooled[on] >= 1.0 && img.pooled[on] <= 1.05);
            assert_eq!(img.pooled[1 - on], 0.1);
        }
        assert_eq!(data.dataset.weights().data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn class_attribute_structure() {
        let cfg = SynthConfig::new(12, 12, 30, 4, 3);
        let data = generate_synthetic(&cfg).unwrap();
        for (img, doc) in data.dataset.images().iter().zip(&data.captions) {
            let m = img.true_class;
            for j in 0..4 {
                let has = doc
                    .captions
                    .iter()
                    .any(|c| c.ends_with(&synthetic_attribute(j).canonical()));
                assert_eq!(has, j == m);
            }
        }
    }

    #[test]
    fn injected_mispredictions() {
        let mut cfg = SynthConfig::new(6, 6, 40, 3, 11);
        cfg.n_mispredicted = 5;
        let data = generate_synthetic(&cfg).unwrap();
        let wrong: Vec<&str> = data
            .dataset
            .images()
            .iter()
            .filter(|i| i.is_misclassified())
            .map(|i| i.image_id.as_str())
            .collect();
        assert_eq!(wrong, data.mispredicted);
        assert_eq!(wrong.len(), 5);
    }

    #[test]
    fn attributes_are_distinct() {
        let all: std::collections::HashSet<String> = (0..MAX_SYNTHETIC_ATTRIBUTES)
            .map(|j| synthetic_attribute(j).canonical())
            .collect();
        assert_eq!(all.len(), MAX_SYNTHETIC_ATTRIBUTES);
    }

    #[test]
    fn invalid_sizes() {
        assert!(generate_synthetic(&SynthConfig::new(3, 4, 10, 2, 0)).is_err());
        assert!(generate_synthetic(&SynthConfig::new(4, 4, 10, 5, 0)).is_err());
        assert!(generate_synthetic(&SynthConfig::new(4, 4, 0, 2, 0)).is_err());
        assert!(generate_synthetic(&SynthConfig::new(500, 500, 10, 2, 0)).is_err());
    }
}
