//! Exported activations, classifier weights and annotations, plus the JSON
//! manifest that ties them together.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::CaptionDoc;
use crate::error::{Error, Result, ValidationIssue};
use crate::exec;
use crate::tensor::Tensor;

pub const MANIFEST_VERSION: u32 = 1;

/// Tolerance on `mean(spatial[k]) == pooled[k]`.
pub const POOLING_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub name: String,
    pub x: f32,
    pub y: f32,
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    /// Global-pooled activation per filter.
    pub pooled: Vec<f32>,
    /// Final conv feature maps, `[n_filters, H, W]`.
    pub spatial: Option<Tensor>,
    pub true_class: usize,
    pub predicted_class: Option<usize>,
    /// `(width, height)` in pixels of the cropped image.
    pub image_size: (u32, u32),
    pub keypoints: Vec<Keypoint>,
    pub caption_file: Option<PathBuf>,
    pub split: Option<String>,
}

impl ImageRecord {
    pub fn new(image_id: impl Into<String>, pooled: Vec<f32>, true_class: usize) -> Self {
        Self {
            image_id: image_id.into(),
            pooled,
            spatial: None,
            true_class,
            predicted_class: None,
            image_size: (1, 1),
            keypoints: Vec::new(),
            caption_file: None,
            split: None,
        }
    }

    pub fn keypoint(&self, name: &str) -> Option<&Keypoint> {
        self.keypoints.iter().find(|k| k.name == name)
    }

    pub fn is_misclassified(&self) -> bool {
        self.predicted_class.is_some_and(|p| p != self.true_class)
    }

    /// Spatial grid size `(H, W)`.
    pub fn grid(&self) -> Option<(usize, usize)> {
        self.spatial.as_ref().map(|s| (s.dims()[1], s.dims()[2]))
    }

    fn validate(&self, n_filters: usize, n_classes: usize, issues: &mut Vec<ValidationIssue>) {
        let id = &self.image_id;
        let mut push = |msg: String| issues.push(ValidationIssue::image(id.clone(), msg));
        if id.is_empty() {
            push("empty image id".into());
        }
        if self.pooled.len() != n_filters {
            push(format!(
                "pooled vector has length {} but n_filters is {n_filters}",
                self.pooled.len()
            ));
        }
        if let Some(k) = self.pooled.iter().position(|v| !v.is_finite() || *v < 0.0) {
            push(format!(
                "pooled[{k}] = {} is negative or non-finite",
                self.pooled[k]
            ));
        }
        if self.true_class >= n_classes {
            push(format!(
                "true_class {} out of range (o = {n_classes})",
                self.true_class
            ));
        }
        if let Some(p) = self.predicted_class {
            if p >= n_classes {
                push(format!(
                    "predicted_class {p} out of range (o = {n_classes})"
                ));
            }
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            push(format!("image_size {:?} must be positive", self.image_size));
        }
        for kp in &self.keypoints {
            if !kp.x.is_finite() || !kp.y.is_finite() {
                push(format!("keypoint {:?} has non-finite coordinates", kp.name));
            }
        }
        if let Some(spatial) = &self.spatial {
            let dims = spatial.dims();
            if dims.len() != 3 || dims[0] != n_filters {
                push(format!("spatial dims {dims:?} are not [{n_filters}, H, W]"));
            } else if self.pooled.len() == n_filters {
                let cells = (dims[1] * dims[2]) as f64;
                for k in 0..n_filters {
                    let mean = spatial.row(k).iter().map(|&v| v as f64).sum::<f64>() / cells;
                    let pooled = self.pooled[k] as f64;
                    if (mean - pooled).abs() > POOLING_TOLERANCE {
                        push(format!(
                            "spatial mean {mean} of filter {k} disagrees with pooled {pooled}"
                        ));
                        break;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<ImageRecord>,
    class_names: Vec<String>,
    weights: Tensor,
    n_filters: usize,
    vocabulary_ref: Option<PathBuf>,
    index: HashMap<String, usize>,
}

impl Dataset {
    /// Assembles a dataset, reporting every violated invariant at once.
    pub fn new(
        images: Vec<ImageRecord>,
        class_names: Vec<String>,
        weights: Tensor,
        n_filters: usize,
    ) -> Result<Self> {
        let mut issues = Vec::new();
        let o = class_names.len();
        if o == 0 {
            issues.push(ValidationIssue::global("no classes"));
        }
        if n_filters == 0 {
            issues.push(ValidationIssue::global("n_filters must be positive"));
        }
        if weights.dims() != [o, n_filters] {
            issues.push(ValidationIssue::global(format!(
                "weights dims {:?} but expected [{o}, {n_filters}]",
                weights.dims()
            )));
        }
        let mut index = HashMap::with_capacity(images.len());
        for (i, img) in images.iter().enumerate() {
            img.validate(n_filters, o, &mut issues);
            if index.insert(img.image_id.clone(), i).is_some() {
                issues.push(ValidationIssue::image(
                    img.image_id.clone(),
                    "duplicate image id",
                ));
            }
        }
        if !issues.is_empty() {
            return Err(Error::Validation(issues));
        }
        Ok(Self {
            images,
            class_names,
            weights,
            n_filters,
            vocabulary_ref: None,
            index,
        })
    }

    pub fn with_vocabulary_ref(mut self, path: Option<PathBuf>) -> Self {
        self.vocabulary_ref = path;
        self
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn n_filters(&self) -> usize {
        self.n_filters
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_name(&self, class_id: usize) -> Result<&str> {
        self.class_names
            .get(class_id)
            .map(String::as_str)
            .ok_or(Error::UnknownClass(class_id))
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    /// Classifier weights feeding class `class_id`.
    pub fn weight_row(&self, class_id: usize) -> Result<&[f32]> {
        if class_id >= self.n_classes() {
            return Err(Error::UnknownClass(class_id));
        }
        Ok(self.weights.row(class_id))
    }

    pub fn vocabulary_ref(&self) -> Option<&Path> {
        self.vocabulary_ref.as_deref()
    }

    pub fn index_of(&self, image_id: &str) -> Result<usize> {
        self.index
            .get(image_id)
            .copied()
            .ok_or_else(|| Error::UnknownImage(image_id.to_string()))
    }

    pub fn image(&self, image_id: &str) -> Result<&ImageRecord> {
        self.index_of(image_id).map(|i| &self.images[i])
    }

    /// Keeps images whose split equals `split`; images without a split tag belong to every split.
    pub fn select_split(&self, split: &str) -> Dataset {
        let images: Vec<ImageRecord> = self
            .images
            .iter()
            .filter(|img| img.split.as_deref().is_none_or(|s| s == split))
            .cloned()
            .collect();
        let index = images
            .iter()
            .enumerate()
            .map(|(i, img)| (img.image_id.clone(), i))
            .collect();
        Dataset {
            images,
            class_names: self.class_names.clone(),
            weights: self.weights.clone(),
            n_filters: self.n_filters,
            vocabulary_ref: self.vocabulary_ref.clone(),
            index,
        }
    }

    /// Reads the caption file of every image that names one.
    pub fn load_captions(&self) -> Result<Vec<CaptionDoc>> {
        let with_captions: Vec<&ImageRecord> = self
            .images
            .iter()
            .filter(|img| img.caption_file.is_some())
            .collect();
        exec::try_map_indexed(with_captions.len(), |i| {
            let img = with_captions[i];
            CaptionDoc::from_file(&img.image_id, img.caption_file.as_ref().unwrap())
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub n_filters: usize,
    pub class_names: Vec<String>,
    pub weights_file: String,
    pub images: Vec<ManifestImage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary_file: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestImage {
    pub id: String,
    pub caption_file: String,
    pub pooled_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_file: Option<String>,
    pub image_size: [u32; 2],
    pub true_class: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<Vec<Keypoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

/// Loads and fully validates the dataset described by a manifest.
///
/// Relative paths in the manifest resolve against the manifest's directory.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::json(manifest_path, e))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Validation(vec![ValidationIssue::global(format!(
            "unsupported manifest version {}",
            manifest.version
        ))]));
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &str| base.join(p);

    let weights = Tensor::load(resolve(&manifest.weights_file))?;
    let images = exec::try_map_indexed(manifest.images.len(), |i| {
        let entry = &manifest.images[i];
        let pooled = Tensor::load(resolve(&entry.pooled_file))?.into_data();
        let spatial = entry
            .spatial_file
            .as_deref()
            .map(|p| Tensor::load(resolve(p)))
            .transpose()?;
        let caption_file = resolve(&entry.caption_file);
        if !caption_file.is_file() {
            return Err(Error::io(
                &caption_file,
                std::io::Error::new(std::io::ErrorKind::NotFound, "caption file not found"),
            ));
        }
        Ok(ImageRecord {
            image_id: entry.id.clone(),
            pooled,
            spatial,
            true_class: entry.true_class,
            predicted_class: entry.predicted_class,
            image_size: (entry.image_size[0], entry.image_size[1]),
            keypoints: entry.keypoints.clone().unwrap_or_default(),
            caption_file: Some(caption_file),
            split: entry.split.clone(),
        })
    })?;
    let dataset = Dataset::new(images, manifest.class_names, weights, manifest.n_filters)?;
    Ok(dataset.with_vocabulary_ref(manifest.vocabulary_file.as_deref().map(resolve)))
}

/// Writes `dataset` and its captions under `dir` in the manifest layout
/// (`manifest.json`, `weights.ftns`, `pooled/`, `spatial/`, `captions/`).
/// Returns the manifest path.
pub fn write_dataset(
    dir: impl AsRef<Path>,
    dataset: &Dataset,
    captions: &[CaptionDoc],
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    for sub in ["pooled", "spatial", "captions"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    dataset.weights.save(dir.join("weights.ftns"))?;
    let by_id: HashMap<&str, &CaptionDoc> =
        captions.iter().map(|d| (d.image_id.as_str(), d)).collect();

    let entries = exec::try_map_indexed(dataset.images.len(), |i| {
        let img = &dataset.images[i];
        let id = &img.image_id;
        let pooled_file = format!("pooled/{id}.ftns");
        Tensor::vector(img.pooled.clone())
            .map_err(|source| Error::Tensor {
                path: dir.join(&pooled_file),
                source,
            })?
            .save(dir.join(&pooled_file))?;
        let spatial_file = match &img.spatial {
            Some(s) => {
                let f = format!("spatial/{id}.ftns");
                s.save(dir.join(&f))?;
                Some(f)
            }
            None => None,
        };
        let caption_file = format!("captions/{id}.txt");
        let mut text = String::new();
        if let Some(doc) = by_id.get(id.as_str()) {
            for c in &doc.captions {
                text.push_str(c);
                text.push('\n');
            }
        }
        let path = dir.join(&caption_file);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(ManifestImage {
            id: id.clone(),
            caption_file,
            pooled_file,
            spatial_file,
            image_size: [img.image_size.0, img.image_size.1],
            true_class: img.true_class,
            predicted_class: img.predicted_class,
            keypoints: (!img.keypoints.is_empty()).then(|| img.keypoints.clone()),
            split: img.split.clone(),
        })
    })?;

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        n_filters: dataset.n_filters,
        class_names: dataset.class_names.clone(),
        weights_file: "weights.ftns".into(),
        images: entries,
        vocabulary_file: None,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Noun → keypoint-name table used by PCK (`noun<TAB>keypoint` lines).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeypointMapping {
    map: HashMap<String, String>,
}

impl KeypointMapping {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, noun: impl Into<String>, keypoint: impl Into<String>) {
        self.map.insert(noun.into(), keypoint.into());
    }

    pub fn keypoint_for(&self, noun: &str) -> Option<&str> {
        self.map.get(noun).map(String::as_str)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::new();
        let mut issues = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('\t') {
                Some((noun, kp)) if !noun.trim().is_empty() && !kp.trim().is_empty() => {
                    out.insert(noun.trim().to_lowercase(), kp.trim())
                }
                _ => issues.push(ValidationIssue::global(format!(
                    "keypoint mapping line {}: expected noun<TAB>keypoint",
                    lineno + 1
                ))),
            }
        }
        if issues.is_empty() {
            Ok(out)
        } else {
            Err(Error::Validation(issues))
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Serialises sorted by noun.
    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<_> = self.map.iter().collect();
        rows.sort();
        rows.into_iter()
            .map(|(n, k)| format!("{n}\t{k}\n"))
            .collect()
    }
}
