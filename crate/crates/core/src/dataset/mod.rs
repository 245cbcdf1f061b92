//! Loaders and writers for annotation, detection, OCR and feature files.

mod features;
mod stats;

pub use features::{load_features, parse_features, save_features, write_features, FeatureFile, FeatureRecord, StoredWord};
pub use stats::{compute_stats, DatasetStats, Histogram};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::detection_eval::{DetectionRecord, GroundTruthRecord};
use crate::error::{Error, Result};
use crate::geometry::{Polygon, QuadBox};
use crate::text_eval::{TextRegion, Vocabulary};

/// Ground truths smaller than 8×8 pixels are flagged as ignore on load.
pub const MIN_GT_AREA: f64 = 64.0;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_json<T: DeserializeOwned>(text: &str, context: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|source| Error::Json {
        context: context.to_string(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Image and product ids may be written as JSON strings or numbers.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Id {
    Str(String),
    Num(serde_json::Number),
}

impl From<Id> for String {
    fn from(id: Id) -> String {
        match id {
            Id::Str(s) => s,
            Id::Num(n) => n.to_string(),
        }
    }
}

fn quad_at(coords: &[f64], what: &str) -> Result<QuadBox> {
    QuadBox::from_flat(coords).map_err(|e| Error::Input(format!("{what}: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: String,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetDataset {
    pub images: Vec<ImageInfo>,
    pub gts: Vec<GroundTruthRecord>,
    pub ignore_regions: Vec<(String, Polygon)>,
    /// Quads that had at least one corner moved into the image.
    pub clamped: usize,
    /// Quads flagged ignore because of their size.
    pub auto_ignored: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetFile {
    images: Vec<RawImage>,
    annotations: Vec<RawAnnotation>,
    #[serde(default)]
    ignore_regions: Vec<RawRegion>,
}

#[derive(Deserialize)]
struct RawImage {
    id: Id,
    width: f64,
    height: f64,
}

#[derive(Deserialize)]
struct RawAnnotation {
    image_id: Id,
    quad: Vec<f64>,
    #[serde(default)]
    ignore: bool,
}

#[derive(Deserialize)]
struct RawRegion {
    image_id: Id,
    polygon: Vec<f64>,
}

pub fn load_det_annotations(path: impl AsRef<Path>) -> Result<DetDataset> {
    let path = path.as_ref();
    parse_det_annotations(&read_text(path)?, &path.display().to_string())
}

/// Parses the annotation document; `source` labels error messages.
pub fn parse_det_annotations(text: &str, source: &str) -> Result<DetDataset> {
    let raw: RawDetFile = parse_json(text, source)?;

    let mut images = Vec::with_capacity(raw.images.len());
    let mut sizes = HashMap::new();
    for (i, im) in raw.images.into_iter().enumerate() {
        let id = String::from(im.id);
        if !(im.width > 0.0 && im.height > 0.0 && im.width.is_finite() && im.height.is_finite()) {
            return Err(Error::Input(format!("{source}: image {i} ({id}) has invalid size {}x{}", im.width, im.height)));
        }
        if sizes.insert(id.clone(), (im.width, im.height)).is_some() {
            return Err(Error::Input(format!("{source}: image {i} repeats id {id:?}")));
        }
        images.push(ImageInfo {
            id,
            width: im.width,
            height: im.height,
        });
    }

    let lookup = |id: Id, what: &str| -> Result<(String, (f64, f64))> {
        let id = String::from(id);
        match sizes.get(&id) {
            Some(&wh) => Ok((id, wh)),
            None => Err(Error::Input(format!("{source}: {what} refers to unknown image {id:?}"))),
        }
    };

    let mut gts = Vec::with_capacity(raw.annotations.len());
    let (mut clamped, mut auto_ignored) = (0, 0);
    for (i, ann) in raw.annotations.into_iter().enumerate() {
        let what = format!("annotation {i}");
        let (image_id, (w, h)) = lookup(ann.image_id, &what)?;
        if ann.quad.len() != 8 {
            return Err(Error::Input(format!(
                "{source}: {what} has {} coordinates, expected 8",
                ann.quad.len()
            )));
        }
        let mut coords = ann.quad;
        let mut moved = false;
        for (k, c) in coords.iter_mut().enumerate() {
            let hi = if k % 2 == 0 { w } else { h };
            let v = c.clamp(0.0, hi);
            moved |= v != *c;
            *c = v;
        }
        clamped += usize::from(moved);
        let quad = quad_at(&coords, &format!("{source}: {what}"))?;
        let small = quad.area() < MIN_GT_AREA;
        auto_ignored += usize::from(small && !ann.ignore);
        gts.push(GroundTruthRecord {
            image_id,
            quad,
            ignore: ann.ignore || small,
        });
    }

    let mut ignore_regions = Vec::with_capacity(raw.ignore_regions.len());
    for (i, r) in raw.ignore_regions.into_iter().enumerate() {
        let what = format!("ignore region {i}");
        let (image_id, _) = lookup(r.image_id, &what)?;
        if r.polygon.len() % 2 != 0 {
            return Err(Error::Input(format!("{source}: {what} has an odd coordinate count")));
        }
        let poly = Polygon::from_flat(&r.polygon).map_err(|e| Error::Input(format!("{source}: {what}: {e}")))?;
        ignore_regions.push((image_id, poly));
    }

    Ok(DetDataset {
        images,
        gts,
        ignore_regions,
        clamped,
        auto_ignored,
    })
}

#[derive(Serialize)]
struct OutAnnotation<'a> {
    image_id: &'a str,
    quad: [f64; 8],
    ignore: bool,
}

#[derive(Serialize)]
struct OutRegion<'a> {
    image_id: &'a str,
    polygon: Vec<f64>,
}

#[derive(Serialize)]
struct OutDetFile<'a> {
    images: &'a [ImageInfo],
    annotations: Vec<OutAnnotation<'a>>,
    ignore_regions: Vec<OutRegion<'a>>,
}

pub fn save_det_annotations(path: impl AsRef<Path>, ds: &DetDataset) -> Result<()> {
    let out = OutDetFile {
        images: &ds.images,
        annotations: ds
            .gts
            .iter()
            .map(|g| OutAnnotation {
                image_id: &g.image_id,
                quad: g.quad.to_flat(),
                ignore: g.ignore,
            })
            .collect(),
        ignore_regions: ds
            .ignore_regions
            .iter()
            .map(|(id, p)| OutRegion {
                image_id: id,
                polygon: p.vertices().iter().flat_map(|v| [v.x, v.y]).collect(),
            })
            .collect(),
    };
    write_json(path.as_ref(), &out)
}

#[derive(Deserialize)]
struct RawDetection {
    image_id: Id,
    quad: Vec<f64>,
    score: f64,
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>> {
    let path = path.as_ref();
    parse_detections(&read_text(path)?, &path.display().to_string())
}

pub fn parse_detections(text: &str, source: &str) -> Result<Vec<DetectionRecord>> {
    let raw: Vec<RawDetection> = parse_json(text, source)?;
    raw.into_iter()
        .enumerate()
        .map(|(i, d)| {
            if !(0.0..=1.0).contains(&d.score) {
                return Err(Error::Input(format!("{source}: detection {i} has score {} outside [0, 1]", d.score)));
            }
            Ok(DetectionRecord {
                image_id: d.image_id.into(),
                quad: quad_at(&d.quad, &format!("{source}: detection {i}"))?,
                score: d.score,
            })
        })
        .collect()
}

pub fn save_detections(path: impl AsRef<Path>, dets: &[DetectionRecord]) -> Result<()> {
    write_json(path.as_ref(), &dets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Gallery,
    Query,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Product {
    pub product_id: String,
    pub category_id: String,
    pub regions: Vec<TextRegion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcrDataset {
    pub split: Split,
    pub products: Vec<Product>,
}

impl OcrDataset {
    pub fn product(&self, id: &str) -> Option<&Product> {
        self.products.iter().find(|p| p.product_id == id)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOcrFile {
    split: Split,
    products: Vec<RawProduct>,
}

#[derive(Deserialize)]
struct RawProduct {
    id: Id,
    category_id: Id,
    #[serde(default)]
    regions: Vec<RawTextRegion>,
}

#[derive(Deserialize)]
struct RawTextRegion {
    quad: Vec<f64>,
    #[serde(default = "default_true")]
    legible: bool,
    #[serde(default)]
    transcription: String,
}

fn default_true() -> bool {
    true
}

pub fn load_ocr_dataset(path: impl AsRef<Path>) -> Result<OcrDataset> {
    let path = path.as_ref();
    parse_ocr_dataset(&read_text(path)?, &path.display().to_string())
}

pub fn parse_ocr_dataset(text: &str, source: &str) -> Result<OcrDataset> {
    let raw: RawOcrFile = parse_json(text, source)?;
    let mut ids = HashSet::new();
    let mut categories = HashSet::new();
    let mut products = Vec::with_capacity(raw.products.len());
    for (i, p) in raw.products.into_iter().enumerate() {
        let product_id = String::from(p.id);
        let category_id = String::from(p.category_id);
        if !ids.insert(product_id.clone()) {
            return Err(Error::Input(format!("{source}: product {i} repeats id {product_id:?}")));
        }
        if raw.split == Split::Gallery && !categories.insert(category_id.clone()) {
            return Err(Error::Input(format!(
                "{source}: gallery has more than one product for category {category_id:?}"
            )));
        }
        let regions = p
            .regions
            .into_iter()
            .enumerate()
            .map(|(k, r)| {
                let what = format!("{source}: product {product_id:?} region {k}");
                let quad = quad_at(&r.quad, &what)?;
                TextRegion::new(quad, r.legible, &r.transcription).map_err(|e| Error::Input(format!("{what}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        products.push(Product {
            product_id,
            category_id,
            regions,
        });
    }
    Ok(OcrDataset {
        split: raw.split,
        products,
    })
}

/// Text-detection output: quads grouped by product, in file order.
pub fn load_text_detections(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<QuadBox>>> {
    #[derive(Deserialize)]
    struct Raw {
        product_id: Id,
        quad: Vec<f64>,
    }
    let path = path.as_ref();
    let source = path.display().to_string();
    let raw: Vec<Raw> = parse_json(&read_text(path)?, &source)?;
    let mut out: BTreeMap<String, Vec<QuadBox>> = BTreeMap::new();
    for (i, r) in raw.into_iter().enumerate() {
        let quad = quad_at(&r.quad, &format!("{source}: prediction {i}"))?;
        out.entry(r.product_id.into()).or_default().push(quad);
    }
    Ok(out)
}

/// Recognition output keyed by `(product_id, region index)`.
pub fn load_recognitions(path: impl AsRef<Path>) -> Result<BTreeMap<(String, usize), String>> {
    #[derive(Deserialize)]
    struct Raw {
        product_id: Id,
        region: usize,
        transcription: String,
    }
    let path = path.as_ref();
    let source = path.display().to_string();
    let raw: Vec<Raw> = parse_json(&read_text(path)?, &source)?;
    let mut out = BTreeMap::new();
    for (i, r) in raw.into_iter().enumerate() {
        let key = (String::from(r.product_id), r.region);
        if out.insert(key.clone(), r.transcription).is_some() {
            return Err(Error::Input(format!(
                "{source}: prediction {i} repeats product {:?} region {}",
                key.0, key.1
            )));
        }
    }
    Ok(out)
}

/// One word per line; blank lines are skipped.
pub fn load_vocabulary(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    let text = read_text(path)?;
    Vocabulary::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

/// JSON object mapping product id to category id.
pub fn load_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    parse_json(&read_text(path)?, &path.display().to_string())
}

/// Reads a flat `[x0, y0, x1, y1, ...]` JSON list of quads.
pub fn load_quads(path: impl AsRef<Path>) -> Result<Vec<QuadBox>> {
    let path = path.as_ref();
    let source = path.display().to_string();
    let raw: Vec<Vec<f64>> = parse_json(&read_text(path)?, &source)?;
    raw.iter()
        .enumerate()
        .map(|(i, c)| quad_at(c, &format!("{source}: quad {i}")))
        .collect()
}
