//! COCO-style evaluation of quadrilateral detections.
//!
//! Detections are matched per image in descending score order, pooled across
//! images, and summarized with 101-point interpolated average precision at
//! each IoU threshold. Ignore-flagged ground truths and ignore regions absorb
//! detections without counting them as false positives.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{intersection_area, quad_iou, Polygon, QuadBox};

/// Maximum detections kept per image before matching.
pub const MAX_DETS_PER_IMAGE: usize = 400;

/// Intersection-over-detection-area at which an ignore region absorbs a detection.
pub const IGNORE_REGION_IOD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub image_id: String,
    pub quad: QuadBox,
    #[serde(default)]
    pub ignore: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub quad: QuadBox,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchLabel {
    Tp,
    Fp,
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub map: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ar400: f64,
    pub per_threshold_ap: Vec<(f64, f64)>,
    pub num_gt: usize,
    pub num_det: usize,
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

fn by_score_desc(a: f64, b: f64) -> Ordering {
    b.total_cmp(&a)
}

/// Indices of `dets` sorted by score descending; equal scores keep input order.
fn score_order<T>(dets: &[T], score: impl Fn(&T) -> f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    idx.sort_by(|&a, &b| by_score_desc(score(&dets[a]), score(&dets[b])));
    idx
}

/// Greedy non-maximum suppression: a detection is dropped when its IoU with
/// an already kept, higher-scoring detection exceeds `iou_thresh`.
pub fn quad_nms(dets: &[DetectionRecord], iou_thresh: f64) -> Result<Vec<DetectionRecord>> {
    if !(iou_thresh > 0.0 && iou_thresh < 1.0) {
        return Err(Error::InvalidParameter(format!("NMS threshold must be in (0, 1), got {iou_thresh}")));
    }
    let mut kept: Vec<&DetectionRecord> = Vec::new();
    for i in score_order(dets, |d| d.score) {
        let d = &dets[i];
        if kept.iter().all(|k| k.image_id != d.image_id || quad_iou(&k.quad, &d.quad) <= iou_thresh) {
            kept.push(d);
        }
    }
    Ok(kept.into_iter().cloned().collect())
}

/// Ground truth of a single image.
#[derive(Debug, Clone, Default)]
pub struct ImageTruth {
    pub gts: Vec<GroundTruthRecord>,
    pub ignore_regions: Vec<Polygon>,
}

impl ImageTruth {
    fn num_positive(&self) -> usize {
        self.gts.iter().filter(|g| !g.ignore).count()
    }
}

/// Labels each detection of one image, in the order given.
///
/// Detections are visited in descending score. A detection takes the
/// unmatched non-ignore ground truth of highest IoU at or above `iou_thresh`.
/// Failing that, it is `Ignored` when it reaches `iou_thresh` against an
/// ignore-flagged ground truth or covers an ignore region by at least
/// [`IGNORE_REGION_IOD`] of its own area. Otherwise it is a false positive.
pub fn match_image(dets: &[DetectionRecord], truth: &ImageTruth, iou_thresh: f64) -> Result<Vec<MatchLabel>> {
    let image = dets
        .first()
        .map(|d| d.image_id.as_str())
        .or_else(|| truth.gts.first().map(|g| g.image_id.as_str()));
    if let Some(image) = image {
        if dets.iter().any(|d| d.image_id != image) || truth.gts.iter().any(|g| g.image_id != image) {
            return Err(Error::Input("match_image called with records from several images".into()));
        }
    }
    let ious: Vec<Vec<f64>> = dets
        .iter()
        .map(|d| truth.gts.iter().map(|g| quad_iou(&d.quad, &g.quad)).collect())
        .collect();
    Ok(match_with_ious(dets, truth, &ious, &[iou_thresh]).pop().unwrap())
}

fn ignore_region_hit(det: &QuadBox, regions: &[Polygon]) -> bool {
    if regions.is_empty() {
        return false;
    }
    let hull = det.to_polygon();
    let hull = if hull.is_convex() {
        hull
    } else {
        crate::geometry::convex_hull(det.corners()).expect("hull of a positive-area quad")
    };
    let area = hull.area();
    regions.iter().any(|r| intersection_area(r, &hull) / area >= IGNORE_REGION_IOD)
}

/// Matching at several thresholds sharing one IoU matrix. Returns one label
/// vector per threshold, each aligned with `dets`.
fn match_with_ious(dets: &[DetectionRecord], truth: &ImageTruth, ious: &[Vec<f64>], thresholds: &[f64]) -> Vec<Vec<MatchLabel>> {
    let order = score_order(dets, |d| d.score);
    let in_region: Vec<bool> = dets.iter().map(|d| ignore_region_hit(&d.quad, &truth.ignore_regions)).collect();

    thresholds
        .iter()
        .map(|&thr| {
            let mut taken = vec![false; truth.gts.len()];
            let mut labels = vec![MatchLabel::Fp; dets.len()];
            for &di in &order {
                let mut best: Option<(usize, f64)> = None;
                for (gi, g) in truth.gts.iter().enumerate() {
                    if g.ignore || taken[gi] {
                        continue;
                    }
                    let iou = ious[di][gi];
                    if iou >= thr && best.is_none_or(|(_, b)| iou > b) {
                        best = Some((gi, iou));
                    }
                }
                labels[di] = if let Some((gi, _)) = best {
                    taken[gi] = true;
                    MatchLabel::Tp
                } else if in_region[di]
                    || truth.gts.iter().enumerate().any(|(gi, g)| g.ignore && ious[di][gi] >= thr)
                {
                    MatchLabel::Ignored
                } else {
                    MatchLabel::Fp
                };
            }
            labels
        })
        .collect()
}

/// 101-point interpolated average precision.
///
/// `labels` must be in descending score order; `Ignored` entries are skipped.
/// Returns `None` when there are no positives and no false positives.
pub fn average_precision(labels: &[MatchLabel], num_gt: usize) -> Option<f64> {
    let scored: Vec<bool> = labels
        .iter()
        .filter(|&&l| l != MatchLabel::Ignored)
        .map(|&l| l == MatchLabel::Tp)
        .collect();
    if num_gt == 0 {
        return if scored.is_empty() { None } else { Some(0.0) };
    }
    let mut precision = Vec::with_capacity(scored.len());
    let mut recall = Vec::with_capacity(scored.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for is_tp in scored {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(tp as f64 / num_gt as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut sum = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        // first rank whose recall reaches r
        let idx = recall.partition_point(|&x| x < r);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    Some(sum / 101.0)
}

fn group_by_image<T>(items: &[T], id: impl Fn(&T) -> &str) -> BTreeMap<String, Vec<usize>> {
    let mut map: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        map.entry(id(it).to_owned()).or_default().push(i);
    }
    map
}

/// Dataset-level COCO-style evaluation.
///
/// `ignore_regions` pairs an image id with an ignore polygon. Detections of
/// images absent from `gts` are evaluated against an empty ground truth.
pub fn evaluate(dets: &[DetectionRecord], gts: &[GroundTruthRecord], ignore_regions: &[(String, Polygon)], thresholds: &[f64]) -> Result<EvalResult> {
    if thresholds.is_empty() {
        return Err(Error::InvalidParameter("at least one IoU threshold is required".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::InvalidParameter(format!("IoU threshold {t} outside (0, 1]")));
    }
    let mut all_thresholds: Vec<f64> = thresholds.to_vec();
    for extra in [0.5, 0.75] {
        if !all_thresholds.contains(&extra) {
            all_thresholds.push(extra);
        }
    }

    let mut truths: HashMap<String, ImageTruth> = HashMap::new();
    for g in gts {
        truths.entry(g.image_id.clone()).or_default().gts.push(g.clone());
    }
    for (id, poly) in ignore_regions {
        truths.entry(id.clone()).or_default().ignore_regions.push(poly.clone());
    }
    let num_gt: usize = truths.values().map(ImageTruth::num_positive).sum();

    let det_groups = group_by_image(dets, |d| &d.image_id);
    let empty = ImageTruth::default();

    // (global detection index, score, labels per threshold)
    let per_image: Vec<Vec<(usize, f64, Vec<MatchLabel>)>> = det_groups
        .par_iter()
        .map(|(image, idx)| {
            let truth = truths.get(image).unwrap_or(&empty);
            let mut order = idx.clone();
            order.sort_by(|&a, &b| by_score_desc(dets[a].score, dets[b].score));
            order.truncate(MAX_DETS_PER_IMAGE);
            let kept: Vec<DetectionRecord> = order.iter().map(|&i| dets[i].clone()).collect();
            let ious: Vec<Vec<f64>> = kept
                .iter()
                .map(|d| truth.gts.iter().map(|g| quad_iou(&d.quad, &g.quad)).collect())
                .collect();
            let labels = match_with_ious(&kept, truth, &ious, &all_thresholds);
            order
                .iter()
                .enumerate()
                .map(|(k, &gi)| (gi, dets[gi].score, labels.iter().map(|l| l[k]).collect()))
                .collect()
        })
        .collect();

    let mut pooled: Vec<(usize, f64, Vec<MatchLabel>)> = per_image.into_iter().flatten().collect();
    pooled.sort_by(|a, b| by_score_desc(a.1, b.1).then(a.0.cmp(&b.0)));

    let per_threshold: Vec<(f64, Option<f64>, f64)> = all_thresholds
        .iter()
        .enumerate()
        .map(|(t, &thr)| {
            let labels: Vec<MatchLabel> = pooled.iter().map(|p| p.2[t]).collect();
            let tp = labels.iter().filter(|&&l| l == MatchLabel::Tp).count();
            let recall = if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 };
            (thr, average_precision(&labels, num_gt), recall)
        })
        .collect();

    let requested = &per_threshold[..thresholds.len()];
    let defined: Vec<(f64, f64)> = requested.iter().filter_map(|&(t, ap, _)| ap.map(|ap| (t, ap))).collect();
    let map = if defined.is_empty() {
        0.0
    } else {
        defined.iter().map(|p| p.1).sum::<f64>() / defined.len() as f64
    };
    let ar400 = requested.iter().map(|p| p.2).sum::<f64>() / requested.len() as f64;
    let ap_at = |thr: f64| {
        per_threshold
            .iter()
            .find(|p| p.0 == thr)
            .and_then(|p| p.1)
            .unwrap_or(0.0)
    };

    Ok(EvalResult {
        map,
        ap50: ap_at(0.5),
        ap75: ap_at(0.75),
        ar400,
        per_threshold_ap: defined,
        num_gt,
        num_det: dets.len(),
    })
}

/// Geometric mean of origin-domain and cross-domain mAP.
pub fn g_map(map_origin: f64, map_cross: f64) -> Result<f64> {
    if !(map_origin >= 0.0 && map_cross >= 0.0 && map_origin.is_finite() && map_cross.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "mAP values must be finite and non-negative, got {map_origin} and {map_cross}"
        )));
    }
    Ok((map_origin * map_cross).sqrt())
}
