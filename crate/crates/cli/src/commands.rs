use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use unitail_core::assignment::{assign_targets, PyramidSpec};
use unitail_core::dataset::{
    compute_stats, load_det_annotations, load_detections, load_features, load_labels, load_ocr_dataset, load_quads,
    load_recognitions, load_text_detections, load_vocabulary, FeatureFile,
};
use unitail_core::detection_eval::{coco_thresholds, evaluate, g_map, quad_nms, EvalResult};
use unitail_core::geometry::{rectify_homography, warp_image, RgbImage};
use unitail_core::matching::{
    add_pe, match_product, top1_accuracy, tune_params, FeatureSequence, Gallery, GalleryEntry, MatchConfig,
    QueryRecord,
};
use unitail_core::text_eval::{
    ned, normalize_transcription, text_det_counts, vocab_correct, word_accuracy, DetectionCounts, NedNormalization,
};
use unitail_core::Error;

use crate::{
    AssignArgs, Command, EvalDetArgs, EvalTextDetArgs, EvalTextRecArgs, FeatureArgs, MatchArgs, NedNorm, NmsArgs,
    RectifyArgs, StatsArgs, TuneArgs,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn data(msg: impl Into<String>) -> CliError {
    CliError::Data(Error::Input(msg.into()))
}

fn check_unit(name: &str, v: f64, open_low: bool) -> Result<()> {
    let ok = if open_low { v > 0.0 && v <= 1.0 } else { (0.0..=1.0).contains(&v) };
    if ok {
        Ok(())
    } else {
        Err(usage(format!("--{name} must be in {}0, 1], got {v}", if open_low { "(" } else { "[" })))
    }
}

pub fn run(cmd: Command) -> Result<Value> {
    match cmd {
        Command::EvalDet(a) => eval_det(a),
        Command::EvalTextDet(a) => eval_text_det(a),
        Command::EvalTextRec(a) => eval_text_rec(a),
        Command::Match(a) => match_cmd(a),
        Command::Tune(a) => tune(a),
        Command::Stats(a) => stats(a),
        Command::Assign(a) => assign(a),
        Command::Nms(a) => nms(a),
        Command::Rectify(a) => rectify(a),
    }
}

fn eval_json(r: &EvalResult) -> Value {
    json!({
        "map": r.map,
        "ap50": r.ap50,
        "ap75": r.ap75,
        "ar400": r.ar400,
        "num_gt": r.num_gt,
        "num_det": r.num_det,
        "per_threshold_ap": r.per_threshold_ap.iter().map(|(t, ap)| json!({"iou": t, "ap": ap})).collect::<Vec<_>>(),
    })
}

fn eval_pair(gt: &Path, det: &Path) -> Result<(EvalResult, usize)> {
    let ds = load_det_annotations(gt)?;
    let dets = load_detections(det)?;
    let known: HashSet<&str> = ds.images.iter().map(|im| im.id.as_str()).collect();
    if let Some(d) = dets.iter().find(|d| !known.contains(d.image_id.as_str())) {
        return Err(data(format!("{}: detection for unknown image {:?}", det.display(), d.image_id)));
    }
    Ok((evaluate(&dets, &ds.gts, &ds.ignore_regions, &coco_thresholds())?, ds.clamped))
}

fn eval_det(a: EvalDetArgs) -> Result<Value> {
    let (origin, clamped) = eval_pair(&a.gt, &a.det)?;
    if clamped > 0 {
        eprintln!("warning: {clamped} ground-truth quads clamped to their image in {}", a.gt.display());
    }
    let (Some(cg), Some(cd)) = (&a.cross_gt, &a.cross_det) else {
        return Ok(eval_json(&origin));
    };
    let (cross, _) = eval_pair(cg, cd)?;
    Ok(json!({
        "origin": eval_json(&origin),
        "cross": eval_json(&cross),
        "g_map": g_map(origin.map, cross.map)?,
    }))
}

fn prf_json(c: DetectionCounts) -> Value {
    let p = c.prf();
    json!({
        "precision": p.precision,
        "recall": p.recall,
        "hmean": p.hmean,
        "matched": c.matched,
        "num_gt": c.num_gt,
        "num_pred": c.num_pred,
    })
}

fn eval_text_det(a: EvalTextDetArgs) -> Result<Value> {
    check_unit("iou", a.iou, true)?;
    let gt = load_ocr_dataset(&a.gt)?;
    let mut preds = load_text_detections(&a.pred)?;
    let counts = gt
        .products
        .iter()
        .map(|p| text_det_counts(&preds.remove(&p.product_id).unwrap_or_default(), &p.regions, a.iou))
        .fold(DetectionCounts::default(), DetectionCounts::merge);
    if let Some(id) = preds.keys().next() {
        return Err(data(format!("{}: prediction for unknown product {id:?}", a.pred.display())));
    }
    Ok(prf_json(counts))
}

fn eval_text_rec(a: EvalTextRecArgs) -> Result<Value> {
    let gt = load_ocr_dataset(&a.gt)?;
    let mut recs = load_recognitions(&a.pred)?;
    let vocab = a.vocab.as_ref().map(load_vocabulary).transpose()?;

    let mut pairs = Vec::new();
    let mut missing = 0usize;
    for p in &gt.products {
        for (k, r) in p.regions.iter().enumerate() {
            let pred = recs.remove(&(p.product_id.clone(), k));
            if !r.legible {
                continue;
            }
            let pred = match pred {
                Some(raw) => normalize_transcription(&raw),
                None => {
                    missing += 1;
                    String::new()
                }
            };
            let pred = match &vocab {
                Some(v) if !pred.is_empty() => vocab_correct(&pred, v),
                _ => pred,
            };
            pairs.push((pred, r.transcription.clone()));
        }
    }
    if let Some((id, k)) = recs.keys().next() {
        return Err(data(format!("{}: prediction for unknown region {k} of product {id:?}", a.pred.display())));
    }
    let norm = match a.ned_norm {
        NedNorm::Max => NedNormalization::MaxLength,
        NedNorm::Gt => NedNormalization::GroundTruthLength,
    };
    Ok(json!({
        "ned": ned(&pairs, norm),
        "word_accuracy": word_accuracy(&pairs),
        "num_regions": pairs.len(),
        "missing": missing,
    }))
}

fn sequence(ff: &FeatureFile, k: usize, no_pe: bool) -> Result<FeatureSequence> {
    let s = ff.records[k].sequence()?;
    Ok(if no_pe { s } else { add_pe(&s)? })
}

fn load_gallery(a: &FeatureArgs) -> Result<Gallery> {
    let ff = load_features(&a.gallery)?;
    let labels = a.gallery_labels.as_ref().map(load_labels).transpose()?;
    let entries = (0..ff.records.len())
        .map(|k| {
            let r = &ff.records[k];
            let category_id = match &labels {
                Some(l) => l
                    .get(&r.product_id)
                    .cloned()
                    .ok_or_else(|| data(format!("gallery product {:?} has no label", r.product_id)))?,
                None => r.product_id.clone(),
            };
            Ok(GalleryEntry {
                category_id,
                visual: r.visual_f64(),
                texts: sequence(&ff, k, a.no_pe)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Gallery::new(entries)?)
}

fn load_queries(a: &FeatureArgs, labels: Option<&Path>) -> Result<Vec<QueryRecord>> {
    let ff = load_features(&a.queries)?;
    let labels = labels.map(load_labels).transpose()?;
    let mut seen = HashSet::new();
    (0..ff.records.len())
        .map(|k| {
            let r = &ff.records[k];
            if !seen.insert(r.product_id.as_str()) {
                return Err(data(format!("query product {:?} appears twice", r.product_id)));
            }
            let truth = match &labels {
                Some(l) => Some(
                    l.get(&r.product_id)
                        .cloned()
                        .ok_or_else(|| data(format!("query product {:?} has no label", r.product_id)))?,
                ),
                None => None,
            };
            Ok(QueryRecord {
                product_id: r.product_id.clone(),
                visual: r.visual_f64(),
                texts: sequence(&ff, k, a.no_pe)?,
                truth,
            })
        })
        .collect()
}

fn match_cmd(a: MatchArgs) -> Result<Value> {
    let cfg = MatchConfig {
        t: a.t,
        w: a.w,
        normalize_text: a.features.normalize_text,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let gallery = load_gallery(&a.features)?;
    let queries = load_queries(&a.features, a.query_labels.as_deref())?;

    let picks: Vec<(String, String)> = queries
        .par_iter()
        .map(|q| Ok((q.product_id.clone(), match_product(q, &gallery, &cfg)?.to_string())))
        .collect::<std::result::Result<_, Error>>()?;
    let predictions: BTreeMap<String, String> = picks.into_iter().collect();

    let mut out = json!({ "t": cfg.t, "w": cfg.w, "predictions": predictions });
    if a.query_labels.is_some() {
        out["accuracy"] = json!(top1_accuracy(&queries, &gallery, &cfg)?);
    }
    Ok(out)
}

fn tune(a: TuneArgs) -> Result<Value> {
    for &t in &a.t_grid {
        if !(t.is_finite() && t >= 0.0) {
            return Err(usage(format!("--t-grid values must be >= 0, got {t}")));
        }
    }
    for &w in &a.w_grid {
        check_unit("w-grid", w, false)?;
    }
    let gallery = load_gallery(&a.features)?;
    let queries = load_queries(&a.features, Some(&a.query_labels))?;
    let r = tune_params(&queries, &gallery, &a.t_grid, &a.w_grid, a.features.normalize_text)?;
    Ok(json!({ "t": r.t, "w": r.w, "accuracy": r.accuracy, "num_queries": queries.len() }))
}

fn stats(a: StatsArgs) -> Result<Value> {
    let ds = load_det_annotations(&a.gt)?;
    let s = compute_stats(&ds);
    let mut v = serde_json::to_value(&s).map_err(|e| data(e.to_string()))?;
    v["clamped"] = json!(ds.clamped);
    v["auto_ignored"] = json!(ds.auto_ignored);
    Ok(v)
}

fn assign(a: AssignArgs) -> Result<Value> {
    let spec = PyramidSpec::new(a.min_level, a.max_level, a.l_org, a.pretrain_size).map_err(|e| usage(e.to_string()))?;
    if !(0.0..1.0).contains(&a.alpha) {
        return Err(usage(format!("--alpha must be in [0, 1), got {}", a.alpha)));
    }
    let ds = load_det_annotations(&a.gt)?;
    let mut out = serde_json::Map::new();
    for im in &ds.images {
        let quads: Vec<_> = ds
            .gts
            .iter()
            .filter(|g| g.image_id == im.id && !(a.skip_ignored && g.ignore))
            .map(|g| g.quad)
            .collect();
        let targets = assign_targets(&quads, &spec, im.width, im.height, a.alpha)?;
        out.insert(
            im.id.clone(),
            json!({ "num_gt": quads.len(), "targets": serde_json::to_value(&targets).map_err(|e| data(e.to_string()))? }),
        );
    }
    Ok(Value::Object(out))
}

fn nms(a: NmsArgs) -> Result<Value> {
    check_unit("iou", a.iou, false)?;
    let dets = load_detections(&a.det)?;
    let kept = quad_nms(&dets, a.iou)?;
    serde_json::to_value(&kept).map_err(|e| data(e.to_string()))
}

fn rectify(a: RectifyArgs) -> Result<Value> {
    if a.crop_width == 0 || a.crop_height == 0 {
        return Err(usage("crop size must be positive"));
    }
    let quads = load_quads(&a.quads)?;
    let bytes = fs::read(&a.image).map_err(|e| data(format!("{}: {e}", a.image.display())))?;
    let src = RgbImage::new(a.width, a.height, bytes)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| data(format!("{}: {e}", a.out_dir.display())))?;

    let mut crops = Vec::with_capacity(quads.len());
    for (i, q) in quads.iter().enumerate() {
        let h = rectify_homography(q, a.crop_width as f64, a.crop_height as f64)?;
        let img = warp_image(&src, &h, a.crop_width, a.crop_height)?;
        let name = format!("crop_{i}.rgb");
        let path = a.out_dir.join(&name);
        fs::write(&path, img.data()).map_err(|e| data(format!("{}: {e}", path.display())))?;
        crops.push(json!({ "index": i, "file": name, "homography": h.rows() }));
    }
    Ok(json!({ "width": a.crop_width, "height": a.crop_height, "crops": crops }))
}
