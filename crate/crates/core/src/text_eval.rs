//! Text detection and recognition metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{quad_iou, QuadBox};

/// Lowercases and keeps only `[0-9a-z]`.
pub fn normalize_transcription(raw: &str) -> String {
    raw.chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_ascii_digit() || c.is_ascii_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRegion {
    pub quad: QuadBox,
    pub legible: bool,
    pub transcription: String,
}

impl TextRegion {
    /// Normalizes the transcription; illegible regions drop theirs.
    pub fn new(quad: QuadBox, legible: bool, raw: &str) -> Result<Self> {
        let transcription = if legible { normalize_transcription(raw) } else { String::new() };
        if legible && transcription.is_empty() {
            return Err(Error::Input(format!(
                "legible region has no alphanumeric transcription (raw {raw:?})"
            )));
        }
        Ok(TextRegion {
            quad,
            legible,
            transcription,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: BTreeSet<String>,
}

impl Vocabulary {
    /// Normalizes and de-duplicates; words that normalize to nothing are skipped.
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: BTreeSet<String> = words
            .into_iter()
            .map(|w| normalize_transcription(w.as_ref()))
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return Err(Error::Input("vocabulary is empty".into()));
        }
        Ok(Vocabulary { words })
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Words in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

/// Levenshtein distance over Unicode scalar values with unit costs.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Denominator used by [`ned`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NedNormalization {
    /// `max(len(pred), len(gt), 1)`, bounded to [0, 1].
    #[default]
    MaxLength,
    /// `max(len(gt), 1)`.
    GroundTruthLength,
}

/// Mean normalized edit distance over `(prediction, ground truth)` pairs.
/// An empty list scores 0.
pub fn ned<S: AsRef<str>>(pairs: &[(S, S)], norm: NedNormalization) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let total: f64 = pairs
        .iter()
        .map(|(p, g)| {
            let (p, g) = (p.as_ref(), g.as_ref());
            let (lp, lg) = (p.chars().count(), g.chars().count());
            let denom = match norm {
                NedNormalization::MaxLength => lp.max(lg),
                NedNormalization::GroundTruthLength => lg,
            }
            .max(1);
            edit_distance(p, g) as f64 / denom as f64
        })
        .sum();
    total / pairs.len() as f64
}

/// Fraction of pairs whose strings are equal. An empty list scores 0.
pub fn word_accuracy<S: AsRef<str>>(pairs: &[(S, S)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().filter(|(p, g)| p.as_ref() == g.as_ref()).count() as f64 / pairs.len() as f64
}

/// Closest vocabulary word by edit distance; lexicographically first on ties.
pub fn vocab_correct(pred: &str, vocab: &Vocabulary) -> String {
    if vocab.contains(pred) {
        return pred.to_owned();
    }
    vocab
        .iter()
        .map(|w| (edit_distance(pred, w), w))
        .min()
        .map(|(_, w)| w.to_owned())
        .unwrap_or_else(|| pred.to_owned())
}

/// Raw counts behind precision and recall, summable across images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub matched: usize,
    /// legible ground truths
    pub num_gt: usize,
    /// predictions that were not absorbed by an illegible region
    pub num_pred: usize,
}

impl DetectionCounts {
    pub fn merge(self, other: DetectionCounts) -> DetectionCounts {
        DetectionCounts {
            matched: self.matched + other.matched,
            num_gt: self.num_gt + other.num_gt,
            num_pred: self.num_pred + other.num_pred,
        }
    }

    pub fn prf(&self) -> Prf {
        let precision = if self.num_pred == 0 { 0.0 } else { self.matched as f64 / self.num_pred as f64 };
        let recall = if self.num_gt == 0 { 0.0 } else { self.matched as f64 / self.num_gt as f64 };
        let hmean = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            hmean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub hmean: f64,
}

/// Matches predictions to legible regions one-to-one, taking pairs in
/// descending IoU. Unmatched predictions reaching `iou_thresh` against an
/// illegible region are don't-care and leave the precision denominator.
pub fn text_det_counts(preds: &[QuadBox], gts: &[TextRegion], iou_thresh: f64) -> DetectionCounts {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, p) in preds.iter().enumerate() {
        for (gi, g) in gts.iter().enumerate().filter(|(_, g)| g.legible) {
            let iou = quad_iou(p, &g.quad);
            if iou >= iou_thresh {
                pairs.push((iou, pi, gi));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut matched = 0;
    for (_, pi, gi) in pairs {
        if !pred_used[pi] && !gt_used[gi] {
            pred_used[pi] = true;
            gt_used[gi] = true;
            matched += 1;
        }
    }

    let dont_care = preds
        .iter()
        .enumerate()
        .filter(|(pi, p)| !pred_used[*pi] && gts.iter().any(|g| !g.legible && quad_iou(p, &g.quad) >= iou_thresh))
        .count();

    DetectionCounts {
        matched,
        num_gt: gts.iter().filter(|g| g.legible).count(),
        num_pred: preds.len() - dont_care,
    }
}

/// Precision, recall and hmean for a single image.
pub fn text_det_prf(preds: &[QuadBox], gts: &[TextRegion], iou_thresh: f64) -> Prf {
    text_det_counts(preds, gts, iou_thresh).prf()
}
