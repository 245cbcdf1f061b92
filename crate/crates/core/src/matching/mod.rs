//! Text-enhanced product matching.
//!
//! A query is first ranked against the gallery by visual cosine similarity.
//! When the two best candidates are within `t` of each other, they are
//! re-scored by mixing in the textual similarity of their word-feature
//! sequences.

mod encoding;
mod hungarian;

pub use encoding::{positional_encoding_2d, PE_TEMPERATURE};
pub use hungarian::{hungarian, Assignment};

use std::cmp::Ordering;
use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordFeature {
    pub vector: Vec<f64>,
    /// Word-box center normalized to the product crop.
    pub center: (f64, f64),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureSequence {
    items: Vec<WordFeature>,
    pe_applied: bool,
}

impl FeatureSequence {
    /// Builds a sequence, checking that every vector has the same length.
    pub fn new(items: Vec<WordFeature>) -> Result<Self> {
        if let Some(first) = items.first() {
            let d = first.vector.len();
            if let Some(bad) = items.iter().find(|f| f.vector.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: bad.vector.len(),
                });
            }
        }
        Ok(Self {
            items,
            pe_applied: false,
        })
    }

    /// Wraps items whose vectors already carry the positional encoding.
    pub fn encoded(items: Vec<WordFeature>) -> Result<Self> {
        let mut s = Self::new(items)?;
        s.pe_applied = true;
        Ok(s)
    }

    pub fn items(&self) -> &[WordFeature] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Vector width, or `None` for an empty sequence.
    pub fn dim(&self) -> Option<usize> {
        self.items.first().map(|f| f.vector.len())
    }

    pub fn pe_applied(&self) -> bool {
        self.pe_applied
    }
}

/// Adds the 2D positional encoding of each item's center to its vector.
///
/// A sequence can be encoded only once.
pub fn add_pe(s: &FeatureSequence) -> Result<FeatureSequence> {
    if s.pe_applied {
        return Err(Error::EncodingAlreadyApplied);
    }
    let items = s
        .items
        .iter()
        .map(|f| {
            let pe = positional_encoding_2d(f.center, f.vector.len())?;
            Ok(WordFeature {
                vector: f.vector.iter().zip(&pe).map(|(a, b)| a + b).collect(),
                center: f.center,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureSequence {
        items,
        pe_applied: true,
    })
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// Maximum total cosine similarity over one-to-one pairings of the two
/// sequences. With `normalized`, the sum is divided by `min(n, m)`.
pub fn text_similarity(sp: &FeatureSequence, sg: &FeatureSequence, normalized: bool) -> Result<f64> {
    if sp.is_empty() || sg.is_empty() {
        return Ok(0.0);
    }
    let neg: Vec<Vec<f64>> = sp
        .items
        .iter()
        .map(|p| sg.items.iter().map(|g| cosine(&p.vector, &g.vector).map(|c| -c)).collect())
        .collect::<Result<_>>()?;
    let a = hungarian(&neg)?;
    let total = -a.cost;
    Ok(if normalized {
        total / sp.len().min(sg.len()) as f64
    } else {
        total
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryEntry {
    pub category_id: String,
    pub visual: Vec<f64>,
    pub texts: FeatureSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub product_id: String,
    pub visual: Vec<f64>,
    pub texts: FeatureSequence,
    pub truth: Option<String>,
}

/// Validated gallery: non-empty, unique categories, one visual width.
#[derive(Debug, Clone)]
pub struct Gallery {
    entries: Vec<GalleryEntry>,
    visual_dim: usize,
}

impl Gallery {
    pub fn new(entries: Vec<GalleryEntry>) -> Result<Self> {
        let Some(first) = entries.first() else {
            return Err(Error::Input("gallery is empty".into()));
        };
        let visual_dim = first.visual.len();
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.category_id.as_str()) {
                return Err(Error::Input(format!("duplicate gallery category {:?}", e.category_id)));
            }
            if e.visual.len() != visual_dim {
                return Err(Error::DimensionMismatch {
                    expected: visual_dim,
                    found: e.visual.len(),
                });
            }
            if e.visual.iter().all(|v| *v == 0.0) {
                return Err(Error::Input(format!("gallery entry {:?} has a zero visual vector", e.category_id)));
            }
        }
        Ok(Self { entries, visual_dim })
    }

    pub fn entries(&self) -> &[GalleryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn visual_dim(&self) -> usize {
        self.visual_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Visual gap at or below which the text path is consulted.
    pub t: f64,
    /// Weight of the textual score in the re-ranking.
    pub w: f64,
    /// Divide textual similarity by `min(n, m)`.
    #[serde(default)]
    pub normalize_text: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            t: 0.0,
            w: 0.0,
            normalize_text: false,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(Error::InvalidParameter(format!("t must be >= 0, got {}", self.t)));
        }
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::InvalidParameter(format!("w must be in [0, 1], got {}", self.w)));
        }
        Ok(())
    }
}

/// The visual top-2 of one query with their textual similarities.
///
/// These are independent of `(t, w)`, so grid search evaluates every
/// grid point from the same candidates.
#[derive(Debug, Clone)]
struct Candidates {
    first: (usize, f64, f64),
    second: Option<(usize, f64, f64)>,
}

impl Candidates {
    fn build(q: &QueryRecord, gallery: &Gallery, normalize_text: bool) -> Result<Self> {
        if q.visual.len() != gallery.visual_dim {
            return Err(Error::DimensionMismatch {
                expected: gallery.visual_dim,
                found: q.visual.len(),
            });
        }
        let mut ranked: Vec<(usize, f64)> = gallery
            .entries
            .iter()
            .enumerate()
            .map(|(i, g)| cosine(&q.visual, &g.visual).map(|s| (i, s)))
            .collect::<Result<_>>()?;
        // category id breaks visual ties so gallery order never matters
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| gallery.entries[a.0].category_id.cmp(&gallery.entries[b.0].category_id))
        });
        let with_text = |(i, s): (usize, f64)| -> Result<(usize, f64, f64)> {
            let txt = text_similarity(&q.texts, &gallery.entries[i].texts, normalize_text)?;
            Ok((i, s, txt))
        };
        Ok(Self {
            first: with_text(ranked[0])?,
            second: ranked.get(1).copied().map(with_text).transpose()?,
        })
    }

    fn decide(&self, t: f64, w: f64) -> usize {
        let (i1, v1, x1) = self.first;
        let Some((i2, v2, x2)) = self.second else {
            return i1;
        };
        if t <= 0.0 || v1 - v2 > t {
            return i1;
        }
        let s1 = w * x1 + (1.0 - w) * v1;
        let s2 = w * x2 + (1.0 - w) * v2;
        if s2 > s1 {
            i2
        } else {
            i1
        }
    }
}

/// Returns the gallery category chosen for `q`.
pub fn match_product<'g>(q: &QueryRecord, gallery: &'g Gallery, cfg: &MatchConfig) -> Result<&'g str> {
    cfg.validate()?;
    let c = Candidates::build(q, gallery, cfg.normalize_text)?;
    Ok(&gallery.entries[c.decide(cfg.t, cfg.w)].category_id)
}

fn prepare<'q>(queries: &'q [QueryRecord], gallery: &Gallery, normalize_text: bool) -> Result<Vec<(Candidates, &'q str)>> {
    queries
        .par_iter()
        .map(|q| {
            let truth = q
                .truth
                .as_deref()
                .ok_or_else(|| Error::Input(format!("query {:?} has no ground-truth category", q.product_id)))?;
            Ok((Candidates::build(q, gallery, normalize_text)?, truth))
        })
        .collect()
}

fn count_correct(prepared: &[(Candidates, &str)], gallery: &Gallery, t: f64, w: f64) -> usize {
    prepared
        .iter()
        .filter(|(c, truth)| gallery.entries[c.decide(t, w)].category_id == *truth)
        .count()
}

/// Fraction of queries matched to their true category. 0 for no queries.
pub fn top1_accuracy(queries: &[QueryRecord], gallery: &Gallery, cfg: &MatchConfig) -> Result<f64> {
    cfg.validate()?;
    if queries.is_empty() {
        return Ok(0.0);
    }
    let prepared = prepare(queries, gallery, cfg.normalize_text)?;
    Ok(count_correct(&prepared, gallery, cfg.t, cfg.w) as f64 / queries.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TuneResult {
    pub t: f64,
    pub w: f64,
    pub accuracy: f64,
}

/// Exhaustive search over `t_grid × w_grid` for the best top-1 accuracy.
/// Ties go to the smaller `t`, then the smaller `w`.
pub fn tune_params(
    queries: &[QueryRecord],
    gallery: &Gallery,
    t_grid: &[f64],
    w_grid: &[f64],
    normalize_text: bool,
) -> Result<TuneResult> {
    if t_grid.is_empty() || w_grid.is_empty() {
        return Err(Error::InvalidParameter("tuning grids must be non-empty".into()));
    }
    let mut ts = t_grid.to_vec();
    let mut ws = w_grid.to_vec();
    for (t, w) in ts.iter().flat_map(|t| ws.iter().map(move |w| (*t, *w))) {
        MatchConfig {
            t,
            w,
            normalize_text,
        }
        .validate()?;
    }
    ts.sort_by(f64::total_cmp);
    ws.sort_by(f64::total_cmp);

    let prepared = prepare(queries, gallery, normalize_text)?;
    let grid: Vec<(f64, f64)> = ts.iter().flat_map(|&t| ws.iter().map(move |&w| (t, w))).collect();
    let counts: Vec<usize> = grid.par_iter().map(|&(t, w)| count_correct(&prepared, gallery, t, w)).collect();

    // first maximum in (t, w) ascending order
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    let (t, w) = grid[best];
    let accuracy = if queries.is_empty() {
        0.0
    } else {
        counts[best] as f64 / queries.len() as f64
    };
    Ok(TuneResult { t, w, accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wf(v: &[f64]) -> WordFeature {
        WordFeature {
            vector: v.to_vec(),
            center: (0.5, 0.5),
        }
    }

    fn seq(vs: &[&[f64]]) -> FeatureSequence {
        FeatureSequence::new(vs.iter().map(|v| wf(v)).collect()).unwrap()
    }

    fn entry(cat: &str, visual: &[f64], texts: FeatureSequence) -> GalleryEntry {
        GalleryEntry {
            category_id: cat.into(),
            visual: visual.to_vec(),
            texts,
        }
    }

    fn query(visual: &[f64], texts: FeatureSequence, truth: &str) -> QueryRecord {
        QueryRecord {
            product_id: format!("q-{truth}"),
            visual: visual.to_vec(),
            texts,
            truth: Some(truth.into()),
        }
    }

    #[test]
    fn orthonormal_self_match() {
        let s = seq(&[&[1., 0., 0.], &[0., 1., 0.], &[0., 0., 1.]]);
        assert!((text_similarity(&s, &s, false).unwrap() - 3.0).abs() < 1e-12);
        assert!((text_similarity(&s, &s, true).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_sequence_scores_zero() {
        let s = seq(&[&[1., 0.]]);
        assert_eq!(text_similarity(&s, &FeatureSequence::default(), false).unwrap(), 0.0);
    }

    #[test]
    fn text_dimension_mismatch() {
        assert!(text_similarity(&seq(&[&[1., 0.]]), &seq(&[&[1., 0., 0.]]), false).is_err());
        assert!(FeatureSequence::new(vec![wf(&[1.]), wf(&[1., 2.])]).is_err());
    }

    #[test]
    fn pe_guard_and_identity() {
        let s = FeatureSequence::new(vec![WordFeature {
            vector: vec![0.0; 8],
            center: (0.0, 0.0),
        }])
        .unwrap();
        let e = add_pe(&s).unwrap();
        assert_eq!(e.items()[0].vector, positional_encoding_2d((0.0, 0.0), 8).unwrap());
        assert_eq!(e.items()[0].center, (0.0, 0.0));
        assert!(matches!(add_pe(&e), Err(Error::EncodingAlreadyApplied)));
        assert!(add_pe(&FeatureSequence::default()).unwrap().is_empty());
    }

    #[test]
    fn gallery_validation() {
        let e = FeatureSequence::default();
        assert!(Gallery::new(vec![]).is_err());
        assert!(Gallery::new(vec![entry("a", &[1.], e.clone()), entry("a", &[1.], e.clone())]).is_err());
        assert!(Gallery::new(vec![entry("a", &[0., 0.], e.clone())]).is_err());
        assert!(Gallery::new(vec![entry("a", &[1., 0.], e.clone()), entry("b", &[1.], e)]).is_err());
    }

    // Visual sims: A = 1.0, B = 0.98 (gap 0.02). Query text equals B's text
    // and is orthogonal to A's, so the re-ranking picks B once
    // w·1 + (1-w)·0.98 > (1-w)·1, i.e. w > 0.02/1.02.
    fn confusable() -> (Gallery, QueryRecord) {
        let b_dir = [0.98, (1.0f64 - 0.98 * 0.98).sqrt()];
        let g = Gallery::new(vec![
            entry("A", &[1., 0.], seq(&[&[0., 1.]])),
            entry("B", &b_dir, seq(&[&[1., 0.]])),
        ])
        .unwrap();
        (g, query(&[1., 0.], seq(&[&[1., 0.]]), "B"))
    }

    #[test]
    fn decision_rule() {
        let (g, q) = confusable();
        let pick = |t, w| {
            match_product(
                &q,
                &g,
                &MatchConfig {
                    t,
                    w,
                    normalize_text: false,
                },
            )
            .unwrap()
            .to_string()
        };
        assert_eq!(pick(0.0, 1.0), "A");
        assert_eq!(pick(0.05, 0.0), "A");
        assert_eq!(pick(0.01, 0.9), "A"); // gap 0.02 > t
        let threshold = 0.02 / 1.02;
        assert_eq!(pick(0.05, threshold - 1e-6), "A");
        assert_eq!(pick(0.05, threshold + 1e-6), "B");
    }

    #[test]
    fn single_entry_gallery() {
        let g = Gallery::new(vec![entry("only", &[1., 2.], FeatureSequence::default())]).unwrap();
        let q = query(&[-1., 0.], FeatureSequence::default(), "only");
        assert_eq!(match_product(&q, &g, &MatchConfig::default()).unwrap(), "only");
    }

    #[test]
    fn visual_tie_breaks_by_category() {
        let e = FeatureSequence::default();
        let g1 = Gallery::new(vec![entry("z", &[1., 0.], e.clone()), entry("m", &[1., 0.], e.clone())]).unwrap();
        let g2 = Gallery::new(vec![entry("m", &[1., 0.], e.clone()), entry("z", &[1., 0.], e.clone())]).unwrap();
        let q = query(&[1., 0.], e, "m");
        let cfg = MatchConfig::default();
        assert_eq!(match_product(&q, &g1, &cfg).unwrap(), "m");
        assert_eq!(match_product(&q, &g2, &cfg).unwrap(), "m");
    }

    #[test]
    fn accuracy_and_tuning() {
        let (g, q) = confusable();
        // a second query that is visually unambiguous
        let q2 = query(&[0.0, 1.0], seq(&[&[0., 1.]]), "B");
        let qs = vec![q, q2];
        assert_eq!(top1_accuracy(&qs, &g, &MatchConfig::default()).unwrap(), 0.5);

        let r = tune_params(&qs, &g, &[0.0, 0.1, 0.05], &[0.5, 0.0, 1.0], false).unwrap();
        assert_eq!((r.t, r.w, r.accuracy), (0.05, 0.5, 1.0));
        let cfg = MatchConfig {
            t: r.t,
            w: r.w,
            normalize_text: false,
        };
        assert_eq!(top1_accuracy(&qs, &g, &cfg).unwrap(), r.accuracy);

        let single = tune_params(&qs, &g, &[0.0], &[0.3], false).unwrap();
        assert_eq!((single.t, single.w), (0.0, 0.3));
        assert!(tune_params(&qs, &g, &[], &[0.3], false).is_err());
    }

    #[test]
    fn accuracy_requires_truth() {
        let (g, mut q) = confusable();
        q.truth = None;
        assert!(top1_accuracy(&[q], &g, &MatchConfig::default()).is_err());
    }
}
