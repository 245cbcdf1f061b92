//! Training-target assignment for anchor-free quad detection.
//!
//! Each ground truth is spread over two adjacent pyramid levels by
//! [`soft_scale`], and every grid point inside its shrunk outline becomes a
//! target weighted by quad-centerness times the level factor.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{gravity_center, point_edge_distances, shrink_quad, Point2D, QuadBox, GEOM_EPS};

/// Feature-pyramid configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PyramidSpec {
    pub min_level: i32,
    pub max_level: i32,
    /// Level that receives objects of exactly `pretrain_size²` area.
    pub l_org: i32,
    pub pretrain_size: f64,
}

impl Default for PyramidSpec {
    fn default() -> Self {
        PyramidSpec {
            min_level: 3,
            max_level: 7,
            l_org: 5,
            pretrain_size: 224.0,
        }
    }
}

impl PyramidSpec {
    pub fn new(min_level: i32, max_level: i32, l_org: i32, pretrain_size: f64) -> Result<Self> {
        let spec = PyramidSpec {
            min_level,
            max_level,
            l_org,
            pretrain_size,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_level > self.max_level {
            return Err(Error::InvalidParameter(format!(
                "empty pyramid {}..={}",
                self.min_level, self.max_level
            )));
        }
        if !(0..=30).contains(&self.min_level) || self.max_level > 30 {
            return Err(Error::InvalidParameter("pyramid levels must lie in 0..=30".into()));
        }
        if self.l_org < self.min_level || self.l_org > self.max_level {
            return Err(Error::InvalidParameter(format!(
                "l_org {} outside pyramid {}..={}",
                self.l_org, self.min_level, self.max_level
            )));
        }
        if !(self.pretrain_size > 0.0 && self.pretrain_size.is_finite()) {
            return Err(Error::InvalidParameter("pretrain size must be positive".into()));
        }
        Ok(())
    }

    pub fn stride(&self, level: i32) -> f64 {
        (1u64 << level) as f64
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<i32> {
        self.min_level..=self.max_level
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelWeight {
    pub level: i32,
    pub factor: f64,
}

/// Output of [`soft_scale`]: the ceiling level `upper` and floor level
/// `lower`, already clamped into the pyramid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftScale {
    pub upper: LevelWeight,
    pub lower: LevelWeight,
}

impl SoftScale {
    /// Distinct levels with non-zero factor, ascending. Factors of levels
    /// that coincide after clamping are summed.
    pub fn merged(&self) -> Vec<LevelWeight> {
        if self.upper.level == self.lower.level {
            return vec![LevelWeight {
                level: self.upper.level,
                factor: self.upper.factor + self.lower.factor,
            }];
        }
        [self.lower, self.upper].into_iter().filter(|w| w.factor > 0.0).collect()
    }
}

/// Soft Scale level selection for an object of the given area.
pub fn soft_scale(area: f64, spec: &PyramidSpec) -> Result<SoftScale> {
    if !(area > 0.0 && area.is_finite()) {
        return Err(Error::InvalidParameter(format!("area must be positive, got {area}")));
    }
    let scale = (area.sqrt() / spec.pretrain_size).log2();
    let floor = scale.floor();
    let upper_factor = scale - floor;
    let upper = (spec.l_org as f64 + scale).ceil() as i32;
    let lower = spec.l_org + floor as i32;
    let clamp = |l: i32| l.clamp(spec.min_level, spec.max_level);
    Ok(SoftScale {
        upper: LevelWeight {
            level: clamp(upper),
            factor: upper_factor,
        },
        lower: LevelWeight {
            level: clamp(lower),
            factor: 1.0 - upper_factor,
        },
    })
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    a.min(b) / a.max(b)
}

/// Classic centerness on an axis-aligned box.
pub fn centerness_fcos(p: Point2D, rect: &AxisRect) -> Result<f64> {
    let (l, r, t, b) = (p.x - rect.x0, rect.x1 - p.x, p.y - rect.y0, rect.y1 - p.y);
    if [l, r, t, b].iter().any(|&d| d.is_nan() || d <= GEOM_EPS) {
        return Err(Error::ExteriorPoint { x: p.x, y: p.y });
    }
    Ok((ratio(l, r) * ratio(t, b)).sqrt())
}

/// Quad-centerness: compares the point's distances to the four edge lines
/// with those of the gravity center.
pub fn centerness_quad(p: Point2D, q: &QuadBox) -> Result<f64> {
    let dp = point_edge_distances(p, q)?;
    let dg = point_edge_distances(gravity_center(q), q)?;
    Ok(centerness_from_distances(&dp.as_array(), &dg.as_array()))
}

fn centerness_from_distances(dp: &[f64; 4], dg: &[f64; 4]) -> f64 {
    dp.iter().zip(dg).map(|(&a, &b)| ratio(a, b)).product::<f64>().sqrt()
}

/// One responsible grid point on one pyramid level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentTarget {
    pub level: i32,
    pub grid_y: usize,
    pub grid_x: usize,
    /// quad-centerness × level factor
    pub weight: f64,
    /// `(corner - pixel) / stride` for tl, tr, br, bl as interleaved x, y
    pub offsets: [f64; 8],
    pub gt_index: usize,
}

impl AssignmentTarget {
    pub fn pixel(&self, spec: &PyramidSpec) -> Point2D {
        let s = spec.stride(self.level);
        Point2D::new((self.grid_x as f64 + 0.5) * s, (self.grid_y as f64 + 0.5) * s)
    }

    /// Corners recovered from the pixel position and offsets.
    pub fn corners(&self, spec: &PyramidSpec) -> [Point2D; 4] {
        let p = self.pixel(spec);
        let s = spec.stride(self.level);
        std::array::from_fn(|i| Point2D::new(p.x + self.offsets[2 * i] * s, p.y + self.offsets[2 * i + 1] * s))
    }
}

#[allow(clippy::too_many_arguments)]
fn make_target(level: i32, gx: usize, gy: usize, pixel: Point2D, stride: f64, gt: &QuadBox, gt_index: usize, weight: f64) -> AssignmentTarget {
    let mut offsets = [0.0; 8];
    for (i, c) in gt.corners().iter().enumerate() {
        offsets[2 * i] = (c.x - pixel.x) / stride;
        offsets[2 * i + 1] = (c.y - pixel.y) / stride;
    }
    AssignmentTarget {
        level,
        grid_y: gy,
        grid_x: gx,
        weight,
        offsets,
        gt_index,
    }
}

fn candidates_for(gt: &QuadBox, gt_index: usize, spec: &PyramidSpec, image_w: f64, image_h: f64, alpha: f64) -> Result<Vec<AssignmentTarget>> {
    let levels = soft_scale(gt.area(), spec)?.merged();
    let shrunk = shrink_quad(gt, alpha)?;
    let center = gravity_center(gt);
    let dg = point_edge_distances(center, gt).ok();
    let [minx, miny, maxx, maxy] = shrunk.bounds();

    let mut out = Vec::new();
    for lw in &levels {
        let stride = spec.stride(lw.level);
        let gw = (image_w / stride).ceil().max(1.0) as usize;
        let gh = (image_h / stride).ceil().max(1.0) as usize;
        // grid x covers pixel centers (x + 0.5) * stride within the shrunk bounds
        let lo = |v: f64| ((v / stride - 0.5).floor().max(0.0)) as usize;
        let hi = |v: f64, n: usize| (((v / stride - 0.5).ceil()).max(0.0) as usize).min(n - 1);
        for gy in lo(miny)..=hi(maxy, gh) {
            for gx in lo(minx)..=hi(maxx, gw) {
                let p = Point2D::new((gx as f64 + 0.5) * stride, (gy as f64 + 0.5) * stride);
                if !shrunk.contains_strictly(p) {
                    continue;
                }
                let Some(dg) = dg else { continue };
                let Ok(dp) = point_edge_distances(p, gt) else { continue };
                let c = centerness_from_distances(&dp.as_array(), &dg.as_array());
                out.push(make_target(lw.level, gx, gy, p, stride, gt, gt_index, c * lw.factor));
            }
        }
    }

    if out.is_empty() {
        // Too small for any grid point: take the cell nearest the gravity center.
        for lw in &levels {
            let stride = spec.stride(lw.level);
            let gw = (image_w / stride).ceil().max(1.0) as usize;
            let gh = (image_h / stride).ceil().max(1.0) as usize;
            let gx = ((center.x / stride - 0.5).round().max(0.0) as usize).min(gw - 1);
            let gy = ((center.y / stride - 0.5).round().max(0.0) as usize).min(gh - 1);
            let p = Point2D::new((gx as f64 + 0.5) * stride, (gy as f64 + 0.5) * stride);
            out.push(make_target(lw.level, gx, gy, p, stride, gt, gt_index, lw.factor));
        }
    }
    Ok(out)
}

/// Builds per-pixel training targets for every ground truth.
///
/// Grid points claimed by several ground truths on the same level go to the
/// one with the smallest area (lower index on equal area). Output is sorted
/// by `(level, grid_y, grid_x, gt_index)`.
pub fn assign_targets(gts: &[QuadBox], spec: &PyramidSpec, image_w: f64, image_h: f64, alpha: f64) -> Result<Vec<AssignmentTarget>> {
    spec.validate()?;
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("shrink ratio must be in [0, 1), got {alpha}")));
    }
    if !(image_w > 0.0 && image_h > 0.0) {
        return Err(Error::InvalidParameter(format!("image size must be positive, got {image_w}×{image_h}")));
    }

    let per_gt: Vec<Vec<AssignmentTarget>> = gts
        .par_iter()
        .enumerate()
        .map(|(i, gt)| candidates_for(gt, i, spec, image_w, image_h, alpha))
        .collect::<Result<_>>()?;

    let mut cells: BTreeMap<(i32, usize, usize), AssignmentTarget> = BTreeMap::new();
    for target in per_gt.into_iter().flatten() {
        let key = (target.level, target.grid_y, target.grid_x);
        match cells.get(&key) {
            Some(held) => {
                let (ha, ta) = (gts[held.gt_index].area(), gts[target.gt_index].area());
                if ta < ha || (ta == ha && target.gt_index < held.gt_index) {
                    cells.insert(key, target);
                }
            }
            None => {
                cells.insert(key, target);
            }
        }
    }
    Ok(cells.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec() -> PyramidSpec {
        PyramidSpec::default()
    }

    #[test]
    fn soft_scale_exact_pretrain_size() {
        let ss = soft_scale(224.0 * 224.0, &spec()).unwrap();
        assert_eq!(ss.upper, LevelWeight { level: 5, factor: 0.0 });
        assert_eq!(ss.lower, LevelWeight { level: 5, factor: 1.0 });
        assert_eq!(ss.merged(), vec![LevelWeight { level: 5, factor: 1.0 }]);
    }

    #[test]
    fn soft_scale_just_below_pretrain_size() {
        let ss = soft_scale(223.0 * 223.0, &spec()).unwrap();
        assert_eq!(ss.upper.level, 5);
        assert_eq!(ss.lower.level, 4);
        assert!((ss.upper.factor - 0.994).abs() < 1e-3);
        assert!((ss.lower.factor - 0.006).abs() < 1e-3);
    }

    #[test]
    fn soft_scale_integer_log() {
        // sqrt(4·224²)/224 = 2, log2 = 1: one level above l_org
        let ss = soft_scale(4.0 * 224.0 * 224.0, &spec()).unwrap();
        assert_eq!(ss.merged(), vec![LevelWeight { level: 6, factor: 1.0 }]);
        let ss = soft_scale(16.0 * 224.0 * 224.0, &spec()).unwrap();
        assert_eq!(ss.merged(), vec![LevelWeight { level: 7, factor: 1.0 }]);
    }

    #[test]
    fn soft_scale_clamps_outside_pyramid() {
        // 5 + log2(1e4/224) ≈ 10.5 lies above level 7
        let ss = soft_scale(1e8, &spec()).unwrap();
        assert_eq!(ss.merged(), vec![LevelWeight { level: 7, factor: 1.0 }]);
        // 5 + log2(3/224) ≈ -1.2 lies below level 3
        let ss = soft_scale(9.0, &spec()).unwrap();
        assert_eq!(ss.merged().len(), 1);
        assert_eq!(ss.merged()[0].level, 3);
        assert_relative_eq!(ss.merged()[0].factor, 1.0, epsilon = 1e-12);
        // straddling the bottom edge: levels 2 and 3 both map to 3
        let ss = soft_scale((224.0f64 / 5.0).powi(2), &spec()).unwrap();
        assert_eq!(ss.merged().len(), 1);
    }

    #[test]
    fn soft_scale_rejects_bad_area() {
        assert!(soft_scale(0.0, &spec()).is_err());
        assert!(soft_scale(-4.0, &spec()).is_err());
        assert!(soft_scale(f64::NAN, &spec()).is_err());
    }

    #[test]
    fn fcos_examples() {
        let r = AxisRect { x0: 0., y0: 0., x1: 4., y1: 4. };
        assert_eq!(centerness_fcos(Point2D::new(2., 2.), &r).unwrap(), 1.0);
        assert_relative_eq!(centerness_fcos(Point2D::new(1., 2.), &r).unwrap(), (1.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert!(centerness_fcos(Point2D::new(1e-6, 1e-6), &r).unwrap() < 1e-5);
        assert!(centerness_fcos(Point2D::new(5., 2.), &r).is_err());
    }

    #[test]
    fn quad_centerness_peak_at_gravity_center() {
        let q = QuadBox::from_flat(&[0., 0., 4., 0., 3., 2., 1., 2.]).unwrap();
        assert_eq!(centerness_quad(gravity_center(&q), &q).unwrap(), 1.0);
    }

    #[test]
    fn quad_centerness_trapezoid_by_hand() {
        // gravity center of (0,0)(4,0)(3,2)(1,2) is (2, 8/9).
        // Legs lie on y = 2x and y = -2x + 8, so line distances carry 1/sqrt(5).
        let q = QuadBox::from_flat(&[0., 0., 4., 0., 3., 2., 1., 2.]).unwrap();
        let s5 = 5f64.sqrt();
        let (px, py) = (2.0, 0.5);
        let (gx, gy) = (2.0, 8.0 / 9.0);
        let dp = [(2.0 * px - py) / s5, (8.0 - 2.0 * px - py) / s5, py, 2.0 - py];
        let dg = [(2.0 * gx - gy) / s5, (8.0 - 2.0 * gx - gy) / s5, gy, 2.0 - gy];
        let expected = dp.iter().zip(&dg).map(|(a, b)| a.min(*b) / a.max(*b)).product::<f64>().sqrt();
        let got = centerness_quad(Point2D::new(px, py), &q).unwrap();
        assert_relative_eq!(got, expected, epsilon = 1e-12);
        // leg ratios (28/9)/3.5 each, top (1/2)/(8/9), bottom (10/9)/(3/2)
        assert_relative_eq!(got, (11520.0f64 / 34992.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn quad_centerness_rejects_exterior() {
        let q = QuadBox::axis_aligned(0., 0., 2., 2.).unwrap();
        assert!(matches!(centerness_quad(Point2D::new(3., 1.), &q), Err(Error::ExteriorPoint { .. })));
    }

    #[test]
    fn single_box_lands_on_level_five() {
        let gt = QuadBox::axis_aligned(144., 144., 368., 368.).unwrap();
        let targets = assign_targets(&[gt], &spec(), 512., 512., 0.3).unwrap();
        assert!(!targets.is_empty());
        assert!(targets.iter().all(|t| t.level == 5));

        // enumerate level-5 grid points against the shrunk box [177.6, 334.4]²
        let expected: Vec<(usize, usize)> = (0..16)
            .flat_map(|gy| (0..16).map(move |gx| (gy, gx)))
            .filter(|&(gy, gx)| {
                let (x, y) = ((gx as f64 + 0.5) * 32.0, (gy as f64 + 0.5) * 32.0);
                x > 177.6 && x < 334.4 && y > 177.6 && y < 334.4
            })
            .collect();
        let got: Vec<(usize, usize)> = targets.iter().map(|t| (t.grid_y, t.grid_x)).collect();
        assert_eq!(got, expected);

        let best = targets.iter().max_by(|a, b| a.weight.total_cmp(&b.weight)).unwrap();
        let p = best.pixel(&spec());
        let nearest = targets
            .iter()
            .map(|t| t.pixel(&spec()).distance(Point2D::new(256., 256.)))
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(p.distance(Point2D::new(256., 256.)), nearest, epsilon = 1e-9);
    }

    #[test]
    fn offsets_reconstruct_corners() {
        let gt = QuadBox::from_flat(&[100., 120., 300., 90., 330., 260., 80., 300.]).unwrap();
        let targets = assign_targets(&[gt], &spec(), 640., 480., 0.3).unwrap();
        assert!(!targets.is_empty());
        for t in &targets {
            for (c, r) in gt.corners().iter().zip(t.corners(&spec())) {
                assert!(c.distance(r) < 1e-6);
            }
            assert!(t.weight > 0.0 && t.weight <= 1.0);
        }
    }

    #[test]
    fn extreme_shrink_keeps_at_most_one_point_per_level() {
        let gt = QuadBox::from_flat(&[40., 50., 260., 60., 250., 230., 30., 220.]).unwrap();
        let targets = assign_targets(&[gt], &spec(), 320., 320., 0.999).unwrap();
        let g = gravity_center(&gt);
        for level in spec().levels() {
            let on_level: Vec<_> = targets.iter().filter(|t| t.level == level).collect();
            assert!(on_level.len() <= 1);
            if let Some(t) = on_level.first() {
                let stride = spec().stride(level);
                let d = t.pixel(&spec()).distance(g);
                assert!(d <= stride * std::f64::consts::FRAC_1_SQRT_2 + 1e-9);
            }
        }
        assert!(!targets.is_empty());
    }

    #[test]
    fn nested_boxes_prefer_smaller() {
        let outer = QuadBox::axis_aligned(0., 0., 256., 256.).unwrap();
        let inner = QuadBox::axis_aligned(64., 64., 192., 192.).unwrap();
        let t = assign_targets(&[outer, inner], &spec(), 256., 256., 0.0).unwrap();
        let inner_cells: Vec<_> = t.iter().filter(|t| t.gt_index == 1).collect();
        assert!(!inner_cells.is_empty());
        for c in &inner_cells {
            let p = c.pixel(&spec());
            assert!(p.x > 64. && p.x < 192. && p.y > 64. && p.y < 192.);
        }
        // every shared cell went to the inner box
        for c in t.iter().filter(|t| t.gt_index == 0) {
            let p = c.pixel(&spec());
            let inside_inner = p.x > 64. && p.x < 192. && p.y > 64. && p.y < 192.;
            let inner_has_level = inner_cells.iter().any(|i| i.level == c.level);
            assert!(!(inside_inner && inner_has_level));
        }
    }

    #[test]
    fn tiny_box_falls_back_to_nearest_cell() {
        let gt = QuadBox::axis_aligned(10., 10., 13., 12.).unwrap();
        let t = assign_targets(&[gt], &spec(), 100., 100., 0.3).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].level, 3);
        assert_eq!((t[0].grid_x, t[0].grid_y), (1, 1));
        assert_relative_eq!(t[0].weight, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_input() {
        assert!(assign_targets(&[], &spec(), 10., 10., 0.3).unwrap().is_empty());
    }

    #[test]
    fn output_is_sorted() {
        let gts = [
            QuadBox::axis_aligned(10., 10., 200., 150.).unwrap(),
            QuadBox::axis_aligned(220., 30., 300., 300.).unwrap(),
            QuadBox::axis_aligned(5., 200., 100., 310.).unwrap(),
        ];
        let t = assign_targets(&gts, &spec(), 320., 320., 0.3).unwrap();
        let keys: Vec<_> = t.iter().map(|t| (t.level, t.grid_y, t.grid_x, t.gt_index)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }
}
