mod common;

use common::convex_quad;
use proptest::prelude::*;
use unitail_core::assignment::{assign_targets, soft_scale, PyramidSpec};
use unitail_core::geometry::{shrink_quad, QuadBox};

fn expected_level(area: f64, spec: &PyramidSpec) -> f64 {
    let s = spec.l_org as f64 + (area.sqrt() / spec.pretrain_size).log2();
    s.clamp(spec.min_level as f64, spec.max_level as f64)
}

proptest! {
    #[test]
    fn factors_sum_to_one(area in 1.0..1e8f64) {
        let ss = soft_scale(area, &PyramidSpec::default()).unwrap();
        prop_assert!((ss.upper.factor + ss.lower.factor - 1.0).abs() < 1e-12);
        prop_assert!(ss.upper.factor >= 0.0 && ss.lower.factor > 0.0);
        let merged = ss.merged();
        prop_assert!((merged.iter().map(|w| w.factor).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_level_tracks_scale_inside_pyramid(area in 1.0..1e8f64) {
        let spec = PyramidSpec::default();
        let ss = soft_scale(area, &spec).unwrap();
        let mean = ss.upper.level as f64 * ss.upper.factor + ss.lower.level as f64 * ss.lower.factor;
        let raw = spec.l_org as f64 + (area.sqrt() / spec.pretrain_size).log2();
        if raw >= spec.min_level as f64 && raw <= spec.max_level as f64 {
            prop_assert!((mean - expected_level(area, &spec)).abs() < 1e-9);
        }
    }

    #[test]
    fn mean_level_monotone(a in 1.0..1e8f64, b in 1.0..1e8f64) {
        let spec = PyramidSpec::default();
        let mean = |area| {
            let ss = soft_scale(area, &spec).unwrap();
            ss.upper.level as f64 * ss.upper.factor + ss.lower.level as f64 * ss.lower.factor
        };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(mean(lo) <= mean(hi) + 1e-12);
    }

    #[test]
    fn targets_lie_inside_shrunk_quads(q in convex_quad(), alpha in 0.0..0.6f64) {
        // shift into positive image coordinates
        let q = q.map_corners(|p| unitail_core::Point2D::new(p.x + 100.0, p.y + 100.0)).unwrap();
        let spec = PyramidSpec::default();
        let targets = assign_targets(&[q], &spec, 256.0, 256.0, alpha).unwrap();
        let shrunk = shrink_quad(&q, alpha).unwrap();
        for t in &targets {
            prop_assert!(t.weight > 0.0 && t.weight <= 1.0 + 1e-12);
            let p = t.pixel(&spec);
            let inside = shrunk.to_polygon().contains(p);
            // the tiny-object fallback may pick the nearest cell instead
            let fallback = !targets.iter().any(|o| o.level == t.level && shrunk.to_polygon().contains(o.pixel(&spec)));
            prop_assert!(inside || fallback);
            for (c, r) in q.corners().iter().zip(t.corners(&spec)) {
                prop_assert!(c.distance(r) < 1e-9);
            }
        }
        let levels: Vec<i32> = soft_scale(q.area(), &spec).unwrap().merged().iter().map(|w| w.level).collect();
        prop_assert!(targets.iter().all(|t| levels.contains(&t.level)));
    }

    #[test]
    fn target_order_is_stable(qs in prop::collection::vec(convex_quad(), 1..6)) {
        let qs: Vec<QuadBox> = qs.iter().map(|q| q.map_corners(|p| unitail_core::Point2D::new(p.x + 100.0, p.y + 100.0)).unwrap()).collect();
        let spec = PyramidSpec::default();
        let a = assign_targets(&qs, &spec, 256.0, 256.0, 0.3).unwrap();
        let b = assign_targets(&qs, &spec, 256.0, 256.0, 0.3).unwrap();
        prop_assert_eq!(&a, &b);
        // at most one target per cell and level
        let mut cells: Vec<_> = a.iter().map(|t| (t.level, t.grid_y, t.grid_x)).collect();
        let n = cells.len();
        cells.dedup();
        prop_assert_eq!(cells.len(), n);
    }
}
