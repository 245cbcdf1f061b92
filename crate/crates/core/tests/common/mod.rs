#![allow(dead_code)]

use proptest::prelude::*;
use unitail_core::geometry::{Point2D, QuadBox};

/// Convex quad with corners at increasing angles around a center.
pub fn convex_quad() -> impl Strategy<Value = QuadBox> {
    (
        -50.0..50.0f64,
        -50.0..50.0f64,
        prop::array::uniform4(0.0..1.0f64),
        prop::array::uniform4(2.0..30.0f64),
        0.0..std::f64::consts::TAU,
    )
        .prop_filter_map("degenerate quad", |(cx, cy, gaps, radii, start)| {
            quad_from_polar(cx, cy, gaps, radii, start)
        })
}

pub fn quad_from_polar(cx: f64, cy: f64, gaps: [f64; 4], radii: [f64; 4], start: f64) -> Option<QuadBox> {
    // gaps become angular steps; each step is kept below π so the outline stays convex
    let w: Vec<f64> = gaps.iter().map(|g| 0.25 + g).collect();
    let sum: f64 = w.iter().sum();
    let mut theta = start;
    let mut pts = [Point2D::new(0.0, 0.0); 4];
    for i in 0..4 {
        pts[i] = Point2D::new(cx + radii[i] * theta.cos(), cy + radii[i] * theta.sin());
        theta += std::f64::consts::TAU * w[i] / sum;
    }
    let q = QuadBox::new(pts).ok()?;
    (q.is_convex() && q.area() > 1.0).then_some(q)
}

pub fn rect() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (-100.0..100.0f64, -100.0..100.0f64, 1.0..80.0f64, 1.0..80.0f64).prop_map(|(x, y, w, h)| (x, y, x + w, y + h))
}
