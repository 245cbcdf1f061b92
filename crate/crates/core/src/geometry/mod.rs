//! Exact geometry on quadrilaterals and simple polygons.
//!
//! Coordinates are image pixels with `y` growing downward. A [`QuadBox`]
//! stores its corners as `tl, tr, br, bl`; walking them in that order is
//! clockwise on screen, which gives a strictly positive shoelace sum.

mod rectify;

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use rectify::{rectify_homography, warp_image, Homography, RgbImage};

/// Degeneracy tolerance in pixels (and pixels² for areas).
pub const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2D { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, other: Point2D) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2D cross product.
    pub fn cross(self, other: Point2D) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2D) -> f64 {
        (self - other).norm()
    }
}

impl Add for Point2D {
    type Output = Point2D;
    fn add(self, rhs: Point2D) -> Point2D {
        Point2D::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2D {
    type Output = Point2D;
    fn sub(self, rhs: Point2D) -> Point2D {
        Point2D::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2D {
    type Output = Point2D;
    fn mul(self, rhs: f64) -> Point2D {
        Point2D::new(self.x * rhs, self.y * rhs)
    }
}

/// Orientation of `p` relative to the directed line `a -> b`.
/// Positive when `p` lies on the interior side of a positively oriented ring.
#[inline]
fn orient(a: Point2D, b: Point2D, p: Point2D) -> f64 {
    (b - a).cross(p - a)
}

fn on_segment(a: Point2D, b: Point2D, p: Point2D) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test (touching counts).
fn segments_intersect(p1: Point2D, p2: Point2D, p3: Point2D, p4: Point2D) -> bool {
    let d1 = orient(p3, p4, p1);
    let d2 = orient(p3, p4, p2);
    let d3 = orient(p1, p2, p3);
    let d4 = orient(p1, p2, p4);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(p3, p4, p1))
        || (d2 == 0.0 && on_segment(p3, p4, p2))
        || (d3 == 0.0 && on_segment(p1, p2, p3))
        || (d4 == 0.0 && on_segment(p1, p2, p4))
}

fn point_segment_distance(p: Point2D, a: Point2D, b: Point2D) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Signed shoelace area. Positive for the tl-first clockwise (y-down) ordering.
pub fn signed_area(points: &[Point2D]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    // Translating to the first vertex keeps the products small.
    let o = points[0];
    let mut twice = 0.0;
    for i in 1..points.len() - 1 {
        twice += (points[i] - o).cross(points[i + 1] - o);
    }
    twice * 0.5
}

/// Absolute polygon area by the shoelace formula.
pub fn shoelace_area(points: &[Point2D]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::DegeneratePolygon(format!(
            "need at least 3 vertices, got {}",
            points.len()
        )));
    }
    Ok(signed_area(points).abs())
}

/// Area-weighted centroid of a simple polygon.
pub fn polygon_centroid(points: &[Point2D]) -> Result<Point2D> {
    let area = signed_area(points);
    if points.len() < 3 || area.abs() <= GEOM_EPS {
        return Err(Error::DegeneratePolygon("zero-area polygon has no centroid".into()));
    }
    let o = points[0];
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..points.len() {
        let a = points[i] - o;
        let b = points[(i + 1) % points.len()] - o;
        let c = a.cross(b);
        cx += (a.x + b.x) * c;
        cy += (a.y + b.y) * c;
    }
    let k = 1.0 / (6.0 * area);
    Ok(Point2D::new(o.x + cx * k, o.y + cy * k))
}

/// A simple polygon with at least three vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2D>", into = "Vec<Point2D>")]
pub struct Polygon {
    vertices: Vec<Point2D>,
}

impl TryFrom<Vec<Point2D>> for Polygon {
    type Error = Error;
    fn try_from(v: Vec<Point2D>) -> Result<Self> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<Point2D> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

impl Polygon {
    pub fn new(vertices: Vec<Point2D>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::DegeneratePolygon(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(i) = vertices.iter().position(|p| !p.is_finite()) {
            return Err(Error::Input(format!("vertex {i} is not finite")));
        }
        Ok(Polygon { vertices })
    }

    /// Builds a polygon from interleaved `x0, y0, x1, y1, ...` values.
    pub fn from_flat(coords: &[f64]) -> Result<Self> {
        if !coords.len().is_multiple_of(2) {
            return Err(Error::Input(format!(
                "polygon needs an even number of coordinates, got {}",
                coords.len()
            )));
        }
        Polygon::new(coords.chunks_exact(2).map(|c| Point2D::new(c[0], c[1])).collect())
    }

    pub fn vertices(&self) -> &[Point2D] {
        &self.vertices
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        let sign = self.signed_area().signum();
        (0..n).all(|i| {
            let a = self.vertices[(i + n - 1) % n];
            let b = self.vertices[i];
            let c = self.vertices[(i + 1) % n];
            orient(a, b, c) * sign >= 0.0
        })
    }

    /// Even-odd containment; boundary points may land on either side.
    pub fn contains(&self, p: Point2D) -> bool {
        let v = &self.vertices;
        let mut inside = false;
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[j]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn bounds(&self) -> [f64; 4] {
        bounds_of(&self.vertices)
    }

    fn reversed(&self) -> Polygon {
        let mut v = self.vertices.clone();
        v.reverse();
        Polygon { vertices: v }
    }
}

fn bounds_of(points: &[Point2D]) -> [f64; 4] {
    points.iter().fold(
        [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
        |b, p| [b[0].min(p.x), b[1].min(p.y), b[2].max(p.x), b[3].max(p.y)],
    )
}

/// Four ordered corners `tl, tr, br, bl` of a product or text region.
///
/// Construction rejects non-finite coordinates, self-intersecting outlines and
/// any ordering whose shoelace area is not strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 8]", into = "[f64; 8]")]
pub struct QuadBox {
    corners: [Point2D; 4],
}

impl TryFrom<[f64; 8]> for QuadBox {
    type Error = Error;
    fn try_from(c: [f64; 8]) -> Result<Self> {
        QuadBox::from_flat(&c)
    }
}

impl From<QuadBox> for [f64; 8] {
    fn from(q: QuadBox) -> Self {
        q.to_flat()
    }
}

impl QuadBox {
    pub fn new(corners: [Point2D; 4]) -> Result<Self> {
        if let Some(i) = corners.iter().position(|p| !p.is_finite()) {
            return Err(Error::Input(format!("corner {i} is not finite")));
        }
        let [a, b, c, d] = corners;
        if segments_intersect(a, b, c, d) || segments_intersect(b, c, d, a) {
            return Err(Error::DegeneratePolygon("quad is self-intersecting".into()));
        }
        let area = signed_area(&corners);
        if area <= GEOM_EPS {
            return Err(Error::DegeneratePolygon(format!(
                "quad signed area {area} is not positive (expected tl, tr, br, bl order)"
            )));
        }
        Ok(QuadBox { corners })
    }

    /// Builds a quad from `[x_tl, y_tl, x_tr, y_tr, x_br, y_br, x_bl, y_bl]`.
    pub fn from_flat(c: &[f64]) -> Result<Self> {
        if c.len() != 8 {
            return Err(Error::Input(format!(
                "quad needs 8 coordinates, got {}",
                c.len()
            )));
        }
        QuadBox::new([
            Point2D::new(c[0], c[1]),
            Point2D::new(c[2], c[3]),
            Point2D::new(c[4], c[5]),
            Point2D::new(c[6], c[7]),
        ])
    }

    pub fn axis_aligned(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        QuadBox::new([
            Point2D::new(x0, y0),
            Point2D::new(x1, y0),
            Point2D::new(x1, y1),
            Point2D::new(x0, y1),
        ])
    }

    pub fn corners(&self) -> &[Point2D; 4] {
        &self.corners
    }

    pub fn tl(&self) -> Point2D {
        self.corners[0]
    }
    pub fn tr(&self) -> Point2D {
        self.corners[1]
    }
    pub fn br(&self) -> Point2D {
        self.corners[2]
    }
    pub fn bl(&self) -> Point2D {
        self.corners[3]
    }

    pub fn to_flat(&self) -> [f64; 8] {
        let c = &self.corners;
        [c[0].x, c[0].y, c[1].x, c[1].y, c[2].x, c[2].y, c[3].x, c[3].y]
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon {
            vertices: self.corners.to_vec(),
        }
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.corners)
    }

    pub fn bounds(&self) -> [f64; 4] {
        bounds_of(&self.corners)
    }

    pub fn is_convex(&self) -> bool {
        (0..4).all(|i| orient(self.corners[(i + 3) % 4], self.corners[i], self.corners[(i + 1) % 4]) > 0.0)
    }

    /// True when `p` is inside the quad and farther than [`GEOM_EPS`] from every edge.
    pub fn contains_strictly(&self, p: Point2D) -> bool {
        if !self.to_polygon().contains(p) {
            return false;
        }
        (0..4).all(|i| point_segment_distance(p, self.corners[i], self.corners[(i + 1) % 4]) > GEOM_EPS)
    }

    /// Applies `f` to every corner, re-validating the result.
    pub fn map_corners(&self, f: impl Fn(Point2D) -> Point2D) -> Result<Self> {
        QuadBox::new(self.corners.map(f))
    }

    fn convex_outline(&self) -> Polygon {
        if self.is_convex() {
            self.to_polygon()
        } else {
            // A simple quad always has a non-degenerate hull.
            convex_hull(&self.corners).expect("hull of a positive-area quad")
        }
    }
}

/// Convex hull (monotone chain). Collinear points are dropped and the ring
/// has the same orientation as a [`QuadBox`].
pub fn convex_hull(points: &[Point2D]) -> Result<Polygon> {
    if let Some(i) = points.iter().position(|p| !p.is_finite()) {
        return Err(Error::Input(format!("point {i} is not finite")));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(Error::DegeneratePolygon(format!(
            "need at least 3 distinct points, got {}",
            pts.len()
        )));
    }

    let mut hull: Vec<Point2D> = Vec::with_capacity(pts.len() * 2);
    for pass in [&pts[..], &pts.iter().rev().copied().collect::<Vec<_>>()[..]] {
        let start = hull.len();
        for &p in pass {
            while hull.len() >= start + 2 && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    if hull.len() < 3 || signed_area(&hull) <= GEOM_EPS {
        return Err(Error::DegeneratePolygon("all points are collinear".into()));
    }
    Ok(Polygon { vertices: hull })
}

/// Intersection of `subject` with the convex polygon `clip`, by clipping
/// against each half-plane of `clip` in turn. `None` when the overlap has no area.
pub fn clip_polygon(subject: &Polygon, clip: &Polygon) -> Option<Polygon> {
    let clip = if clip.signed_area() < 0.0 {
        clip.reversed()
    } else {
        clip.clone()
    };
    let cv = clip.vertices();
    let mut output = subject.vertices.clone();

    for i in 0..cv.len() {
        if output.is_empty() {
            break;
        }
        let (a, b) = (cv[i], cv[(i + 1) % cv.len()]);
        let input = std::mem::take(&mut output);
        let mut s = *input.last().unwrap();
        let mut ds = orient(a, b, s);
        for &e in &input {
            let de = orient(a, b, e);
            if de >= 0.0 {
                if ds < 0.0 {
                    output.push(s + (e - s) * (ds / (ds - de)));
                }
                output.push(e);
            } else if ds >= 0.0 {
                output.push(s + (e - s) * (ds / (ds - de)));
            }
            s = e;
            ds = de;
        }
    }

    if output.len() < 3 || signed_area(&output).abs() <= GEOM_EPS {
        return None;
    }
    Some(Polygon { vertices: output })
}

/// Area of `region ∩ convex`, where `region` may be any simple polygon.
pub fn intersection_area(region: &Polygon, convex: &Polygon) -> f64 {
    clip_polygon(region, convex).map_or(0.0, |p| p.area())
}

fn boxes_disjoint(a: [f64; 4], b: [f64; 4]) -> bool {
    a[2] <= b[0] || b[2] <= a[0] || a[3] <= b[1] || b[3] <= a[1]
}

/// Exact intersection-over-union of two quads. Non-convex quads are
/// replaced by their convex hulls first.
pub fn quad_iou(a: &QuadBox, b: &QuadBox) -> f64 {
    if boxes_disjoint(a.bounds(), b.bounds()) {
        return 0.0;
    }
    // Canonical argument order makes the result bit-for-bit symmetric.
    let (a, b) = if a.to_flat().iter().map(|v| v.to_bits()).lt(b.to_flat().iter().map(|v| v.to_bits())) {
        (a, b)
    } else {
        (b, a)
    };
    let pa = a.convex_outline();
    let pb = b.convex_outline();
    let inter = intersection_area(&pa, &pb);
    let union = pa.area() + pb.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Area-weighted centroid (center of gravity) of the quad.
pub fn gravity_center(q: &QuadBox) -> Point2D {
    polygon_centroid(&q.corners).expect("QuadBox has positive area")
}

/// Moves every corner toward the gravity center by the factor `1 - alpha`.
pub fn shrink_quad(q: &QuadBox, alpha: f64) -> Result<QuadBox> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "shrink ratio must be in [0, 1), got {alpha}"
        )));
    }
    if alpha == 0.0 {
        return Ok(*q);
    }
    let g = gravity_center(q);
    let k = 1.0 - alpha;
    q.map_corners(|c| g + (c - g) * k)
}

/// Perpendicular distances from a point to the four edge lines of a quad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeDistances {
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
}

impl EdgeDistances {
    pub fn as_array(&self) -> [f64; 4] {
        [self.left, self.right, self.top, self.bottom]
    }
}

fn line_distance(p: Point2D, a: Point2D, b: Point2D) -> f64 {
    orient(a, b, p).abs() / (b - a).norm()
}

/// Distances from an interior point to the infinite lines through the left
/// (bl→tl), right (tr→br), top (tl→tr) and bottom (br→bl) edges.
pub fn point_edge_distances(p: Point2D, q: &QuadBox) -> Result<EdgeDistances> {
    if !q.contains_strictly(p) {
        return Err(Error::ExteriorPoint { x: p.x, y: p.y });
    }
    let [tl, tr, br, bl] = q.corners;
    Ok(EdgeDistances {
        left: line_distance(p, bl, tl),
        right: line_distance(p, tr, br),
        top: line_distance(p, tl, tr),
        bottom: line_distance(p, br, bl),
    })
}

/// `sqrt(top * bottom / (left * right))` over Euclidean edge lengths.
pub fn aspect_ratio(q: &QuadBox) -> Result<f64> {
    let [tl, tr, br, bl] = q.corners;
    let top = tl.distance(tr);
    let bottom = br.distance(bl);
    let left = bl.distance(tl);
    let right = tr.distance(br);
    if [top, bottom, left, right].iter().any(|&l| l <= GEOM_EPS) {
        return Err(Error::DegeneratePolygon("quad has a zero-length edge".into()));
    }
    Ok(((top * bottom) / (left * right)).sqrt())
}

/// Interior angles in degrees, in corner order.
pub fn interior_angles(q: &QuadBox) -> Result<[f64; 4]> {
    if !q.is_convex() {
        return Err(Error::NonConvex);
    }
    let c = &q.corners;
    Ok(std::array::from_fn(|i| {
        let u = c[(i + 3) % 4] - c[i];
        let v = c[(i + 1) % 4] - c[i];
        u.cross(v).abs().atan2(u.dot(v)).to_degrees()
    }))
}

/// Population standard deviation of the four interior angles, in degrees.
pub fn interior_angle_std(q: &QuadBox) -> Result<f64> {
    let angles = interior_angles(q)?;
    // Angles of a convex quad sum to 360, so the mean is fixed.
    let mean = angles.iter().sum::<f64>() / 4.0;
    Ok((angles.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 4.0).sqrt())
}
