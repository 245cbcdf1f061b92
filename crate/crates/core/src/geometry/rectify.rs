//! Perspective rectification of quad crops into upright rectangles.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use super::{orient, Point2D, QuadBox, GEOM_EPS};
use crate::error::{Error, Result};

/// 3×3 projective transform, row-major, normalized so `m[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        m: [[1., 0., 0.], [0., 1., 0.], [0., 0., 1.]],
    };

    pub fn from_rows(m: [[f64; 3]; 3]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_fn(|r, c| m[r][c]))
    }

    fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem("non-finite homography entry".into()));
        }
        if m.determinant().abs() <= f64::EPSILON * m.norm().powi(3) {
            return Err(Error::SingularSystem("homography is not invertible".into()));
        }
        let scale = m[(2, 2)];
        if scale.abs() <= GEOM_EPS {
            return Err(Error::SingularSystem("cannot normalize homography with h33 = 0".into()));
        }
        let m = m / scale;
        Ok(Homography {
            m: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
        })
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        self.m
    }

    fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.m[r][c])
    }

    pub fn apply(&self, p: Point2D) -> Point2D {
        let m = &self.m;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        Point2D::new(
            (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
        )
    }

    pub fn inverse(&self) -> Result<Homography> {
        let inv = self
            .matrix()
            .try_inverse()
            .ok_or_else(|| Error::SingularSystem("homography is not invertible".into()))?;
        Self::from_matrix(inv)
    }
}

/// Similarity that moves the points' centroid to the origin and their mean
/// distance to sqrt(2). Conditions the 8×8 system for large pixel coordinates.
fn conditioning(points: &[Point2D; 4]) -> Matrix3<f64> {
    let c = points.iter().fold(Point2D::default(), |a, &p| a + p) * 0.25;
    let mean_dist = points.iter().map(|&p| p.distance(c)).sum::<f64>() / 4.0;
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

fn transform(t: &Matrix3<f64>, p: Point2D) -> Point2D {
    let v = t * Vector3::new(p.x, p.y, 1.0);
    Point2D::new(v.x / v.z, v.y / v.z)
}

/// Solves the 4-point correspondence `src[i] -> dst[i]`.
fn four_point(src: &[Point2D; 4], dst: &[Point2D; 4]) -> Result<Homography> {
    let ts = conditioning(src);
    let td = conditioning(dst);
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let s = transform(&ts, src[i]);
        let d = transform(&td, dst[i]);
        let (r0, r1) = (2 * i, 2 * i + 1);
        a.set_row(r0, &SMatrix::<f64, 1, 8>::from_row_slice(&[s.x, s.y, 1.0, 0.0, 0.0, 0.0, -d.x * s.x, -d.x * s.y]));
        a.set_row(r1, &SMatrix::<f64, 1, 8>::from_row_slice(&[0.0, 0.0, 0.0, s.x, s.y, 1.0, -d.y * s.x, -d.y * s.y]));
        b[r0] = d.x;
        b[r1] = d.y;
    }
    let h = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::SingularSystem("corner correspondences are degenerate".into()))?;
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
    let td_inv = td
        .try_inverse()
        .ok_or_else(|| Error::SingularSystem("degenerate target rectangle".into()))?;
    Homography::from_matrix(td_inv * hn * ts)
}

/// Perspective transform taking `tl, tr, br, bl` to the corners of an
/// `out_w × out_h` rectangle anchored at the origin.
pub fn rectify_homography(q: &QuadBox, out_w: f64, out_h: f64) -> Result<Homography> {
    if !(out_w > 0.0 && out_h > 0.0 && out_w.is_finite() && out_h.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "output size must be positive, got {out_w}×{out_h}"
        )));
    }
    let c = q.corners();
    for skip in 0..4 {
        let tri: Vec<Point2D> = (0..4).filter(|&i| i != skip).map(|i| c[i]).collect();
        if orient(tri[0], tri[1], tri[2]).abs() <= GEOM_EPS {
            return Err(Error::SingularSystem(format!(
                "three corners are collinear (all but corner {skip})"
            )));
        }
    }
    let dst = [
        Point2D::new(0.0, 0.0),
        Point2D::new(out_w, 0.0),
        Point2D::new(out_w, out_h),
        Point2D::new(0.0, out_h),
    ];
    four_point(c, &dst)
}

/// Tightly packed row-major RGB8 buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| Error::Format("image dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(Error::Format(format!(
                "RGB buffer for {width}×{height} needs {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(RgbImage { width, height, data })
    }

    pub fn black(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn sample_bilinear(&self, p: Point2D) -> [u8; 3] {
        const TOL: f64 = 1e-9;
        let (w, h) = (self.width as f64, self.height as f64);
        if self.width == 0
            || self.height == 0
            || !p.is_finite()
            || p.x < -TOL
            || p.y < -TOL
            || p.x > w - 1.0 + TOL
            || p.y > h - 1.0 + TOL
        {
            return [0; 3];
        }
        let x0 = (p.x.floor().max(0.0) as usize).min(self.width - 1);
        let y0 = (p.y.floor().max(0.0) as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = (p.x - x0 as f64).clamp(0.0, 1.0);
        let fy = (p.y - y0 as f64).clamp(0.0, 1.0);
        let (p00, p10, p01, p11) = (self.pixel(x0, y0), self.pixel(x1, y0), self.pixel(x0, y1), self.pixel(x1, y1));
        std::array::from_fn(|c| {
            let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
            let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
            (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8
        })
    }
}

/// Resamples `src` through `h` (which maps source to output coordinates).
/// Each output pixel is pulled back with the inverse transform and sampled
/// bilinearly; samples falling outside the source are black.
pub fn warp_image(src: &RgbImage, h: &Homography, out_w: usize, out_h: usize) -> Result<RgbImage> {
    let inv = h.inverse()?;
    let mut out = RgbImage::black(out_w, out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            let s = inv.apply(Point2D::new(x as f64, y as f64));
            let px = src.sample_bilinear(s);
            let i = (y * out_w + x) * 3;
            out.data[i..i + 3].copy_from_slice(&px);
        }
    }
    Ok(out)
}
