//! Seeded input generators shared by the benchmarks.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unitail_core::{DetectionRecord, FeatureSequence, GroundTruthRecord, QuadBox, WordFeature};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A jittered, rotated rectangle, which is always a valid convex quad.
pub fn random_quad(rng: &mut impl Rng, extent: f64) -> QuadBox {
    let (cx, cy) = (rng.random_range(0.2..0.8) * extent, rng.random_range(0.2..0.8) * extent);
    let (hw, hh) = (rng.random_range(0.02..0.15) * extent, rng.random_range(0.02..0.15) * extent);
    let theta: f64 = rng.random_range(-0.6..0.6);
    let (s, c) = theta.sin_cos();
    let corners = [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)];
    let mut flat = [0.0; 8];
    for (i, (dx, dy)) in corners.into_iter().enumerate() {
        let (jx, jy) = (rng.random_range(-0.1..0.1) * hw, rng.random_range(-0.1..0.1) * hh);
        flat[2 * i] = cx + c * (dx + jx) - s * (dy + jy);
        flat[2 * i + 1] = cy + s * (dx + jx) + c * (dy + jy);
    }
    QuadBox::from_flat(&flat).expect("rotated rectangles are convex")
}

pub fn quad_pairs(seed: u64, n: usize) -> Vec<(QuadBox, QuadBox)> {
    let mut r = rng(seed);
    (0..n).map(|_| (random_quad(&mut r, 100.0), random_quad(&mut r, 100.0))).collect()
}

pub fn cost_matrix(seed: u64, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..rows).map(|_| (0..cols).map(|_| r.random_range(0.0..1.0)).collect()).collect()
}

pub fn sequence(seed: u64, len: usize, d: usize) -> FeatureSequence {
    let mut r = rng(seed);
    let items = (0..len)
        .map(|_| WordFeature {
            vector: (0..d).map(|_| r.random_range(-1.0..1.0)).collect(),
            center: (r.random_range(0.0..1.0), r.random_range(0.0..1.0)),
        })
        .collect();
    FeatureSequence::new(items).expect("equal dimensions")
}

/// Ground truths on `images` shelves plus noisy, scored copies as detections.
pub fn detection_set(seed: u64, images: usize, per_image: usize) -> (Vec<GroundTruthRecord>, Vec<DetectionRecord>) {
    let mut r = rng(seed);
    let (mut gts, mut dets) = (Vec::new(), Vec::new());
    for im in 0..images {
        for _ in 0..per_image {
            let q = random_quad(&mut r, 1000.0);
            let shift: Vec<f64> = q.to_flat().iter().map(|v| v + r.random_range(-3.0..3.0)).collect();
            gts.push(GroundTruthRecord { image_id: im.to_string(), quad: q, ignore: false });
            if let Ok(d) = QuadBox::from_flat(&shift) {
                dets.push(DetectionRecord { image_id: im.to_string(), quad: d, score: r.random_range(0.0..1.0) });
            }
            let fp = random_quad(&mut r, 1000.0);
            dets.push(DetectionRecord { image_id: im.to_string(), quad: fp, score: r.random_range(0.0..0.5) });
        }
    }
    (gts, dets)
}
