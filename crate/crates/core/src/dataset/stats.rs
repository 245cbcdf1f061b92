use std::collections::HashMap;

use serde::Serialize;

use super::DetDataset;
use crate::geometry::{aspect_ratio, interior_angle_std};

/// Fixed-edge histogram; values outside the range land in the end bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn with_edges(edges: Vec<f64>) -> Self {
        assert!(edges.len() >= 2, "histogram needs at least one bin");
        let counts = vec![0; edges.len() - 1];
        Self { edges, counts }
    }

    pub fn linear(lo: f64, hi: f64, width: f64) -> Self {
        let n = ((hi - lo) / width).round() as usize;
        Self::with_edges((0..=n).map(|i| lo + width * i as f64).collect())
    }

    pub fn log_spaced(lo: f64, hi: f64, bins: usize) -> Self {
        let (a, b) = (lo.ln(), hi.ln());
        Self::with_edges((0..=bins).map(|i| (a + (b - a) * i as f64 / bins as f64).exp()).collect())
    }

    pub fn add(&mut self, x: f64) {
        // first edge strictly greater than x closes the bin
        let k = self.edges.partition_point(|&e| e <= x);
        let bin = k.saturating_sub(1).min(self.counts.len() - 1);
        self.counts[bin] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub num_images: usize,
    pub num_instances: usize,
    /// Instances per image, bins of 25 over [0, 800].
    pub density: Histogram,
    pub density_mean: f64,
    pub density_std: f64,
    /// `sqrt(area)` with power-of-two edges from 16 to 2048.
    pub scale: Histogram,
    /// 20 log-spaced bins over [0.05, 38].
    pub aspect: Histogram,
    /// Mean interior-angle standard deviation over convex quads.
    pub mean_angle_std: f64,
    /// Quads left out of the angle statistic because they are not convex.
    pub non_convex: usize,
}

/// Statistics over every annotated quad, including ignore-flagged ones.
pub fn compute_stats(ds: &DetDataset) -> DatasetStats {
    let mut per_image: HashMap<&str, usize> = ds.images.iter().map(|im| (im.id.as_str(), 0)).collect();
    let mut scale = Histogram::with_edges((4..=11).map(|e| f64::from(1u32 << e)).collect());
    let mut aspect = Histogram::log_spaced(0.05, 38.0, 20);
    let (mut angle_sum, mut convex, mut non_convex) = (0.0, 0usize, 0usize);

    for g in &ds.gts {
        *per_image.entry(g.image_id.as_str()).or_default() += 1;
        scale.add(g.quad.area().sqrt());
        // a valid quad always has non-zero edges except in float corner cases
        if let Ok(a) = aspect_ratio(&g.quad) {
            aspect.add(a);
        }
        match interior_angle_std(&g.quad) {
            Ok(s) => {
                angle_sum += s;
                convex += 1;
            }
            Err(_) => non_convex += 1,
        }
    }

    let mut density = Histogram::linear(0.0, 800.0, 25.0);
    // sorted so the floating-point sums do not depend on hash order
    let mut counts: Vec<usize> = per_image.values().copied().collect();
    counts.sort_unstable();
    for &c in &counts {
        density.add(c as f64);
    }
    let n = counts.len() as f64;
    let (density_mean, density_std) = if counts.is_empty() {
        (0.0, 0.0)
    } else {
        let mean = counts.iter().sum::<usize>() as f64 / n;
        let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };

    DatasetStats {
        num_images: counts.len(),
        num_instances: ds.gts.len(),
        density,
        density_mean,
        density_std,
        scale,
        aspect,
        mean_angle_std: if convex == 0 { 0.0 } else { angle_sum / convex as f64 },
        non_convex,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ImageInfo;
    use crate::detection_eval::GroundTruthRecord;
    use crate::geometry::QuadBox;

    fn dataset(per_image: &[usize], quad: QuadBox) -> DetDataset {
        let images = (0..per_image.len())
            .map(|i| ImageInfo {
                id: i.to_string(),
                width: 1000.0,
                height: 1000.0,
            })
            .collect();
        let gts = per_image
            .iter()
            .enumerate()
            .flat_map(|(i, &k)| {
                (0..k).map(move |_| GroundTruthRecord {
                    image_id: i.to_string(),
                    quad,
                    ignore: false,
                })
            })
            .collect();
        DetDataset {
            images,
            gts,
            ignore_regions: vec![],
            clamped: 0,
            auto_ignored: 0,
        }
    }

    #[test]
    fn histogram_binning() {
        let mut h = Histogram::linear(0.0, 100.0, 25.0);
        assert_eq!(h.edges, vec![0., 25., 50., 75., 100.]);
        for x in [-3.0, 0.0, 24.9, 25.0, 99.0, 100.0, 1e6] {
            h.add(x);
        }
        assert_eq!(h.counts, vec![3, 1, 0, 3]);
    }

    #[test]
    fn unit_squares_point_mass() {
        let s = compute_stats(&dataset(&[3, 2], QuadBox::axis_aligned(0., 0., 1., 1.).unwrap()));
        assert_eq!(s.aspect.total(), 5);
        let k = s.aspect.counts.iter().position(|&c| c == 5).unwrap();
        assert!(s.aspect.edges[k] <= 1.0 && 1.0 < s.aspect.edges[k + 1]);
        assert_eq!(s.mean_angle_std, 0.0);
        // sqrt(1) clamps into the first scale bin
        assert_eq!(s.scale.counts[0], 5);
    }

    #[test]
    fn density_mass_and_moments() {
        let q = QuadBox::axis_aligned(0., 0., 20., 10.).unwrap();
        let s = compute_stats(&dataset(&[60, 0, 60], q));
        assert_eq!(s.density.total(), 3);
        assert_eq!(s.density.counts[0], 1);
        assert_eq!(s.density.counts[2], 2);
        assert_eq!(s.density_mean, 40.0);
        assert!((s.density_std - (800.0f64).sqrt()).abs() < 1e-12);
        assert_eq!(s.num_instances, 120);
    }

    #[test]
    fn empty_dataset() {
        let s = compute_stats(&dataset(&[], QuadBox::axis_aligned(0., 0., 1., 1.).unwrap()));
        assert_eq!((s.num_images, s.density_mean, s.density.total()), (0, 0.0, 0));
    }
}
