//! Color/light fingerprints: K-means over HSL pixels.
//!
//! Pixels are `[hue, saturation, lightness]`, every component in `[0, 1]`
//! (hue is a fraction of a full turn). Distances are plain Euclidean in that
//! cube; hue wrap-around is not modelled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Hsl = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorCluster {
    pub centroid: Hsl,
    pub size: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorLightFingerprint {
    pub clusters: Vec<ColorCluster>,
    pub total_pixels: u32,
}

impl ColorLightFingerprint {
    pub fn is_empty(&self) -> bool {
        self.total_pixels == 0 || self.clusters.is_empty()
    }
}

pub fn validate_pixel(p: &Hsl) -> Result<()> {
    if p.iter().all(|c| (0.0..=1.0).contains(c)) {
        Ok(())
    } else {
        Err(Error::invalid(format!("HSL pixel {p:?} outside the unit cube")))
    }
}

fn dist_sq(a: &Hsl, b: &Hsl) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Hsl>,
    pub assignments: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Sum of squared distances after each assignment step.
    pub objective_trace: Vec<f64>,
}

/// Lloyd's algorithm with k-means++ seeding from a ChaCha stream.
pub fn kmeans(points: &[Hsl], k: usize, seed: u64, max_iter: usize) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if points.len() < k {
        return Err(Error::TooFewPixels { k, got: points.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(points, k, &mut rng);
    let mut assignments = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();

    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        let mut objective = 0.0;
        for (p, a) in points.iter().zip(assignments.iter_mut()) {
            // Stay put on ties so the objective cannot creep upwards.
            let (mut best, mut best_d) = match *a {
                usize::MAX => (0, dist_sq(p, &centroids[0])),
                cur => (cur, dist_sq(p, &centroids[cur])),
            };
            for (j, c) in centroids.iter().enumerate() {
                let d = dist_sq(p, c);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            if *a != best {
                *a = best;
                changed = true;
            }
            objective += best_d;
        }
        trace.push(objective);
        if !changed {
            break;
        }
        let mut sums = vec![[0.0; 3]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for i in 0..3 {
                sums[a][i] += p[i];
            }
        }
        for j in 0..k {
            // Empty clusters keep their previous centroid.
            if counts[j] > 0 {
                let n = counts[j] as f64;
                centroids[j] = [sums[j][0] / n, sums[j][1] / n, sums[j][2] / n];
            }
        }
    }
    let mut sizes = vec![0; k];
    for &a in &assignments {
        sizes[a] += 1;
    }
    Ok(KMeans {
        centroids,
        assignments,
        sizes,
        objective_trace: trace,
    })
}

fn seed_plus_plus(points: &[Hsl], k: usize, rng: &mut ChaCha8Rng) -> Vec<Hsl> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist_sq(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            centroids.len() % points.len()
        };
        let c = points[idx];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist_sq(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Clusters the pixels into at most `k` color clusters; clusters left empty
/// by K-means are dropped.
pub fn build_color_fingerprint(pixels: &[Hsl], k: usize, seed: u64, max_iter: usize) -> Result<ColorLightFingerprint> {
    for p in pixels {
        validate_pixel(p)?;
    }
    let km = kmeans(pixels, k, seed, max_iter)?;
    let clusters = km
        .centroids
        .iter()
        .zip(&km.sizes)
        .filter(|(_, &s)| s > 0)
        .map(|(c, &s)| ColorCluster {
            centroid: *c,
            size: s as u32,
        })
        .collect();
    Ok(ColorLightFingerprint {
        clusters,
        total_pixels: pixels.len() as u32,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_pixels_one_cluster() {
        let fp = build_color_fingerprint(&[[0.2, 0.4, 0.6]; 10], 1, 1, 50).unwrap();
        assert_eq!(fp.clusters.len(), 1);
        assert_eq!(fp.clusters[0].size, 10);
        for (c, e) in fp.clusters[0].centroid.iter().zip([0.2, 0.4, 0.6]) {
            assert!((c - e).abs() < 1e-12);
        }
    }

    #[test]
    fn separated_groups() {
        let p = [0.1, 0.1, 0.1];
        let q = [0.9, 0.8, 0.9];
        let mut px = vec![p; 5];
        px.extend([q; 5]);
        for seed in 0..20 {
            let mut fp = build_color_fingerprint(&px, 2, seed, 50).unwrap();
            fp.clusters.sort_by(|a, b| a.centroid[0].total_cmp(&b.centroid[0]));
            assert_eq!(fp.clusters[0].centroid, p);
            assert_eq!(fp.clusters[1].centroid, q);
            assert_eq!((fp.clusters[0].size, fp.clusters[1].size), (5, 5));
        }
    }

    #[test]
    fn too_few_pixels() {
        assert!(matches!(
            build_color_fingerprint(&[[0.5; 3]], 2, 0, 10),
            Err(Error::TooFewPixels { k: 2, got: 1 })
        ));
        assert!(build_color_fingerprint(&[[1.5, 0.0, 0.0]], 1, 0, 10).is_err());
    }

    #[test]
    fn sizes_sum_to_total() {
        let px: Vec<Hsl> = (0..40)
            .map(|i| [(i % 7) as f64 / 7.0, (i % 3) as f64 / 3.0, (i % 5) as f64 / 5.0])
            .collect();
        let fp = build_color_fingerprint(&px, 4, 9, 100).unwrap();
        assert_eq!(fp.clusters.iter().map(|c| c.size).sum::<u32>(), fp.total_pixels);
    }
}
