//! Seeded k-means over real vectors (k-means++ seeding, Lloyd iterations),
//! used to build scaffold folds from fingerprint bit vectors.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("k must be at least 1, got {0}")]
    BadK(usize),
    #[error("cannot form {k} clusters from {points} points")]
    TooFewPoints { k: usize, points: usize },
    #[error("point {0} has dimension {got}, expected {expected}", got = .1, expected = .2)]
    DimMismatch(usize, usize, usize),
}

/// Lloyd iteration limits: at most `max_iterations` rounds, stopping early
/// once no centroid moves more than `tolerance` (Euclidean).
#[derive(Debug, Clone, Copy)]
pub struct KMeansConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { max_iterations: 100, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct KMeans {
    /// Cluster index per input point.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded k-means++ then Lloyd iterations. Points that tie between
/// centroids go to the lowest cluster index. An empty cluster is reseeded
/// to the point farthest from its current centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, config: &KMeansConfig) -> Result<KMeans, ClusterError> {
    if k == 0 {
        return Err(ClusterError::BadK(k));
    }
    if points.len() < k {
        return Err(ClusterError::TooFewPoints { k, points: points.len() });
    }
    let dim = points[0].len();
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(ClusterError::DimMismatch(i, p.len(), dim));
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    // k-means++ seeding: first centroid uniform, then proportional to the
    // squared distance to the nearest chosen centroid.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].clone());
    let mut nearest_sq: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest_sq.iter().sum();
        let next = if total <= 0.0 {
            // all remaining points coincide with a centroid; pick uniformly
            rng.gen_range(0..points.len())
        } else {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in nearest_sq.iter().enumerate() {
                u -= d;
                if u <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, centroids.last().unwrap());
            if d < nearest_sq[i] {
                nearest_sq[i] = d;
            }
        }
    }

    let mut assignments = vec![0usize; points.len()];
    for _ in 0..config.max_iterations {
        // assignment step
        for (i, p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(p, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assignments[i] = best;
        }
        // update step
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignments[i]] += 1;
            for (s, &v) in sums[assignments[i]].iter_mut().zip(p) {
                *s += v;
            }
        }
        // reseed empty clusters to the point farthest from its own centroid
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let farthest = (0..points.len())
                .max_by(|&a, &b| {
                    let da = sq_dist(&points[a], &centroids[assignments[a]]);
                    let db = sq_dist(&points[b], &centroids[assignments[b]]);
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            sums[c] = points[farthest].clone();
            counts[c] = 1;
        }
        let mut max_shift_sq: f64 = 0.0;
        for c in 0..k {
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            max_shift_sq = max_shift_sq.max(sq_dist(&new, &centroids[c]));
            centroids[c] = new;
        }
        if libm::sqrt(max_shift_sq) < config.tolerance {
            break;
        }
    }
    // final assignment against the converged centroids
    for (i, p) in points.iter().enumerate() {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in centroids.iter().enumerate() {
            let d = sq_dist(p, centroid);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        assignments[i] = best;
    }
    Ok(KMeans { assignments, centroids })
}
