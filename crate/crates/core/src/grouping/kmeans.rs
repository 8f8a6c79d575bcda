//! K-means with k-means++ seeding and best-of-restarts selection.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub k: usize,
    /// `k` centroids of dimension `D`.
    pub centroids: Vec<Vec<f64>>,
    /// Cluster of every input point.
    pub assignment: Vec<usize>,
    pub wcss: f64,
    /// WCSS after every Lloyd update of the returned run.
    pub wcss_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self { restarts: 10, max_iter: 300 }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_seeds(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], k: usize, max_iter: usize, rng: &mut impl Rng) -> ClusteringResult {
    let dim = points[0].len();
    let mut centroids = plus_plus_seeds(points, k, rng);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut trace = Vec::new();
    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // re-seed at the point farthest from its own centroid
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centroids[assignment[a]]).total_cmp(&sq_dist(&points[b], &centroids[assignment[b]]))
                    })
                    .expect("non-empty input");
                centroids[j] = points[far].clone();
                counts[assignment[far]] -= 1;
                assignment[far] = j;
                counts[j] = 1;
            }
        }
        let wcss: f64 = points.iter().zip(&assignment).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
        trace.push(wcss);
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    let wcss = points.iter().zip(&assignment).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
    ClusteringResult { k, centroids, assignment, wcss, wcss_trace: trace }
}

/// Runs `restarts` seeded Lloyd runs and keeps the lowest-WCSS result.
/// Each run draws from its own stream derived from `(seed, run)`.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, opts: KMeansOptions) -> Result<ClusteringResult> {
    if k == 0 || k > points.len() {
        return Err(Error::KOutOfRange { k, n: points.len() });
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }
    let runs: Vec<ClusteringResult> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|run| lloyd(points, k, opts.max_iter, &mut rng::stream(seed, &[k as u64, run as u64])))
        .collect();
    Ok(runs
        .into_iter()
        .reduce(|best, r| if r.wcss < best.wcss { r } else { best })
        .expect("at least one run"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn blobs(centres: &[Vec<f64>], per: usize, sigma: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = rng::stream(seed, &[]);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (label, c) in centres.iter().enumerate() {
            for _ in 0..per {
                points.push(c.iter().map(|v| v + noise.sample(&mut rng)).collect());
                labels.push(label);
            }
        }
        (points, labels)
    }

    #[test]
    fn k_equals_n_has_zero_wcss() {
        let points: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let r = kmeans(&points, 6, 1, KMeansOptions::default()).unwrap();
        assert_eq!(r.wcss, 0.0);
        let mut a = r.assignment.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn k_one_gives_the_global_mean() {
        let points = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 8.0]];
        let r = kmeans(&points, 1, 1, KMeansOptions::default()).unwrap();
        assert!((r.centroids[0][0] - 2.0).abs() < 1e-12 && (r.centroids[0][1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn k_out_of_range() {
        let points = vec![vec![0.0]; 3];
        assert!(matches!(kmeans(&points, 0, 0, KMeansOptions::default()), Err(Error::KOutOfRange { .. })));
        assert!(matches!(kmeans(&points, 4, 0, KMeansOptions::default()), Err(Error::KOutOfRange { .. })));
    }

    #[test]
    fn wcss_never_increases_between_updates() {
        let (points, _) = blobs(&[vec![0.0, 0.0], vec![3.0, 1.0], vec![1.0, 4.0]], 40, 1.5, 9);
        for seed in 0..10 {
            let r = kmeans(&points, 4, seed, KMeansOptions { restarts: 1, max_iter: 300 }).unwrap();
            for w in r.wcss_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{:?}", r.wcss_trace);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (points, _) = blobs(&[vec![0.0], vec![5.0]], 20, 1.0, 3);
        let a = kmeans(&points, 3, 42, KMeansOptions::default()).unwrap();
        let b = kmeans(&points, 3, 42, KMeansOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
