//! Automatic elbow selection on the WCSS-versus-k curve.

use std::ops::RangeInclusive;

use super::kmeans::{kmeans, ClusteringResult, KMeansOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ElbowCurve {
    /// `(k, wcss)` for every k tried, ascending in k.
    pub points: Vec<(usize, f64)>,
    pub chosen_k: usize,
}

impl ElbowCurve {
    /// `(k, wcss)` table as tab-separated text with a header row.
    pub fn to_text(&self) -> String {
        let mut out = String::from("k\twcss\tchosen\n");
        for &(k, w) in &self.points {
            out.push_str(&format!("{k}\t{w:.6}\t{}\n", u8::from(k == self.chosen_k)));
        }
        out
    }
}

/// Index of the curve point farthest from the chord joining its endpoints,
/// both axes min-max normalized. Ties go to the smaller k.
pub fn max_chord_distance(points: &[(usize, f64)]) -> usize {
    if points.len() <= 2 {
        return 0;
    }
    let (k0, k1) = (points[0].0 as f64, points[points.len() - 1].0 as f64);
    let wmin = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let wmax = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let span = if wmax > wmin { wmax - wmin } else { 1.0 };
    let norm = |&(k, w): &(usize, f64)| ((k as f64 - k0) / (k1 - k0), (w - wmin) / span);
    let (ax, ay) = norm(&points[0]);
    let (bx, by) = norm(&points[points.len() - 1]);
    let (dx, dy) = (bx - ax, by - ay);
    let len = (dx * dx + dy * dy).sqrt();
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in points.iter().enumerate() {
        let (x, y) = norm(p);
        let dist = ((x - ax) * dy - (y - ay) * dx).abs() / len;
        if dist > best.1 + 1e-12 {
            best = (i, dist);
        }
    }
    best.0
}

/// Runs k-means for every k in `k_range` and picks the elbow.
pub fn elbow_select_k(
    points: &[Vec<f64>],
    k_range: RangeInclusive<usize>,
    seed: u64,
) -> Result<(ElbowCurve, Vec<ClusteringResult>)> {
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo == 0 || hi > points.len() || lo > hi {
        return Err(Error::KOutOfRange { k: if lo == 0 { 0 } else { hi }, n: points.len() });
    }
    let runs: Vec<ClusteringResult> =
        k_range.map(|k| kmeans(points, k, seed, KMeansOptions::default())).collect::<Result<_>>()?;
    let curve: Vec<(usize, f64)> = runs.iter().map(|r| (r.k, r.wcss)).collect();
    let chosen_k = curve[max_chord_distance(&curve)].0;
    Ok((ElbowCurve { points: curve, chosen_k }, runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obvious_knee() {
        let pts = [(1, 100.0), (2, 40.0), (3, 10.0), (4, 9.0), (5, 8.0), (6, 7.0)];
        assert_eq!(pts[max_chord_distance(&pts)].0, 3);
    }

    #[test]
    fn range_is_validated() {
        let pts = vec![vec![0.0]; 4];
        assert!(elbow_select_k(&pts, 0..=3, 0).is_err());
        assert!(elbow_select_k(&pts, 2..=5, 0).is_err());
    }
}
