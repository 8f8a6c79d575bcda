//! Agglomerative clustering with Ward linkage (Lance–Williams update).

use super::kmeans::sq_dist;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    /// Leaves are `0..L`; the i-th merge creates node `L + i`.
    pub node: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Merge list as tab-separated text with a header row.
    pub fn to_text(&self) -> String {
        let mut out = String::from("node\tleft\tright\theight\tsize\n");
        for m in &self.merges {
            out.push_str(&format!("{}\t{}\t{}\t{:.6}\t{}\n", m.node, m.left, m.right, m.height, m.size));
        }
        out
    }
}

/// Ward-linkage dendrogram over Euclidean distances. Ties merge the pair
/// with the lowest indices first.
pub fn agglomerate(points: &[Vec<f64>]) -> Result<Dendrogram> {
    let n = points.len();
    if n < 2 {
        return Err(Error::TooFewPoints(n));
    }
    // squared Ward distances between active clusters
    let mut d2 = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = sq_dist(&points[i], &points[j]);
            d2[i][j] = d;
            d2[j][i] = d;
        }
    }
    let mut active: Vec<bool> = vec![true; n];
    let mut size = vec![1usize; n];
    let mut node_id: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if active[j] && d2[i][j] < best.2 {
                    best = (i, j, d2[i][j]);
                }
            }
        }
        let (i, j, dij) = best;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let nk = size[k] as f64;
            let updated = ((ni + nk) * d2[i][k] + (nj + nk) * d2[j][k] - nk * dij) / (ni + nj + nk);
            d2[i][k] = updated;
            d2[k][i] = updated;
        }
        let (left, right) = (node_id[i].min(node_id[j]), node_id[i].max(node_id[j]));
        size[i] += size[j];
        active[j] = false;
        node_id[i] = n + step;
        merges.push(Merge { left, right, height: dij.max(0.0).sqrt(), node: n + step, size: size[i] });
    }
    Ok(Dendrogram { leaves: n, merges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closest_pair_merges_first() {
        let pts = vec![vec![0.0, 0.0], vec![100.0, 0.0], vec![1.0, 0.0]];
        let d = agglomerate(&pts).unwrap();
        assert_eq!(d.merges.len(), 2);
        assert_eq!((d.merges[0].left, d.merges[0].right), (0, 2));
        assert!((d.merges[0].height - 1.0).abs() < 1e-12);
        assert_eq!(d.merges[1].size, 3);
    }

    #[test]
    fn needs_two_points() {
        assert!(matches!(agglomerate(&[vec![1.0]]), Err(Error::TooFewPoints(1))));
    }

    #[test]
    fn text_has_one_row_per_merge() {
        let d = agglomerate(&[vec![0.0], vec![1.0], vec![5.0]]).unwrap();
        assert_eq!(d.to_text().lines().count(), 3);
    }

    proptest! {
        #[test]
        fn heights_are_monotone(pts in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 3), 2..25)) {
            let d = agglomerate(&pts).unwrap();
            prop_assert_eq!(d.merges.len(), pts.len() - 1);
            for w in d.merges.windows(2) {
                prop_assert!(w[1].height >= w[0].height - 1e-9);
            }
        }
    }
}
