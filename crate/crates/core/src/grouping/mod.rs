//! Stage-1 class grouping: the static articulation table and the dynamic
//! elbow → k-means → Ward pipeline over class feature centroids.

mod elbow;
mod kmeans;
mod table;
mod ward;

pub use elbow::{elbow_select_k, max_chord_distance, ElbowCurve};
pub use kmeans::{kmeans, ClusteringResult, KMeansOptions};
pub use table::{letter_of, StaticGroupTable, ARABIC_LETTERS, ARTICULATION_GROUPS};
pub use ward::{agglomerate, Dendrogram, Merge};

use std::collections::BTreeMap;
use std::fmt;
use std::ops::RangeInclusive;

use crate::dataset::{Category, DatasetManifest};
use crate::error::{Error, Result};
use crate::features::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Static,
    Dynamic,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Static => "static",
            Provenance::Dynamic => "dynamic",
        })
    }
}

/// Assignment of every class label to one of `G` groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupMap {
    pub group_names: Vec<String>,
    pub assignment: BTreeMap<String, usize>,
    pub provenance: Provenance,
}

impl GroupMap {
    /// Builds a map, renumbering groups densely in order of first use so
    /// that indices cover `0..G`.
    pub fn new(group_names: Vec<String>, assignment: BTreeMap<String, usize>, provenance: Provenance) -> Self {
        let mut used: Vec<usize> = assignment.values().copied().collect();
        used.sort_unstable();
        used.dedup();
        let remap: BTreeMap<usize, usize> = used.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let names = used.iter().map(|&g| group_names.get(g).cloned().unwrap_or_else(|| format!("group{g}"))).collect();
        let assignment = assignment.into_iter().map(|(l, g)| (l, remap[&g])).collect();
        Self { group_names: names, assignment, provenance }
    }

    pub fn n_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn group_of(&self, label: &str) -> Option<usize> {
        self.assignment.get(label).copied()
    }

    /// Labels of group `g` in lexicographic order.
    pub fn classes_in(&self, g: usize) -> Vec<String> {
        self.assignment.iter().filter(|(_, &v)| v == g).map(|(l, _)| l.clone()).collect()
    }

    /// Checks that every class of `m` has exactly one group.
    pub fn covers(&self, m: &DatasetManifest) -> Result<()> {
        match m.class_index.keys().find(|l| !self.assignment.contains_key(*l)) {
            Some(missing) => Err(Error::UnknownLabel(missing.clone())),
            None => Ok(()),
        }
    }

    /// CSV with header `label,group_index,group_name,provenance`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["label", "group_index", "group_name", "provenance"]).expect("in-memory write");
        let prov = self.provenance.to_string();
        for (label, &g) in &self.assignment {
            w.write_record([label.as_str(), &g.to_string(), &self.group_names[g], &prov]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::Format { kind: "group map", reason };
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut names: BTreeMap<usize, String> = BTreeMap::new();
        let mut assignment = BTreeMap::new();
        let mut provenance = Provenance::Static;
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() < 4 {
                return Err(bad("expected 4 columns".into()));
            }
            let g: usize = rec[1].parse().map_err(|_| bad(format!("bad group index `{}`", &rec[1])))?;
            names.insert(g, rec[2].to_string());
            provenance = match &rec[3] {
                "static" => Provenance::Static,
                "dynamic" => Provenance::Dynamic,
                other => return Err(bad(format!("unknown provenance `{other}`"))),
            };
            assignment.insert(rec[0].to_string(), g);
        }
        let dense = names.keys().copied().eq(0..names.len());
        if !dense {
            return Err(bad("group indices are not dense".into()));
        }
        Ok(Self { group_names: names.into_values().collect(), assignment, provenance })
    }
}

/// Groups the alphabet classes of `m` by the articulation group of their
/// letter. Group indices follow the table's group order.
pub fn static_group_map(m: &DatasetManifest, table: &StaticGroupTable) -> Result<GroupMap> {
    let mut assignment = BTreeMap::new();
    for label in m.category(Category::Alphabet).class_index.keys() {
        let group = letter_of(label)
            .and_then(|c| table.group_of_letter(c))
            .ok_or_else(|| Error::UnknownLetter(label.clone()))?;
        let g = table.group_names.iter().position(|n| n == group).expect("table names its own groups");
        assignment.insert(label.clone(), g);
    }
    Ok(GroupMap::new(table.group_names.clone(), assignment, Provenance::Static))
}

/// Per-dimension z-scoring statistics.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics over `rows`; zero-variance dimensions get a
    /// unit scale.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Self {
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        for r in &rows {
            n += 1;
            sum.iter_mut().zip(*r).for_each(|(s, v)| *s += v);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n.max(1) as f64).collect();
        for r in &rows {
            sq.iter_mut().zip(r.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m).powi(2));
        }
        let std = sq.iter().map(|s| (s / n.max(1) as f64).sqrt()).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
        Self { mean, std }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(self.mean.iter().zip(&self.std)).map(|(x, (m, s))| (x - m) / s).collect()
    }
}

/// Standardizes every vector over all samples, then averages per class.
/// Returns labels in lexicographic order with their centroids.
pub fn class_centroids(features: &BTreeMap<String, Vec<FeatureVector>>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let dim = features.values().flatten().map(|v| v.len()).next().unwrap_or(0);
    for (label, vecs) in features {
        if vecs.is_empty() {
            return Err(Error::EmptyClass(label.clone()));
        }
        if let Some(bad) = vecs.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
        }
    }
    let z = Standardizer::fit(features.values().flatten().map(|v| v.values.as_slice()), dim);
    let mut labels = Vec::with_capacity(features.len());
    let mut centroids = Vec::with_capacity(features.len());
    for (label, vecs) in features {
        let mut c = vec![0.0; dim];
        for v in vecs {
            c.iter_mut().zip(z.apply(&v.values)).for_each(|(a, b)| *a += b);
        }
        c.iter_mut().for_each(|a| *a /= vecs.len() as f64);
        labels.push(label.clone());
        centroids.push(c);
    }
    Ok((labels, centroids))
}

/// Side artifacts of dynamic grouping.
#[derive(Debug, Clone)]
pub struct DynamicGrouping {
    pub group_map: GroupMap,
    pub elbow: ElbowCurve,
    pub clustering: ClusteringResult,
    pub dendrogram: Option<Dendrogram>,
}

/// Class centroids → elbow-selected k → k-means → group map, plus the
/// Ward dendrogram of the k cluster centroids.
pub fn dynamic_group_map(
    m: &DatasetManifest,
    features: &BTreeMap<String, Vec<FeatureVector>>,
    k_range: RangeInclusive<usize>,
    seed: u64,
) -> Result<DynamicGrouping> {
    if let Some(missing) = m.class_index.keys().find(|l| !features.contains_key(*l)) {
        return Err(Error::EmptyClass(missing.clone()));
    }
    let relevant: BTreeMap<String, Vec<FeatureVector>> =
        features.iter().filter(|(l, _)| m.class_index.contains_key(*l)).map(|(l, v)| (l.clone(), v.clone())).collect();
    let (labels, centroids) = class_centroids(&relevant)?;
    let hi = (*k_range.end()).min(labels.len());
    let lo = (*k_range.start()).min(hi);
    let (elbow, mut runs) = elbow_select_k(&centroids, lo..=hi, seed)?;
    let clustering = runs.swap_remove(elbow.chosen_k - lo);

    // canonical cluster numbering: order of first appearance over labels
    let mut order: Vec<usize> = Vec::new();
    for &a in &clustering.assignment {
        if !order.contains(&a) {
            order.push(a);
        }
    }
    let assignment: BTreeMap<String, usize> = labels
        .iter()
        .zip(&clustering.assignment)
        .map(|(l, a)| (l.clone(), order.iter().position(|o| o == a).expect("seen above")))
        .collect();
    let names = (0..order.len()).map(|i| format!("cluster{i}")).collect();
    let used_centroids: Vec<Vec<f64>> = order.iter().map(|&o| clustering.centroids[o].clone()).collect();
    let dendrogram = if used_centroids.len() >= 2 { Some(agglomerate(&used_centroids)?) } else { None };
    Ok(DynamicGrouping {
        group_map: GroupMap::new(names, assignment, Provenance::Dynamic),
        elbow,
        clustering,
        dendrogram,
    })
}
