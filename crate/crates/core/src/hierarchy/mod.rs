//! Two-stage classification: a group classifier routes each clip to a
//! per-group class classifier.

mod report;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::features::MfccMatrix;
use crate::grouping::GroupMap;
use crate::neural::{self, argmax, Classifier, Example, History, ModelConfig, TrainConfig};

pub use report::{EvalReport, GroupEval};

/// A clip's MFCC sequence with its class label.
pub type LabeledClip<'a> = (&'a MfccMatrix, &'a str);

/// Stage-1 group label of every manifest entry, in manifest order.
pub fn derive_group_labels(m: &DatasetManifest, g: &GroupMap) -> Result<Vec<usize>> {
    m.entries.iter().map(|e| g.group_of(&e.label).ok_or_else(|| Error::UnknownLabel(e.label.clone()))).collect()
}

/// Model configs for the second stage: one shared default, optionally
/// overridden per group name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfigs {
    pub default: ModelConfig,
    #[serde(default)]
    pub per_group: BTreeMap<String, ModelConfig>,
}

impl StageConfigs {
    pub fn shared(cfg: ModelConfig) -> Self {
        Self { default: cfg, per_group: BTreeMap::new() }
    }

    pub fn for_group(&self, name: &str) -> &ModelConfig {
        self.per_group.get(name).unwrap_or(&self.default)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyModel {
    pub group_map: GroupMap,
    pub stage1: Classifier,
    /// Only groups with two or more classes have an entry.
    pub stage2: BTreeMap<usize, Classifier>,
}

/// Training curves of every stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HierarchyHistory {
    pub stage1: History,
    pub stage2: BTreeMap<usize, History>,
}

/// Output of routed inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub group: usize,
    pub class: String,
    pub stage1: Vec<f64>,
    /// Over the routed group's classes in label order; `[1.0]` for a
    /// single-class group.
    pub stage2: Vec<f64>,
}

fn group_examples<'a>(set: &[LabeledClip<'a>], g: &GroupMap) -> Result<Vec<Example<'a>>> {
    set.iter().map(|&(m, l)| Ok((m, g.group_of(l).ok_or_else(|| Error::UnknownLabel(l.to_string()))?))).collect()
}

fn class_examples<'a>(set: &[LabeledClip<'a>], classes: &[String]) -> Vec<Example<'a>> {
    set.iter().filter_map(|&(m, l)| classes.iter().position(|c| c == l).map(|i| (m, i))).collect()
}

fn check_coverage(train: &[LabeledClip], g: &GroupMap) -> Result<()> {
    for gi in 0..g.n_groups() {
        for class in g.classes_in(gi) {
            if !train.iter().any(|(_, l)| *l == class) {
                return Err(Error::MissingClass { group: g.group_names[gi].clone(), class });
            }
        }
    }
    Ok(())
}

/// Stage 1 alone: group labels over every sample.
pub fn train_stage1(
    train: &[LabeledClip],
    val: &[LabeledClip],
    g: &GroupMap,
    cfg: &ModelConfig,
    tc: &TrainConfig,
) -> Result<(Classifier, History)> {
    check_coverage(train, g)?;
    let s1_train = group_examples(train, g)?;
    let s1_val = group_examples(val, g)?;
    log::info!("stage 1: {} groups, {} samples", g.n_groups(), s1_train.len());
    neural::train(cfg, g.group_names.clone(), &s1_train, &s1_val, &tc.derived(&[0x51]))
}

/// Stage 2 alone: one model per group with two or more classes, keyed by
/// group index. Trainings run in parallel, each with its own derived seed.
pub fn train_stage2(
    train: &[LabeledClip],
    val: &[LabeledClip],
    g: &GroupMap,
    cfgs: &StageConfigs,
    tc: &TrainConfig,
) -> Result<BTreeMap<usize, (Classifier, History)>> {
    check_coverage(train, g)?;
    let multi: Vec<usize> = (0..g.n_groups()).filter(|&gi| g.classes_in(gi).len() >= 2).collect();
    let trained = multi
        .par_iter()
        .map(|&gi| {
            let classes = g.classes_in(gi);
            let tr = class_examples(train, &classes);
            let va = class_examples(val, &classes);
            log::info!("stage 2 `{}`: {} classes, {} samples", g.group_names[gi], classes.len(), tr.len());
            let cfg = cfgs.for_group(&g.group_names[gi]);
            neural::train(cfg, classes, &tr, &va, &tc.derived(&[0x52, gi as u64])).map(|r| (gi, r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(trained.into_iter().collect())
}

/// Stage 1 learns group labels over every sample; each stage-2 model learns
/// the classes of its group from that group's samples only (true
/// membership, not stage-1 routing).
pub fn train_hierarchy(
    train: &[LabeledClip],
    val: &[LabeledClip],
    g: &GroupMap,
    stage1_cfg: &ModelConfig,
    stage2_cfgs: &StageConfigs,
    tc: &TrainConfig,
) -> Result<(HierarchyModel, HierarchyHistory)> {
    let (stage1, h1) = train_stage1(train, val, g, stage1_cfg, tc)?;
    let mut stage2 = BTreeMap::new();
    let mut h2 = BTreeMap::new();
    for (gi, (clf, hist)) in train_stage2(train, val, g, stage2_cfgs, tc)? {
        stage2.insert(gi, clf);
        h2.insert(gi, hist);
    }
    Ok((HierarchyModel { group_map: g.clone(), stage1, stage2 }, HierarchyHistory { stage1: h1, stage2: h2 }))
}

impl HierarchyModel {
    /// Class prediction given a group, with the stage-2 probabilities.
    fn within_group(&self, group: usize, m: &MfccMatrix) -> Result<(String, Vec<f64>)> {
        match self.stage2.get(&group) {
            Some(clf) => {
                let p = clf.predict_proba(m)?;
                Ok((clf.labels[argmax(&p)].clone(), p))
            }
            None => {
                let classes = self.group_map.classes_in(group);
                let only = classes.into_iter().next().ok_or_else(|| Error::EmptyClass(self.group_map.group_names[group].clone()))?;
                Ok((only, vec![1.0]))
            }
        }
    }
}

/// Route through the most probable group (ties to the lowest index), then
/// pick the most probable class inside it.
pub fn predict_two_stage(h: &HierarchyModel, m: &MfccMatrix) -> Result<Prediction> {
    let stage1 = h.stage1.predict_proba(m)?;
    let group = argmax(&stage1);
    let (class, stage2) = h.within_group(group, m)?;
    Ok(Prediction { group, class, stage1, stage2 })
}

/// Every field of the report on a test set. Pure: repeated calls agree.
pub fn evaluate_hierarchy(h: &HierarchyModel, test: &[LabeledClip]) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let g = &h.group_map;
    let class_labels: Vec<String> = g.assignment.keys().cloned().collect();
    let rows = test
        .par_iter()
        .map(|&(m, label)| {
            let true_group = g.group_of(label).ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
            let routed = predict_two_stage(h, m)?;
            let (oracle_class, _) = h.within_group(true_group, m)?;
            Ok((label, true_group, routed.group, routed.class, oracle_class))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = EvalReport::empty("hierarchical", g.group_names.clone(), class_labels.clone());
    let class_idx = |l: &str| class_labels.iter().position(|c| c == l).expect("label from group map");
    let mut group_hits = 0;
    let mut oracle_hits = 0;
    let mut hits = 0;
    let mut per_group = vec![(0usize, 0usize); g.n_groups()];
    for (label, tg, pg, class, oracle) in &rows {
        report.class_confusion[class_idx(label)][class_idx(class)] += 1;
        report.group_confusion[*tg][*pg] += 1;
        group_hits += (tg == pg) as usize;
        hits += (class == label) as usize;
        oracle_hits += (oracle == label) as usize;
        per_group[*tg].0 += 1;
        per_group[*tg].1 += (oracle == label) as usize;
    }
    let n = rows.len() as f64;
    report.n_samples = rows.len();
    report.end_to_end_accuracy = hits as f64 / n;
    report.stage1_accuracy = Some(group_hits as f64 / n);
    report.oracle_routed_accuracy = Some(oracle_hits as f64 / n);
    report.per_group = per_group
        .iter()
        .enumerate()
        .map(|(gi, &(count, correct))| GroupEval {
            name: g.group_names[gi].clone(),
            n_classes: g.classes_in(gi).len(),
            n_samples: count,
            accuracy: (count > 0).then(|| correct as f64 / count as f64),
        })
        .collect();
    Ok(report)
}

/// One model over every class present in `train` (labels sorted).
pub fn train_flat(train: &[LabeledClip], val: &[LabeledClip], cfg: &ModelConfig, tc: &TrainConfig) -> Result<(Classifier, History)> {
    let labels: Vec<String> = train.iter().map(|(_, l)| l.to_string()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let tr = class_examples(train, &labels);
    let va = class_examples(val, &labels);
    neural::train(cfg, labels, &tr, &va, &tc.derived(&[0xf1a7]))
}

/// Report with end-to-end accuracy and the class confusion matrix only.
pub fn evaluate_flat(clf: &Classifier, test: &[LabeledClip]) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds = test.par_iter().map(|(m, _)| clf.predict(m)).collect::<Result<Vec<_>>>()?;
    let mut report = EvalReport::empty("flat", Vec::new(), clf.labels.clone());
    let mut hits = 0;
    for ((_, label), p) in test.iter().zip(preds) {
        let t = clf.labels.iter().position(|c| c == label).ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        report.class_confusion[t][p] += 1;
        hits += (t == p) as usize;
    }
    report.n_samples = test.len();
    report.end_to_end_accuracy = hits as f64 / test.len() as f64;
    Ok(report)
}
