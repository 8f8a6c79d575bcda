//! Evaluation report and its text form.
//!
//! The text form is a list of `key = value` lines followed by a Markdown
//! table and the confusion matrices:
//!
//! ```text
//! kind = hierarchical | flat
//! n_samples = <int>
//! end_to_end_accuracy = <f>
//! stage1_accuracy = <f> | -
//! oracle_routed_accuracy = <f> | -
//! group.<name>.n_classes / .n_samples / .accuracy
//! ```
//! Floats are printed with six decimals so reruns compare byte for byte.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Stage-2 accuracy of one group under oracle routing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEval {
    pub name: String,
    pub n_classes: usize,
    pub n_samples: usize,
    /// `None` when the test set holds no sample of the group.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: String,
    pub n_samples: usize,
    pub end_to_end_accuracy: f64,
    pub stage1_accuracy: Option<f64>,
    pub oracle_routed_accuracy: Option<f64>,
    pub per_group: Vec<GroupEval>,
    pub group_names: Vec<String>,
    pub class_labels: Vec<String>,
    /// `[true][predicted]` counts.
    pub group_confusion: Vec<Vec<usize>>,
    pub class_confusion: Vec<Vec<usize>>,
}

fn f(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.2}%", 100.0 * x))
}

impl EvalReport {
    pub(crate) fn empty(kind: &str, group_names: Vec<String>, class_labels: Vec<String>) -> Self {
        let g = group_names.len();
        let c = class_labels.len();
        Self {
            kind: kind.to_string(),
            n_samples: 0,
            end_to_end_accuracy: 0.0,
            stage1_accuracy: None,
            oracle_routed_accuracy: None,
            per_group: Vec::new(),
            group_names,
            class_labels,
            group_confusion: vec![vec![0; g]; g],
            class_confusion: vec![vec![0; c]; c],
        }
    }

    /// The structural inequalities every hierarchical report satisfies.
    pub fn invariants_hold(&self) -> bool {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        let le = |v: Option<f64>| v.is_none_or(|x| in_unit(x) && self.end_to_end_accuracy <= x);
        let total: usize = self.class_confusion.iter().flatten().sum();
        in_unit(self.end_to_end_accuracy) && le(self.stage1_accuracy) && le(self.oracle_routed_accuracy) && total == self.n_samples
    }

    /// Markdown table with one row per stage model. `train` optionally
    /// supplies the same evaluation on the training set.
    pub fn markdown_table(&self, train: Option<&EvalReport>) -> String {
        let mut s = String::from("| Model | Classes | Train accuracy | Test accuracy |\n|---|---|---|---|\n");
        let t = |get: &dyn Fn(&EvalReport) -> Option<f64>| pct(train.and_then(get));
        if self.stage1_accuracy.is_some() {
            let _ = writeln!(s, "| stage 1 (groups) | {} | {} | {} |", self.group_names.len(), t(&|r| r.stage1_accuracy), pct(self.stage1_accuracy));
            for (i, g) in self.per_group.iter().enumerate() {
                let train_acc = t(&|r: &EvalReport| r.per_group.get(i).and_then(|x| x.accuracy));
                let _ = writeln!(s, "| stage 2 {} | {} | {} | {} |", g.name, g.n_classes, train_acc, pct(g.accuracy));
            }
        }
        let _ = writeln!(
            s,
            "| {} end-to-end | {} | {} | {} |",
            self.kind,
            self.class_labels.len(),
            t(&|r| Some(r.end_to_end_accuracy)),
            pct(Some(self.end_to_end_accuracy))
        );
        s
    }

    pub fn to_text(&self, train: Option<&EvalReport>) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kind = {}", self.kind);
        let _ = writeln!(s, "n_samples = {}", self.n_samples);
        let _ = writeln!(s, "end_to_end_accuracy = {:.6}", self.end_to_end_accuracy);
        let _ = writeln!(s, "stage1_accuracy = {}", f(self.stage1_accuracy));
        let _ = writeln!(s, "oracle_routed_accuracy = {}", f(self.oracle_routed_accuracy));
        for g in &self.per_group {
            let _ = writeln!(s, "group.{}.n_classes = {}", g.name, g.n_classes);
            let _ = writeln!(s, "group.{}.n_samples = {}", g.name, g.n_samples);
            let _ = writeln!(s, "group.{}.accuracy = {}", g.name, f(g.accuracy));
        }
        s.push('\n');
        s += &self.markdown_table(train);
        if !self.group_names.is_empty() {
            s += "\ngroup_confusion (rows true, columns predicted)\n";
            s += &matrix(&self.group_names, &self.group_confusion);
        }
        s += "\nclass_confusion (rows true, columns predicted)\n";
        s += &matrix(&self.class_labels, &self.class_confusion);
        s
    }
}

fn matrix(labels: &[String], m: &[Vec<usize>]) -> String {
    let mut s = String::from("true\\pred");
    labels.iter().for_each(|l| s += &format!("\t{l}"));
    s.push('\n');
    for (l, row) in labels.iter().zip(m) {
        s += l;
        row.iter().for_each(|v| s += &format!("\t{v}"));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_form_has_documented_keys() {
        let mut r = EvalReport::empty("hierarchical", vec!["g0".into(), "g1".into()], vec!["a".into(), "b".into()]);
        r.n_samples = 2;
        r.class_confusion = vec![vec![1, 0], vec![1, 0]];
        r.end_to_end_accuracy = 0.5;
        r.stage1_accuracy = Some(0.5);
        r.oracle_routed_accuracy = Some(1.0);
        r.per_group = vec![GroupEval { name: "g0".into(), n_classes: 1, n_samples: 1, accuracy: Some(1.0) }];
        assert!(r.invariants_hold());
        let text = r.to_text(None);
        for key in ["kind = hierarchical", "end_to_end_accuracy = 0.500000", "stage1_accuracy = 0.500000", "group.g0.accuracy = 1.000000"] {
            assert!(text.contains(key), "{key}");
        }
        assert!(text.contains("| stage 1 (groups) | 2 | - | 50.00% |"));
        r.end_to_end_accuracy = 0.75;
        assert!(!r.invariants_hold());
    }
}
