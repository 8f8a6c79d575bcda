//! Thin wrappers that read artifacts, call the core library and write
//! artifacts back.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hkws_core::dataset::{generate_synthetic, read_wav_file, Category, SynthSpec, CLIP_SECONDS, SAMPLE_RATE};
use hkws_core::features::FeatureVector;
use hkws_core::grouping::{dynamic_group_map, static_group_map, StaticGroupTable};
use hkws_core::hierarchy::{evaluate_flat, evaluate_hierarchy, predict_two_stage, train_flat, train_stage1, train_stage2};
use hkws_core::neural::bundle;
use hkws_core::neural::logreg::{train_logreg, LogReg};
use hkws_core::neural::History;
use hkws_core::pipeline::featurize;
use hkws_core::{EvalReport, GroupMap, HierarchyModel};

use crate::config::RunConfig;
use crate::prepare::{load_side, Side};
use crate::MissingArtifact;

pub const GROUPS: &str = "groups.csv";

fn need(path: PathBuf, producer: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(MissingArtifact { path, producer }.into())
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

// ------------------------------------------------------------------ validate

/// Per-category counts and a conformance scan of every listed clip.
pub fn validate(manifest: &Path, corpus_root: &Path) -> Result<String> {
    let m = crate::load_manifest(manifest)?;
    let mut out = String::new();
    writeln!(out, "classes = {}", m.n_classes())?;
    writeln!(out, "samples = {}", m.len())?;
    writeln!(out, "speakers = {}", m.speakers().len())?;
    writeln!(out, "augmented = {}", m.entries.iter().filter(|e| e.is_augmented()).count())?;
    for cat in [Category::Alphabet, Category::Number, Category::Color] {
        let sub = m.category(cat);
        writeln!(out, "category.{}.classes = {}", cat.as_str(), sub.n_classes())?;
        writeln!(out, "category.{}.samples = {}", cat.as_str(), sub.len())?;
    }
    let expected = (CLIP_SECONDS * SAMPLE_RATE as f64).round() as usize;
    let mut bad = Vec::new();
    for e in &m.entries {
        let path = corpus_root.join(&e.path);
        match read_wav_file(&path) {
            Err(err) => bad.push(format!("{}\t{err}", e.path)),
            Ok(c) if c.sample_rate != SAMPLE_RATE => bad.push(format!("{}\tsample rate {} Hz", e.path, c.sample_rate)),
            Ok(c) if c.len() != expected => bad.push(format!("{}\tduration {:.3} s", e.path, c.duration_seconds())),
            Ok(_) => {}
        }
    }
    writeln!(out, "nonconforming = {}", bad.len())?;
    for b in bad {
        writeln!(out, "  {b}")?;
    }
    Ok(out)
}

// ------------------------------------------------------------------ synth

pub fn synth(spec: &SynthSpec, out: &Path) -> Result<String> {
    let corpus = generate_synthetic(spec)?;
    corpus.write_to(out)?;
    let planted = GroupMap::new(
        (0..spec.n_groups).map(|g| format!("family{g}")).collect(),
        corpus.planted_groups().into_iter().collect(),
        hkws_core::grouping::Provenance::Static,
    );
    write(&out.join(GROUPS), planted.to_csv())?;
    Ok(format!(
        "wrote {} clips of {} classes ({} speakers) and the planted group map to {}\n",
        corpus.manifest.len(),
        spec.n_classes,
        spec.speakers,
        out.display()
    ))
}

// ------------------------------------------------------------------ group

pub fn group_static(cfg: &RunConfig) -> Result<String> {
    let m = crate::load_manifest(cfg.manifest_path())?;
    let table = match &cfg.paths.group_table {
        Some(p) => StaticGroupTable::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => StaticGroupTable::default(),
    };
    let g = static_group_map(&m, &table)?;
    write(&cfg.work(GROUPS), g.to_csv())?;
    Ok(describe_groups(&g))
}

fn describe_groups(g: &GroupMap) -> String {
    let mut s = format!("{} groups ({})\n", g.n_groups(), g.provenance);
    for (i, name) in g.group_names.iter().enumerate() {
        let _ = writeln!(s, "{name}\t{}", g.classes_in(i).join(" "));
    }
    s
}

/// Clusters per-class centroids of the original training clips.
pub fn group_dynamic(cfg: &RunConfig) -> Result<String> {
    let train = load_side(cfg, true)?;
    let mut by_class: BTreeMap<String, Vec<FeatureVector>> = BTreeMap::new();
    for (r, e) in train.records.iter().zip(&train.manifest.entries) {
        if !e.is_augmented() {
            by_class.entry(e.label.clone()).or_default().push(r.vector.clone());
        }
    }
    let originals = train.manifest.filter(|e| !e.is_augmented());
    let k = cfg.grouping;
    let d = dynamic_group_map(&originals, &by_class, k.k_min..=k.k_max, cfg.train.seed)?;
    write(&cfg.work(GROUPS), d.group_map.to_csv())?;
    write(&cfg.work("elbow.txt"), d.elbow.to_text())?;
    if let Some(tree) = &d.dendrogram {
        write(&cfg.work("dendrogram.txt"), tree.to_text())?;
    }
    Ok(format!("elbow picked k = {}\n{}", d.elbow.chosen_k, describe_groups(&d.group_map)))
}

fn load_groups(cfg: &RunConfig) -> Result<GroupMap> {
    let p = need(cfg.work(GROUPS), "group static|dynamic")?;
    Ok(GroupMap::from_csv(&fs::read_to_string(p)?)?)
}

// ------------------------------------------------------------------ train

fn stage2_file(cfg: &RunConfig, group: usize) -> PathBuf {
    cfg.model_dir().join(format!("stage2_{group}.abjd"))
}

fn save_bundle(clf: &hkws_core::neural::Classifier, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    bundle::save(clf, path, true).with_context(|| format!("writing {}", path.display()))
}

fn save_history(cfg: &RunConfig, name: &str, h: &History) -> Result<()> {
    write(&cfg.model_dir().join(format!("{name}.history.txt")), h.to_text())
}

pub fn train_stage1_cmd(cfg: &RunConfig) -> Result<String> {
    let g = load_groups(cfg)?;
    let (train, test) = (load_side(cfg, true)?, load_side(cfg, false)?);
    let keep = |l: &str| g.group_of(l).is_some();
    let (clf, hist) = train_stage1(&train.labeled(keep), &test.labeled(keep), &g, &cfg.model(&cfg.models.stage1)?, &cfg.train)?;
    save_bundle(&clf, &cfg.model_dir().join("stage1.abjd"))?;
    save_history(cfg, "stage1", &hist)?;
    Ok(format!("stage 1 ({} groups)\n{}", g.n_groups(), hist.to_text()))
}

pub fn train_stage2_cmd(cfg: &RunConfig) -> Result<String> {
    let g = load_groups(cfg)?;
    let (train, test) = (load_side(cfg, true)?, load_side(cfg, false)?);
    let keep = |l: &str| g.group_of(l).is_some();
    let trained = train_stage2(&train.labeled(keep), &test.labeled(keep), &g, &cfg.stage2_configs()?, &cfg.train)?;
    let mut out = String::new();
    for (gi, (clf, hist)) in &trained {
        save_bundle(clf, &stage2_file(cfg, *gi))?;
        save_history(cfg, &format!("stage2_{gi}"), hist)?;
        let last = hist.last().map_or(0.0, |e| e.train_accuracy);
        writeln!(out, "stage 2 {} ({} classes): final train accuracy {last:.4}", g.group_names[*gi], clf.n_classes())?;
    }
    Ok(out)
}

/// Labels used by the flat and logistic baselines: the grouped classes when
/// a group map exists, every class otherwise.
fn baseline_filter(cfg: &RunConfig) -> Result<Option<GroupMap>> {
    let p = cfg.work(GROUPS);
    Ok(if p.exists() { Some(GroupMap::from_csv(&fs::read_to_string(p)?)?) } else { None })
}

pub fn train_flat_cmd(cfg: &RunConfig) -> Result<String> {
    let g = baseline_filter(cfg)?;
    let keep = |l: &str| g.as_ref().is_none_or(|g| g.group_of(l).is_some());
    let (train, test) = (load_side(cfg, true)?, load_side(cfg, false)?);
    let (clf, hist) = train_flat(&train.labeled(keep), &test.labeled(keep), &cfg.model(&cfg.models.flat)?, &cfg.train)?;
    save_bundle(&clf, &cfg.model_dir().join("flat.abjd"))?;
    save_history(cfg, "flat", &hist)?;
    Ok(format!("flat ({} classes)\n{}", clf.n_classes(), hist.to_text()))
}

fn vectors(side: &Side, labels: &[String]) -> (Vec<Vec<f64>>, Vec<usize>, Vec<String>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut spk = Vec::new();
    for (r, e) in side.records.iter().zip(&side.manifest.entries) {
        if let Ok(i) = labels.binary_search(&e.label) {
            x.push(r.vector.values.clone());
            y.push(i);
            spk.push(e.speaker_id.clone());
        }
    }
    (x, y, spk)
}

pub fn train_logreg_cmd(cfg: &RunConfig) -> Result<String> {
    let g = baseline_filter(cfg)?;
    let (train, test) = (load_side(cfg, true)?, load_side(cfg, false)?);
    let labels: Vec<String> = match &g {
        Some(g) => g.assignment.keys().cloned().collect(),
        None => train.manifest.labels(),
    };
    let (x, y, spk) = vectors(&train, &labels);
    let spk: Vec<&str> = spk.iter().map(String::as_str).collect();
    let fit = train_logreg(&x, &y, &spk, labels.len(), cfg.train.seed)?;
    #[derive(serde::Serialize)]
    struct Saved<'a> {
        labels: &'a [String],
        model: &'a LogReg,
    }
    write(&cfg.model_dir().join("logreg.toml"), toml::to_string(&Saved { labels: &labels, model: &fit.model })?)?;
    let (tx, ty, _) = vectors(&test, &labels);
    let mut s = format!("logistic regression, {} classes, l2 = {}\n", labels.len(), fit.model.l2);
    for (l2, acc) in &fit.grid_scores {
        writeln!(s, "grid l2 = {l2}: held-out accuracy {acc:.4}")?;
    }
    writeln!(s, "loss {:.6} -> {:.6}", fit.initial_loss, fit.final_loss)?;
    writeln!(s, "test accuracy = {:.6}", fit.model.accuracy(&tx, &ty)?)?;
    Ok(s)
}

// ------------------------------------------------------------------ eval / infer

fn load_hierarchy(cfg: &RunConfig) -> Result<HierarchyModel> {
    let group_map = load_groups(cfg)?;
    let stage1 = bundle::load(&need(cfg.model_dir().join("stage1.abjd"), "train stage1")?)?;
    let mut stage2 = BTreeMap::new();
    for gi in (0..group_map.n_groups()).filter(|&gi| group_map.classes_in(gi).len() >= 2) {
        stage2.insert(gi, bundle::load(&need(stage2_file(cfg, gi), "train stage2")?)?);
    }
    Ok(HierarchyModel { group_map, stage1, stage2 })
}

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

/// Hierarchical report, plus flat and logistic baselines when trained.
pub fn eval(cfg: &RunConfig) -> Result<String> {
    let h = load_hierarchy(cfg)?;
    let keep = |l: &str| h.group_map.group_of(l).is_some();
    let (train, test) = (load_side(cfg, true)?, load_side(cfg, false)?);
    let (tr, te) = (train.labeled(keep), test.labeled(keep));
    let on_train = evaluate_hierarchy(&h, &tr)?;
    let report = evaluate_hierarchy(&h, &te)?;
    write(&cfg.work("eval_report.txt"), report.to_text(Some(&on_train)))?;

    let mut cmp = String::from("| Model | Test accuracy |\n|---|---|\n");
    writeln!(cmp, "| hierarchical | {} |", pct(report.end_to_end_accuracy))?;
    let flat_path = cfg.model_dir().join("flat.abjd");
    let mut flat: Option<EvalReport> = None;
    if flat_path.exists() {
        let clf = bundle::load(&flat_path)?;
        let r = evaluate_flat(&clf, &te)?;
        write(&cfg.work("eval_flat.txt"), r.to_text(Some(&evaluate_flat(&clf, &tr)?)))?;
        writeln!(cmp, "| flat | {} |", pct(r.end_to_end_accuracy))?;
        flat = Some(r);
    }
    let lr_path = cfg.model_dir().join("logreg.toml");
    if lr_path.exists() {
        #[derive(serde::Deserialize)]
        struct Saved {
            labels: Vec<String>,
            model: LogReg,
        }
        let saved: Saved = toml::from_str(&fs::read_to_string(&lr_path)?)
            .map_err(|e| hkws_core::Error::Format { kind: "logreg", reason: e.to_string() })?;
        let (x, y, _) = vectors(&test, &saved.labels);
        writeln!(cmp, "| logistic regression | {} |", pct(saved.model.accuracy(&x, &y)?))?;
    }
    write(&cfg.work("comparison.md"), &cmp)?;
    let mut out = report.to_text(Some(&on_train));
    if let Some(f) = flat {
        writeln!(out, "\nflat end_to_end_accuracy = {:.6}", f.end_to_end_accuracy)?;
    }
    out.push('\n');
    out += &cmp;
    Ok(out)
}

pub fn infer(cfg: &RunConfig, wav: &Path) -> Result<String> {
    let h = load_hierarchy(cfg)?;
    let clip = read_wav_file(wav).with_context(|| format!("reading {}", wav.display()))?;
    let (_, mfcc) = featurize(&clip, &cfg.pipeline)?;
    let p = predict_two_stage(&h, &mfcc)?;
    let mut s = String::new();
    writeln!(s, "group = {}", h.group_map.group_names[p.group])?;
    writeln!(s, "class = {}", p.class)?;
    let probs = |names: &[String], v: &[f64]| names.iter().zip(v).map(|(n, p)| format!("{n}={p:.6}")).collect::<Vec<_>>().join(" ");
    writeln!(s, "stage1 {}", probs(&h.group_map.group_names, &p.stage1))?;
    writeln!(s, "stage2 {}", probs(&h.group_map.classes_in(p.group), &p.stage2))?;
    Ok(s)
}
