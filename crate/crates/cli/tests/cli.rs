use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY_PRESETS: &str = r#"
[[preset]]
name = "tiny"
conv_channels = [2]
lstm_units = [4]
dense_units = [8]
dropout = 0.0
"#;

fn hkws(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hkws")).current_dir(dir).args(args).env("RUST_LOG", "warn").output().expect("spawn hkws")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = hkws(dir, args);
    assert!(o.status.success(), "hkws {args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Small corpus plus a config with one augmented copy, a tiny network and
/// two epochs.
fn setup(dir: &Path, extra: &str) {
    ok(dir, &["synth", "--classes", "4", "--groups", "2", "--speakers", "6", "--per-class", "8", "--out", "corpus"]);
    fs::write(dir.join("presets.toml"), TINY_PRESETS).unwrap();
    let cfg = format!(
        "[pipeline.augment]\ncopies_per_sample = 1\n[train]\nepochs = 2\nbatch_size = 8\n{extra}\n\
         [models]\nstage1 = 'tiny'\nstage2 = 'tiny'\nflat = 'tiny'\npreset_file = 'presets.toml'\n"
    );
    fs::write(dir.join("run.toml"), cfg).unwrap();
}

fn full_run(dir: &Path) {
    ok(dir, &["--config", "run.toml", "prepare"]);
    fs::copy(dir.join("corpus/groups.csv"), dir.join("run/groups.csv")).unwrap();
    for what in ["stage1", "stage2", "flat", "logreg"] {
        ok(dir, &["--config", "run.toml", "train", what]);
    }
    ok(dir, &["--config", "run.toml", "eval"]);
}

#[test]
fn workflow_is_reproducible_and_cached() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        setup(d, "");
        full_run(d);
    }
    for artifact in [
        "run/train.abjf",
        "run/test.abjf",
        "run/train_manifest.csv",
        "run/eval_report.txt",
        "run/eval_flat.txt",
        "run/comparison.md",
        "run/models/stage1.abjd",
        "run/models/stage2_0.abjd",
        "run/models/flat.abjd",
        "run/models/logreg.toml",
    ] {
        assert_eq!(fs::read(a.path().join(artifact)).unwrap(), fs::read(b.path().join(artifact)).unwrap(), "{artifact}");
    }
    let report = fs::read_to_string(a.path().join("run/eval_report.txt")).unwrap();
    assert!(report.contains("kind = hierarchical") && report.contains("| stage 1 (groups) |"));
    let cmp = fs::read_to_string(a.path().join("run/comparison.md")).unwrap();
    assert!(cmp.contains("| flat |") && cmp.contains("| logistic regression |"));

    // a rerun reads every clip from the cache and rewrites identical files
    let before = fs::read(a.path().join("run/train.abjf")).unwrap();
    let out = ok(a.path(), &["--config", "run.toml", "prepare"]);
    assert!(out.contains("computed = 0"), "{out}");
    assert_eq!(fs::read(a.path().join("run/train.abjf")).unwrap(), before);
    // the cold path (empty cache) agrees with the cache-hit path
    fs::remove_dir_all(a.path().join("run/cache")).unwrap();
    let out = ok(a.path(), &["--config", "run.toml", "prepare"]);
    assert!(out.contains("cache_hits = 0"), "{out}");
    assert_eq!(fs::read(a.path().join("run/train.abjf")).unwrap(), before);

    // the training side grows by 1 + copies and the test side is clean
    let train = fs::read_to_string(a.path().join("run/train_manifest.csv")).unwrap();
    let test = fs::read_to_string(a.path().join("run/test_manifest.csv")).unwrap();
    let (n_train, n_test) = (train.lines().count() - 1, test.lines().count() - 1);
    assert_eq!(n_train % 2, 0);
    assert_eq!(n_train / 2 + n_test, 32);
    assert!(!test.contains("aug/"), "{test}");
    assert!(train.contains("aug/"));

    // infer returns the argmax of the stage-2 probabilities
    let clip = train.lines().nth(1).unwrap().split(',').next().unwrap();
    let out = ok(a.path(), &["--config", "run.toml", "infer", &format!("corpus/{clip}")]);
    let class = out.lines().find_map(|l| l.strip_prefix("class = ")).unwrap();
    let probs: Vec<(String, f64)> = out
        .lines()
        .find_map(|l| l.strip_prefix("stage2 "))
        .unwrap()
        .split(' ')
        .map(|kv| {
            let (k, v) = kv.split_once('=').unwrap();
            (k.to_string(), v.parse().unwrap())
        })
        .collect();
    let best = probs.iter().fold(&probs[0], |b, p| if p.1 > b.1 { p } else { b });
    assert_eq!(best.0, class);
}

#[test]
fn synth_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    for out in ["x", "y"] {
        ok(d.path(), &["synth", "--classes", "3", "--groups", "1", "--speakers", "2", "--per-class", "2", "--seed", "7", "--out", out]);
    }
    for f in ["manifest.csv", "groups.csv", "syn00/spk000_0000.wav"] {
        assert_eq!(fs::read(d.path().join("x").join(f)).unwrap(), fs::read(d.path().join("y").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn validate_counts_and_flags_nonconforming_clips() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--classes", "3", "--groups", "1", "--speakers", "2", "--per-class", "2", "--out", "c"]);
    let out = ok(d.path(), &["validate", "c/manifest.csv"]);
    assert!(out.contains("classes = 3") && out.contains("samples = 6") && out.contains("nonconforming = 0"), "{out}");

    // replace one clip by a 44.1 kHz recording
    let manifest = fs::read_to_string(d.path().join("c/manifest.csv")).unwrap();
    let first = manifest.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    let clip = hkws_core::AudioClip::new(vec![0.0; 88_200], 44_100);
    fs::write(d.path().join("c").join(&first), hkws_core::dataset::write_wav(&clip)).unwrap();
    let out = ok(d.path(), &["validate", "c/manifest.csv"]);
    assert!(out.contains("nonconforming = 1") && out.contains(&first) && out.contains("44100"), "{out}");
}

#[test]
fn static_grouping_yields_six_groups() {
    let d = tempfile::tempdir().unwrap();
    let mut csv = String::from("path,label,category,speaker_id,age\n");
    for (i, label) in hkws_core::dataset::synthetic_alphabet_labels().iter().enumerate() {
        csv += &format!("a/{i}.wav,{label},alphabet,s{},\n", i % 3);
    }
    csv += "n/0.wav,one,number,s0,\n";
    fs::create_dir_all(d.path().join("corpus")).unwrap();
    fs::write(d.path().join("corpus/manifest.csv"), csv).unwrap();
    let out = ok(d.path(), &["group", "static"]);
    assert!(out.starts_with("6 groups (static)"), "{out}");
    let map = fs::read_to_string(d.path().join("run/groups.csv")).unwrap();
    assert_eq!(map.lines().count(), 1 + 112);
    assert!(!map.contains("one,"));
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    // usage errors
    assert_eq!(code(&hkws(d.path(), &["no-such-command"])), 1);
    assert_eq!(code(&hkws(d.path(), &["train", "everything"])), 1);
    assert_eq!(code(&hkws(d.path(), &["--help"])), 0);
    setup(d.path(), "");
    assert_eq!(code(&hkws(d.path(), &["--config", "run.toml", "--preset", "no-such", "train", "flat"])), 1);
    fs::write(d.path().join("bad.toml"), "[paths]\nnonsense = 1\n").unwrap();
    assert_eq!(code(&hkws(d.path(), &["--config", "bad.toml", "prepare"])), 1);

    // data errors: missing upstream artifacts are named
    let o = hkws(d.path(), &["--config", "run.toml", "eval"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("groups.csv"));
    ok(d.path(), &["--config", "run.toml", "prepare"]);
    fs::copy(d.path().join("corpus/groups.csv"), d.path().join("run/groups.csv")).unwrap();
    let o = hkws(d.path(), &["--config", "run.toml", "eval"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("train stage1"));
    // synthetic labels are not Arabic letters
    assert_eq!(code(&hkws(d.path(), &["--config", "run.toml", "group", "static"])), 2);
    assert_eq!(code(&hkws(d.path(), &["validate", "missing.csv"])), 2);

    // divergence
    let cfg = fs::read_to_string(d.path().join("run.toml")).unwrap().replace("epochs = 2", "epochs = 2\nlearning_rate = 1e300");
    fs::write(d.path().join("diverge.toml"), cfg).unwrap();
    assert_eq!(code(&hkws(d.path(), &["--config", "diverge.toml", "train", "flat"])), 3);
}

#[test]
fn dynamic_grouping_writes_elbow_and_dendrogram() {
    let d = tempfile::tempdir().unwrap();
    setup(d.path(), "[grouping]\nk_min = 1\nk_max = 4");
    ok(d.path(), &["--config", "run.toml", "prepare"]);
    let out = ok(d.path(), &["--config", "run.toml", "group", "dynamic"]);
    assert!(out.contains("elbow picked k ="), "{out}");
    let map = fs::read_to_string(d.path().join("run/groups.csv")).unwrap();
    assert!(map.contains("dynamic") && map.lines().count() == 5, "{map}");
    assert!(d.path().join("run/elbow.txt").exists());
}

#[test]
fn presets_are_listed() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(d.path(), &["presets"]);
    for name in ["static-best", "halq-best", "numbers-best", "synthetic"] {
        assert!(out.lines().any(|l| l.starts_with(&format!("{name}\t"))), "{name}");
    }
}
