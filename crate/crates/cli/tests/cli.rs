use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use drivid_core::data::{decompose_timestamp, read_csv, IngestConfig};
use drivid_core::pipeline::{read_bundle, Bundle, Classifier};
use drivid_core::selection::{select_features, FsMode};
use drivid_core::tree::{Test, TreeNode};
use drivid_core::Dataset;
use tempfile::TempDir;

fn profile(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../profiles").join(name)
}

fn drivid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drivid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = drivid(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Alice/Bob corpus in `dir`; returns (csv, ingest).
fn corpus(dir: &Path, rows: usize, seed: u64) -> (PathBuf, PathBuf) {
    let csv = dir.join(format!("ab{seed}.csv"));
    ok(&[
        "synth",
        "--profile",
        s(&profile("alice_bob.profile")),
        "--rows",
        &rows.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&csv),
    ]);
    let ingest = csv.with_extension("ingest");
    (csv, ingest)
}

fn data_args<'a>(csv: &'a Path, ingest: &'a Path) -> Vec<&'a str> {
    vec!["--dataset", s(csv), "--ingest-config", s(ingest)]
}

#[test]
fn synth_is_seeded_and_zero_rows_is_header_only() {
    let dir = TempDir::new().unwrap();
    let (a, _) = corpus(dir.path(), 300, 5);
    let first = fs::read(&a).unwrap();
    corpus(dir.path(), 300, 5);
    assert_eq!(first, fs::read(&a).unwrap());
    let (b, _) = corpus(dir.path(), 300, 6);
    assert_ne!(first, fs::read(&b).unwrap());

    let (empty, _) = corpus(dir.path(), 0, 9);
    assert_eq!(fs::read_to_string(empty).unwrap(), "speed,rpm,throttle,coolant,timestamp,driver\n");
}

#[test]
fn alice_and_bob_separate_on_speed_and_weekday() {
    let dir = TempDir::new().unwrap();
    let (csv, ingest) = corpus(dir.path(), 2000, 7);
    let cfg = IngestConfig::from_file(&ingest).unwrap();
    let ds: Dataset = decompose_timestamp(&read_csv(&csv, &cfg).unwrap()).unwrap();
    let speed = ds.feature_index("speed").unwrap();
    let dow = ds.feature_index("day_of_week").unwrap();
    for inst in ds.instances() {
        let v = |f: usize| inst.values[f].as_num().unwrap();
        match ds.label_of(inst) {
            "Alice" => assert!(v(speed) <= 50.0),
            "Bob" => assert!(v(speed) > 50.0 && v(dow) <= 5.0),
            other => panic!("unexpected driver {other}"),
        }
    }
}

#[test]
fn malformed_profile_exits_2() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.profile");
    fs::write(&bad, "features = speed\n[driver A]\nspeed = uniform 1 2\n").unwrap();
    let out = drivid(&["synth", "--profile", s(&bad), "--rows", "5", "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rank_report_matches_library_selection() {
    let dir = TempDir::new().unwrap();
    let (csv, ingest) = corpus(dir.path(), 600, 2);
    let out_dir = dir.path().join("rank");
    let mut args = vec!["rank"];
    args.extend(data_args(&csv, &ingest));
    args.extend(["--out", s(&out_dir)]);
    ok(&args);

    let cfg = IngestConfig::from_file(&ingest).unwrap();
    let ds: Dataset = decompose_timestamp(&read_csv(&csv, &cfg).unwrap()).unwrap();
    let (ranking, subset) = select_features(&ds.with_sorted_classes(), FsMode::Paradigm).unwrap();
    let mut expected: Vec<String> = subset.kept.iter().map(|&f| ds.schema()[f].name.clone()).collect();
    expected.sort();

    let report = fs::read_to_string(out_dir.join("ranking.csv")).unwrap();
    let mut kept: Vec<String> = report
        .lines()
        .skip(1)
        .filter(|l| l.ends_with(",kept"))
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    kept.sort();
    assert_eq!(kept, expected);
    assert_eq!(report.lines().count(), ranking.entries().len() + 1);
    assert!(fs::read_to_string(out_dir.join("ranking.txt")).unwrap().starts_with("seed: 0\nconfig: sha256:"));
}

#[test]
fn rank_with_fs_off_keeps_every_nonzero_feature() {
    let dir = TempDir::new().unwrap();
    let (csv, ingest) = corpus(dir.path(), 600, 2);
    let out_dir = dir.path().join("rank");
    let mut args = vec!["rank"];
    args.extend(data_args(&csv, &ingest));
    args.extend(["--fs", "off", "--out", s(&out_dir)]);
    ok(&args);
    let report = fs::read_to_string(out_dir.join("ranking.csv")).unwrap();
    for line in report.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let rank: f64 = cells[1].parse().unwrap();
        assert_eq!(cells[3] == "kept", rank > 0.0, "{line}");
    }
}

fn train(csv: &Path, ingest: &Path, task: &str, learner: &str, out: &Path, extra: &[&str]) -> String {
    let mut args = vec!["train"];
    args.extend(data_args(csv, ingest));
    args.extend(["--task", task, "--learner", learner, "--seed", "11", "--out", s(out)]);
    args.extend(extra);
    ok(&args)
}

#[test]
fn bob_owner_bundle_tests_speed() {
    let dir = TempDir::new().unwrap();
    let (csv, ingest) = corpus(dir.path(), 2000, 7);
    let out = dir.path().join("bob");
    train(&csv, &ingest, "owner:Bob", "c45", &out, &[]);
    let (bundle, extras) = read_bundle::<f64>(&out).unwrap();
    let Bundle::Owner(model) = bundle else {
        panic!("expected an owner bundle")
    };
    assert_eq!(model.owner_id, "Bob");
    let Classifier::Tree(tree) = &model.fitted.classifier else {
        panic!("expected a tree")
    };
    match tree.root() {
        TreeNode::Split {
            test: Test::Threshold { feature, threshold },
            ..
        } => {
            assert_eq!(tree.features()[*feature].name, "speed");
            assert!(*threshold > 50.0 && *threshold <= 55.0, "threshold {threshold}");
        }
        other => panic!("root is {other:?}"),
    }
    assert!(extras["run.conf"].contains("seed = 11"));
    assert!(extras.contains_key("ingest.conf"));
}

#[test]
fn identical_training_runs_give_identical_bundles() {
    let dir = TempDir::new().unwrap();
    let (csv, ingest) = corpus(dir.path(), 800, 3);
    let a = train(&csv, &ingest, "multi", "rf", &dir.path().join("a"), &["--trees", "15", "--threads", "1"]);
    let b = train(&csv, &ingest, "multi", "rf", &dir.path().join("b"), &["--trees", "15", "--threads", "3"]);
    assert_eq!(a, b);
    let cls = |d: &str| fs::read(dir.path().join(d).join("classifier.json")).unwrap();
    assert_eq!(cls("a"), cls("b"));
}

#[test]
fn unknown_owner_exits_3_naming_the_id() {
    let dir = TempDir::new().unwrap();
    let (csv, ingest) = corpus(dir.path(), 300, 3);
    let mut args = vec!["train"];
    args.extend(data_args(&csv, &ingest));
    let out_dir = dir.path().join("m");
    args.extend(["--task", "owner:Carol", "--out", s(&out_dir)]);
    let out = drivid(&args);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Carol"));
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let (csv, ingest) = corpus(dir.path(), 300, 3);
    let out_dir = dir.path().join("m");
    for extra in [
        vec!["--learner", "svm"],
        vec!["--fs", "sometimes"],
        vec!["--task", "owner:"],
        vec!["--learner", "c45", "--trees", "5"],
        vec!["--learner", "rf", "--trees", "0"],
    ] {
        let mut args = vec!["train"];
        args.extend(data_args(&csv, &ingest));
        args.extend(["--out", s(&out_dir)]);
        args.extend(&extra);
        assert_eq!(drivid(&args).status.code(), Some(2), "{extra:?}");
    }
    let missing = dir.path().join("nope.ingest");
    let out = drivid(&["rank", "--dataset", s(&csv), "--ingest-config", s(&missing)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_on_separable_corpus_is_perfect() {
    let dir = TempDir::new().unwrap();
    let (csv, ingest) = corpus(dir.path(), 1000, 4);
    let out_dir = dir.path().join("eval");
    let mut args = vec!["eval"];
    args.extend(data_args(&csv, &ingest));
    args.extend(["--learner", "c45", "--out", s(&out_dir), "--per-fold-class"]);
    ok(&args);
    let report = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    let header: Vec<&str> = report.lines().next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for line in report.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        for m in ["accuracy", "precision", "recall"] {
            assert_eq!(cells[col(m)].parse::<f64>().unwrap(), 1.0, "{line}");
        }
    }
    assert!(out_dir.join("fold_class.csv").exists());
    let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.starts_with("seed: 0\nconfig: sha256:"));
}

#[test]
fn owner_all_eval_reports_every_driver() {
    let dir = TempDir::new().unwrap();
    let (csv, ingest) = corpus(dir.path(), 600, 4);
    let out_dir = dir.path().join("eval");
    let mut args = vec!["eval"];
    args.extend(data_args(&csv, &ingest));
    args.extend(["--task", "owner-all", "--trees", "10", "--folds", "5", "--out", s(&out_dir)]);
    let text = ok(&args);
    assert!(text.contains("Alice") && text.contains("Bob"));
    assert!(out_dir.join("folds.csv").exists());
}

#[test]
fn sparse_drivers_are_excluded() {
    let dir = TempDir::new().unwrap();
    let (csv, ingest) = corpus(dir.path(), 300, 4);
    let out_dir = dir.path().join("eval");
    let mut args = vec!["eval"];
    args.extend(data_args(&csv, &ingest));
    args.extend(["--min-instances", "1000", "--out", s(&out_dir)]);
    assert_eq!(drivid(&args).status.code(), Some(3));
}

fn predict(model: &Path, input: &Path) -> Output {
    drivid(&["predict", "--model", s(model), "--input", s(input)])
}

#[test]
fn owner_model_accepts_held_out_owner_rows() {
    let dir = TempDir::new().unwrap();
    let (csv, ingest) = corpus(dir.path(), 1500, 21);
    let model = dir.path().join("bob");
    train(&csv, &ingest, "owner:Bob", "rf", &model, &["--trees", "20"]);

    let (held, _) = corpus(dir.path(), 400, 22);
    let text = fs::read_to_string(&held).unwrap();
    let mut lines = text.lines();
    let mut bob_rows = vec![lines.next().unwrap().to_string()];
    bob_rows.extend(lines.filter(|l| l.ends_with(",Bob")).map(String::from));
    let input = dir.path().join("bob_rows.csv");
    fs::write(&input, bob_rows.join("\n") + "\n").unwrap();

    let out = predict(&model, &input);
    assert!(out.status.success());
    let preds = String::from_utf8(out.stdout).unwrap();
    let labels: Vec<&str> = preds.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(labels.len(), bob_rows.len() - 1);
    let ones = labels.iter().filter(|l| **l == "1").count();
    assert!(ones as f64 >= 0.95 * labels.len() as f64, "{ones} of {}", labels.len());
}

#[test]
fn predict_edge_cases() {
    let dir = TempDir::new().unwrap();
    let (csv, ingest) = corpus(dir.path(), 600, 8);
    let model = dir.path().join("multi");
    train(&csv, &ingest, "multi", "rf", &model, &["--trees", "10"]);
    let text = fs::read_to_string(&csv).unwrap();
    let header = text.lines().next().unwrap();

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, format!("{header}\n")).unwrap();
    let out = predict(&model, &empty);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "row,label,confidence\n");

    // one unlabeled row
    let cols: Vec<&str> = header.split(',').collect();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let one = dir.path().join("one.csv");
    fs::write(&one, format!("{}\n{}\n", cols[..5].join(","), row[..5].join(","))).unwrap();
    let out = predict(&model, &one);
    let preds = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = preds.lines().collect();
    assert_eq!(lines.len(), 2);
    let label = lines[1].split(',').nth(1).unwrap();
    assert!(label == "Alice" || label == "Bob");

    let no_speed = dir.path().join("no_speed.csv");
    fs::write(&no_speed, format!("{}\n{}\n", cols[1..5].join(","), row[1..5].join(","))).unwrap();
    let out = predict(&model, &no_speed);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("speed"));
}

#[test]
fn night_profile_owner_model_rejects_the_night_driver() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("night.csv");
    ok(&["synth", "--profile", s(&profile("night.profile")), "--rows", "1500", "--seed", "4", "--out", s(&csv)]);
    let ingest = csv.with_extension("ingest");
    let out_dir = dir.path().join("eval");
    let mut args = vec!["eval"];
    args.extend(data_args(&csv, &ingest));
    args.extend(["--task", "owner:Owner", "--learner", "c45", "--folds", "5", "--out", s(&out_dir)]);
    ok(&args);
    let report = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    let header: Vec<&str> = report.lines().next().unwrap().split(',').collect();
    let acc = header.iter().position(|h| *h == "accuracy").unwrap();
    for line in report.lines().skip(1) {
        let a: f64 = line.split(',').nth(acc).unwrap().parse().unwrap();
        assert!(a >= 0.95, "{line}");
    }
}
