use std::fs;
use std::path::Path;

use super::*;
use crate::audio::read_wav;
use crate::eval::{parse_report, MetricsRecord};
use crate::probe::parse_per_csv;

fn slvm(args: &[&str]) -> i32 {
    run(std::iter::once("slvm").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Short clips and a small model so every command runs in well under a second.
const TINY: &str = r#"
[synth]
count = 4
min_len = 300
max_len = 400
regime_len = [60, 120]

[model]
kind = "vrnn"
stack = 16
dz = 3
dd = 8
dc = 8
components = 2
bit_depth = 8

[train]
max_steps = 3
val_every = 3

[probe]
budgets = ["10m", "3.7h"]
test_fraction = 0.5

[probe.asr]
width = 4
layers = 1
steps = 4
n_resample = 2
lda_dims = 1
knn_k = 1
"#;

fn setup(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    assert_eq!(slvm(&["synth", "--config", p(&cfg), "--seed", "3", "--out", p(&dir.join("corpus"))]), 0);
    cfg
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn synth_is_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        assert_eq!(slvm(&["synth", "--n", "8", "--seed", "7", "--out", p(&d.path().join(out))]), 0);
    }
    let (mut a, mut b) = (files(&d.path().join("a")), files(&d.path().join("b")));
    assert_eq!(a.len(), 8 + 2);
    // the resolved configs differ only in their output directory
    a.retain(|(n, _)| n != RESOLVED_NAME);
    b.retain(|(n, _)| n != RESOLVED_NAME);
    assert_eq!(a, b);
    assert!(a.iter().any(|(n, _)| n == "manifest.tsv"));
}

#[test]
fn unknown_flags_and_bad_configs_exit_2() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(slvm(&["synth", "--bogus", "1"]), 2);
    assert_eq!(slvm(&["frobnicate"]), 2);
    assert_eq!(slvm(&["train", "--model", "transformer", "--out", p(d.path())]), 2);
    let bad = d.path().join("bad.toml");
    fs::write(&bad, "[train]\nlearning_rate = 1.0\n").unwrap();
    assert_eq!(slvm(&["train", "--config", p(&bad)]), 2);
    // a train run without data is a configuration error, not a crash
    assert_eq!(slvm(&["train", "--out", p(&d.path().join("x"))]), 2);
    assert_eq!(exit_code(&Error::Numeric { op: "x", detail: String::new() }), 3);
}

#[test]
fn uniform_baseline_reads_16() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(slvm(&["synth", "--n", "2", "--out", p(&d.path().join("c"))]), 0);
    let out = d.path().join("e");
    assert_eq!(slvm(&["eval", "--model", "uniform", "--data", p(&d.path().join("c")), "--out", p(&out)]), 0);
    let rows = parse_report(&fs::read_to_string(out.join("table.csv")).unwrap()).unwrap();
    assert_eq!(format!("{:.2}", rows[0].bpf), "16.00");
    let rec = MetricsRecord::from_csv(&fs::read_to_string(out.join("eval.csv")).unwrap()).unwrap();
    assert!((rec.bpf().unwrap() - 16.0).abs() < 1e-12);
}

#[test]
fn resolved_config_reruns_bit_identically() {
    let d = tempfile::tempdir().unwrap();
    let cfg = setup(d.path());
    let corpus = d.path().join("corpus");
    let a = d.path().join("a");
    assert_eq!(slvm(&["train", "--config", p(&cfg), "--data", p(&corpus), "--val", p(&corpus), "--out", p(&a)]), 0);
    let b = d.path().join("b");
    assert_eq!(slvm(&["train", "--config", p(&a.join(RESOLVED_NAME)), "--out", p(&b)]), 0);
    for name in ["metrics.csv", commands::CHECKPOINT_NAME] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let resolved = RunConfig::load(b.join(RESOLVED_NAME)).unwrap();
    assert_eq!(resolved.model.kind, ModelKind::Vrnn);
    assert_eq!(resolved.train.max_steps, 3);

    // eval on the checkpoint agrees with the last validation row up to
    // single-sample noise
    let e = d.path().join("e");
    let ck = a.join(commands::CHECKPOINT_NAME);
    assert_eq!(slvm(&["eval", "--checkpoint", p(&ck), "--data", p(&corpus), "--out", p(&e)]), 0);
    let eval_bpf = parse_report(&fs::read_to_string(e.join("table.csv")).unwrap()).unwrap()[0].bpf;
    let log = fs::read_to_string(a.join("metrics.csv")).unwrap();
    let last_val: f64 = log.lines().last().unwrap().split(',').nth(4).unwrap().parse().unwrap();
    eprintln!("eval {eval_bpf:.4} vs train-log validation {last_val:.4}");
    assert!((eval_bpf - last_val).abs() < 0.5);

    let s = d.path().join("s");
    assert_eq!(slvm(&["sample", "--checkpoint", p(&ck), "--n", "2", "--frames", "100", "--out", p(&s)]), 0);
    let w = read_wav(s.join("sample_001.wav")).unwrap();
    assert_eq!((w.samples.len(), w.sample_rate), (100, 16000));

    let r = d.path().join("r");
    assert_eq!(slvm(&["report", p(&e.join("table.csv")), "--out", p(&r)]), 0);
    let rows = parse_report(&fs::read_to_string(r.join("report.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0].model, "vrnn");
    assert!(rows[1..].iter().all(|r| r.model == "FLAC" && r.s.is_none()));
}

#[test]
fn probe_writes_all_outputs() {
    let d = tempfile::tempdir().unwrap();
    let cfg = setup(d.path());
    let corpus = d.path().join("corpus");
    let t = d.path().join("t");
    assert_eq!(slvm(&["train", "--config", p(&cfg), "--data", p(&corpus), "--out", p(&t)]), 0);
    let out = d.path().join("p");
    let ck = t.join(commands::CHECKPOINT_NAME);
    assert_eq!(slvm(&["probe", "--config", p(&cfg), "--checkpoint", p(&ck), "--data", p(&corpus), "--out", p(&out)]), 0);
    let per = parse_per_csv(&fs::read_to_string(out.join("per.csv")).unwrap()).unwrap();
    // layers z and mel, two budgets each
    assert_eq!(per.len(), 4);
    assert!(per.iter().all(|r| (0.0..=10.0).contains(&r.per)));
    let knn = fs::read_to_string(out.join("knn.csv")).unwrap();
    assert!(knn.starts_with("representation,dims,k,accuracy,null_accuracy\n"));
    assert!(fs::read_to_string(out.join("lda_scatter.csv")).unwrap().lines().count() > 1);
    assert!(out.join("reps/z/representations.bin").is_file());
    assert!(out.join("reps/mel/spans.txt").is_file());
}
