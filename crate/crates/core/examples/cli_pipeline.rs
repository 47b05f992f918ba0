//! The full command-line workflow driven in-process: synthesize a corpus,
//! train, evaluate, sample, probe and build the report.
//!
//! cargo run --release --example cli_pipeline

use slvm::cli::{commands::CHECKPOINT_NAME, run};

const CONFIG: &str = r#"
[synth]
count = 6
min_len = 800
max_len = 1200

[model]
kind = "srnn"
stack = 16
bit_depth = 8

[train]
lr = 3e-3
max_steps = 60
val_every = 30

[probe]
budgets = ["10m", "3.7h"]
test_fraction = 0.34

[probe.asr]
width = 8
layers = 1
steps = 100
n_resample = 2
lda_dims = 1
"#;

fn slvm(args: &[&str]) {
    println!("$ slvm {}", args.join(" "));
    let code = run(std::iter::once("slvm").chain(args.iter().copied()));
    assert_eq!(code, 0, "slvm {} exited with {code}", args[0]);
}

fn main() -> std::io::Result<()> {
    let dir = tempfile::tempdir()?;
    let d = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    std::fs::write(d("run.toml"), CONFIG)?;
    let ck = format!("{}/{CHECKPOINT_NAME}", d("train"));

    slvm(&["synth", "--config", &d("run.toml"), "--seed", "1", "--out", &d("corpus")]);
    slvm(&["synth", "--config", &d("run.toml"), "--seed", "2", "--n", "2", "--out", &d("val")]);
    slvm(&["train", "--config", &d("run.toml"), "--data", &d("corpus"), "--val", &d("val"), "--out", &d("train")]);
    slvm(&["eval", "--checkpoint", &ck, "--data", &d("val"), "--out", &d("eval")]);
    slvm(&["eval", "--model", "uniform", "--config", &d("run.toml"), "--data", &d("val"), "--out", &d("uniform")]);
    slvm(&["sample", "--checkpoint", &ck, "--n", "2", "--frames", "1600", "--out", &d("samples")]);
    slvm(&["probe", "--config", &d("run.toml"), "--checkpoint", &ck, "--data", &d("corpus"), "--out", &d("probe")]);
    let tables = [format!("{}/table.csv", d("eval")), format!("{}/table.csv", d("uniform"))];
    slvm(&["report", &tables[0], &tables[1], "--out", &d("report")]);

    println!("\n{}", std::fs::read_to_string(format!("{}/per.csv", d("probe")))?);
    Ok(())
}
