//! Train a VRNN, checkpoint halfway, resume, and confirm the resumed run
//! matches an uninterrupted one bit for bit.
//!
//! cargo run --release --example train_resume

use slvm::audio::{synth_dataset, GeneratorConfig};
use slvm::models::{build_model, ModelConfig, ModelKind};
use slvm::train::{train, Checkpoint, MetricRow, TrainConfig};
use slvm::Result;

fn main() -> Result<()> {
    let gen = GeneratorConfig { count: 4, bit_depth: 8, ..GeneratorConfig::default() };
    let data = synth_dataset(&gen, 1)?;
    let val = synth_dataset(&GeneratorConfig { count: 1, ..gen }, 2)?;
    let mcfg = ModelConfig { bit_depth: 8, ..ModelConfig::desk(ModelKind::Vrnn, 16) };
    let tcfg = TrainConfig { lr: 3e-3, max_steps: 40, val_every: 20, ..TrainConfig::default() };

    println!("{}", MetricRow::csv_header(1));
    let mut print = |r: &MetricRow| -> Result<()> {
        if r.split == "val" || r.step % 10 == 0 {
            println!("{}", r.to_csv());
        }
        Ok(())
    };
    let mut straight = build_model(&mcfg, 0)?;
    train(straight.as_mut(), &data, &val, &tcfg, None, &mut print)?;

    let half = TrainConfig { max_steps: 20, ..tcfg.clone() };
    let mut model = build_model(&mcfg, 0)?;
    let state = train(model.as_mut(), &data, &val, &half, None, &mut |_| Ok(()))?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("half.ckpt");
    Checkpoint { model: mcfg.clone(), train: half, params: model.params().clone(), state }.save(&path)?;

    let ck = Checkpoint::load(&path)?;
    let mut resumed = ck.restore()?;
    train(resumed.as_mut(), &data, &val, &tcfg, Some(ck.state), &mut |_| Ok(()))?;
    let same = resumed.params() == straight.params();
    println!("checkpoint {} bytes; resumed weights identical to uninterrupted run: {same}", std::fs::metadata(&path)?.len());
    assert!(same);
    Ok(())
}
