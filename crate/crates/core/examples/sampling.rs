//! Ancestral sampling from a briefly trained model, written out as WAV.
//!
//! cargo run --release --example sampling

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slvm::audio::codec::{decode, Encoding};
use slvm::audio::{synth_dataset, write_wav, GeneratorConfig, Wav};
use slvm::models::{build_model, sample, ModelConfig, ModelKind};
use slvm::train::{train, TrainConfig};
use slvm::Result;

fn main() -> Result<()> {
    let gen = GeneratorConfig { count: 2, bit_depth: 8, ..GeneratorConfig::default() };
    let data = synth_dataset(&gen, 3)?;
    let mcfg = ModelConfig { bit_depth: 8, ..ModelConfig::desk(ModelKind::Srnn, 16) };
    let mut model = build_model(&mcfg, 0)?;
    train(model.as_mut(), &data, &[], &TrainConfig { lr: 3e-3, max_steps: 150, ..TrainConfig::default() }, None, &mut |_| Ok(()))?;

    let dir = tempfile::tempdir()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for i in 0..3 {
        // 1000 frames is not a multiple of 16: the last step is truncated
        let values = sample(model.as_ref(), 1000, &mut rng)?;
        let linear = values.iter().map(|&y| decode(y, Encoding::MuLaw)).collect::<Result<Vec<_>>>()?;
        let rms = (linear.iter().map(|v| v * v).sum::<f64>() / linear.len() as f64).sqrt();
        let path = dir.path().join(format!("sample_{i}.wav"));
        write_wav(&path, &Wav::from_unit(16000, &linear))?;
        println!("{}: {} frames, rms {rms:.4}", path.file_name().unwrap().to_string_lossy(), linear.len());
    }
    Ok(())
}
