//! Evaluate all six model families on held-out clips, whole and in
//! segments, and print the comparison table with the compressor references.
//!
//! cargo run --release --example evaluate_models

use slvm::audio::{synth_dataset, GeneratorConfig};
use slvm::eval::{evaluate, flac_references, format_report, ReportRow, SegmentConfig};
use slvm::models::{build_model, ModelConfig, ModelKind};
use slvm::train::{train, TrainConfig};
use slvm::Result;

fn main() -> Result<()> {
    let gen = GeneratorConfig { count: 4, bit_depth: 8, ..GeneratorConfig::two_timescale() };
    let data = synth_dataset(&gen, 1)?;
    let test = synth_dataset(&GeneratorConfig { count: 2, ..gen }, 2)?;

    let mut rows = Vec::new();
    for kind in ModelKind::ALL {
        let mcfg = ModelConfig { bit_depth: 8, ..ModelConfig::desk(kind, 16) };
        let mut model = build_model(&mcfg, 0)?;
        let tcfg = TrainConfig { lr: 3e-3, max_steps: 60, segment_length: 512, ..TrainConfig::default() };
        train(model.as_mut(), &data, &[], &tcfg, None, &mut |_| Ok(()))?;

        let whole = evaluate(model.as_ref(), &test, SegmentConfig::whole(), 0)?;
        let seg = evaluate(model.as_ref(), &test, SegmentConfig::steps(32), 0)?;
        let kl: Vec<String> = whole.kl_bpf()?.iter().map(|k| format!("{k:.3}")).collect();
        println!(
            "{:<8} whole {:.3}  segmented {:.3}  recon {:.3}  kl [{}]",
            kind.as_str(),
            whole.bpf()?,
            seg.bpf()?,
            whole.recon_bpf()?,
            kl.join(", ")
        );
        rows.push(ReportRow { s: Some(16), model: kind.as_str().into(), config: "desk".into(), bpf: whole.bpf()? });
    }
    rows.extend(flac_references().iter().map(|f| f.row()));
    print!("\n{}", format_report(&rows));
    Ok(())
}
