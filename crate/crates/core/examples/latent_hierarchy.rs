//! Inspect the latent layers of the hierarchical models: widths, update
//! periods and how far each posterior moves from its prior.
//!
//! cargo run --release --example latent_hierarchy

use slvm::audio::{synth_dataset, GeneratorConfig};
use slvm::models::{build_model, cwvae_schedule, infer, update_layers, ModelConfig, ModelKind, Noise};
use slvm::train::{train, TrainConfig};
use slvm::Result;

fn main() -> Result<()> {
    let gen = GeneratorConfig { count: 2, bit_depth: 8, ..GeneratorConfig::two_timescale() };
    let data = synth_dataset(&gen, 5)?;

    println!("clockwork schedule over 17 steps, base stride 1, factor 4:");
    for (l, steps) in cwvae_schedule(17, 1, 4, 3)?.iter().enumerate() {
        println!("  layer {}: {steps:?}", l + 1);
    }
    let active: Vec<String> = (1..=17).map(|t| format!("{t}:{:?}", update_layers(t, &[1, 4, 16]))).collect();
    println!("  layers updating per step: {}\n", active.join(" "));

    for kind in [ModelKind::Stcn, ModelKind::Cwvae] {
        let mcfg = ModelConfig { bit_depth: 8, ..ModelConfig::desk(kind, 16) };
        let mut model = build_model(&mcfg, 0)?;
        let tcfg = TrainConfig { lr: 3e-3, max_steps: 100, ..TrainConfig::default() };
        train(model.as_mut(), &data, &[], &tcfg, None, &mut |_| Ok(()))?;

        let x = data[0].stack(mcfg.stack)?;
        let traj = infer(model.as_ref(), &x, &Noise::seeded(0))?;
        println!("{} on {} steps:", kind.as_str(), x.num_steps());
        for l in &traj.layers {
            let gap: f64 = l
                .means
                .iter()
                .zip(&l.prior_means)
                .map(|(q, p)| q.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .sum::<f64>()
                / l.means.len().max(1) as f64;
            println!(
                "  {:<4} dim {:>3}  stride {:>3}  entries {:>4}  mean |q - p|^2 {gap:.4}",
                l.name,
                l.dim(),
                l.stride,
                l.steps.len()
            );
        }
    }
    Ok(())
}
