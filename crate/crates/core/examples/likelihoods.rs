//! Output likelihoods and the data-independent reference rates.
//!
//! cargo run --release --example likelihoods

use slvm::audio::{codec, synth_dataset, GeneratorConfig};
use slvm::dists::{
    baseline_fit_dmol, baseline_uniform, dmol_log_prob, gaussian_log_prob, max_gaussian_ll, DMoLParams, FitOptions,
    GaussianParams,
};
use slvm::Result;

fn main() -> Result<()> {
    // A continuous density has no ceiling: shrinking the variance floor raises
    // the attainable per-frame log-likelihood without bound.
    for sigma in [1.0, 0.1, 0.01, 0.001] {
        println!("sigma_min {sigma:<6} max per-frame log N = {:+.5} nats", max_gaussian_ll(sigma, 1)?);
    }
    let g = GaussianParams::new(vec![0.25], vec![-20.0], 1e-4)?;
    println!("log N(mu; mu, floor 1e-4) = {:.5}", gaussian_log_prob(&g, &[0.25])?);

    // A discretized mixture of logistics is a proper distribution over the grid.
    let p = DMoLParams::new(vec![0.2, -0.4], vec![-0.3, 0.5], vec![-3.0, -4.0], 8)?;
    let total: f64 = (0..codec::grid_size(8)).map(|i| dmol_log_prob(&p, codec::grid_value(i, 8)).unwrap().exp()).sum();
    println!("DMoL mass over the 8-bit grid: {total:.12}");

    let cfg = GeneratorConfig { count: 2, ..GeneratorConfig::default() };
    let data = synth_dataset(&cfg, 0)?;
    let frames: Vec<f64> = data.iter().flat_map(|s| s.values.iter().copied()).collect();
    println!("uniform baseline: {:.2} bits/frame", baseline_uniform(16)?);
    let fit = baseline_fit_dmol(&frames, 16, &FitOptions::default())?;
    println!("fitted i.i.d. DMoL: {:.3} bits/frame after {} iterations", fit.bpf, fit.iterations);
    Ok(())
}
