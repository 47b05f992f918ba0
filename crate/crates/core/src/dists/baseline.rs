//! Reference points for bpf tables: the uninformed uniform distribution and a
//! two-component DMoL fitted to the training frames.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use super::dmol::{dmol_log_lik, DMoLParams};
use crate::audio::{grid_index, grid_value, on_grid};
use crate::error::{ensure, Result};
use crate::numcore::{ParamStore, Tape, Tensor};
use crate::train::{adam_step, AdamConfig, AdamState};

/// Bits per frame of the uniform distribution over the `b`-bit grid.
pub fn baseline_uniform(bit_depth: u32) -> Result<f64> {
    ensure!(bit_depth >= 1, "bit depth must be >= 1");
    Ok(bit_depth as f64)
}

/// Options for [`baseline_fit_dmol`].
#[derive(Clone, Debug)]
pub struct FitOptions {
    pub components: usize,
    pub lr: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            components: 2,
            lr: 0.02,
            tol: 1e-6,
            max_iters: 20_000,
        }
    }
}

/// Fitted marginal plus its achieved cost.
#[derive(Clone, Debug)]
pub struct FittedBaseline {
    pub params: DMoLParams,
    pub bpf: f64,
    pub iterations: usize,
}

/// Gradient ascent on the marginal DMoL likelihood of every training frame.
///
/// Frames are collapsed to a histogram over grid points, so each iteration
/// costs O(distinct values). Stops when an iteration improves the
/// log-likelihood by less than `tol` relative.
pub fn baseline_fit_dmol(frames: &[f64], bit_depth: u32, opts: &FitOptions) -> Result<FittedBaseline> {
    ensure!(!frames.is_empty(), "cannot fit a baseline to zero frames");
    ensure!(opts.components >= 1, "need at least one component");
    let mut hist: BTreeMap<u64, f64> = BTreeMap::new();
    for &x in frames {
        ensure!(on_grid(x, bit_depth), "frame {x} is not on the {bit_depth}-bit grid");
        *hist.entry(grid_index(x, bit_depth)).or_default() += 1.0;
    }
    let targets: Vec<f64> = hist.keys().map(|&k| grid_value(k, bit_depth)).collect();
    let weights: Vec<f64> = hist.values().copied().collect();
    let n = frames.len() as f64;

    // spread initial means over the data quantiles
    let k = opts.components;
    let mut sorted = frames.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n;
    let std = (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-3);
    let mut init = vec![0.0; 3 * k];
    for j in 0..k {
        init[k + j] = sorted[((j as f64 + 0.5) / k as f64 * (n - 1.0)) as usize];
        init[2 * k + j] = (std / k as f64).ln();
    }
    let mut store = ParamStore::new();
    let id = store.insert("baseline.dmol", Tensor::row(init));
    let mut adam = AdamState::new(&store);
    let cfg = AdamConfig {
        lr: opts.lr,
        ..AdamConfig::default()
    };

    let mut tape = Tape::new();
    let mut prev = f64::NEG_INFINITY;
    let mut best = (f64::NEG_INFINITY, store.get(id).clone());
    let mut iterations = 0;
    while iterations < opts.max_iters {
        tape.clear();
        let bound = store.bind(&mut tape, true);
        let rows = tape.expand_rows(bound.var(id), targets.len())?;
        let (ll, _) = dmol_log_lik(&mut tape, rows, &targets, &weights, bit_depth)?;
        let value = tape.value(ll).item();
        if value > best.0 {
            best = (value, store.get(id).clone());
        }
        iterations += 1;
        if prev.is_finite() && (value - prev).abs() < opts.tol * prev.abs() {
            break;
        }
        prev = value;
        let neg = tape.neg(ll)?;
        tape.backward(neg)?;
        let grads = bound.grads(&tape, &store);
        adam_step(&mut store, &grads, &mut adam, &cfg)?;
    }
    let params = DMoLParams::from_row(best.1.data(), bit_depth)?;
    Ok(FittedBaseline {
        params,
        bpf: -best.0 / LN_2 / n,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{synth_dataset, GeneratorConfig};
    use crate::dists::dmol::dmol_log_prob;

    #[test]
    fn uniform_is_bit_depth() {
        assert_eq!(baseline_uniform(16).unwrap(), 16.0);
        assert_eq!(baseline_uniform(8).unwrap(), 8.0);
        assert!(baseline_uniform(0).is_err());
    }

    #[test]
    fn fit_rejects_empty() {
        assert!(baseline_fit_dmol(&[], 8, &FitOptions::default()).is_err());
    }

    #[test]
    fn fitted_beats_uniform_and_reports_true_cost() {
        let cfg = GeneratorConfig {
            count: 2,
            bit_depth: 8,
            ..GeneratorConfig::default()
        };
        let data = synth_dataset(&cfg, 3).unwrap();
        let frames: Vec<f64> = data.iter().flat_map(|s| s.values.clone()).collect();
        let fit = baseline_fit_dmol(&frames, 8, &FitOptions::default()).unwrap();
        assert!(fit.bpf < 8.0, "{}", fit.bpf);
        let direct: f64 = frames.iter().map(|&x| dmol_log_prob(&fit.params, x).unwrap()).sum::<f64>();
        assert!((-direct / LN_2 / frames.len() as f64 - fit.bpf).abs() < 1e-9);
        assert_eq!(fit.params.components(), 2);
    }
}
