//! Output distribution heads: `[steps, s * width]` parameter rows.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{ModelConfig, OutputKind};
use crate::audio::quantize;
use crate::dists::{dmol, dmol_log_lik, gaussian_log_lik};
use crate::error::Result;
use crate::numcore::{Tape, Var};

/// Weighted log-likelihood of flat per-frame targets.
pub(crate) fn log_lik(tape: &mut Tape, cfg: &ModelConfig, params: Var, targets: &[f64], weights: &[f64]) -> Result<Var> {
    let w = cfg.head_width();
    let frames = tape.value(params).numel() / w;
    let per_frame = tape.reshape(params, vec![frames, w])?;
    Ok(match cfg.output {
        OutputKind::Dmol => dmol_log_lik(tape, per_frame, targets, weights, cfg.bit_depth)?.0,
        OutputKind::Gaussian => {
            let mean = tape.slice(per_frame, 1, 0, 1)?;
            let log_var = tape.slice(per_frame, 1, 1, 1)?;
            gaussian_log_lik(tape, mean, log_var, targets, weights, cfg.var_floor)?.0
        }
    })
}

/// Draws the `s` frames of one step from its parameter row.
pub(crate) fn sample_step(cfg: &ModelConfig, row: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let w = cfg.head_width();
    row.chunks(w)
        .map(|p| match cfg.output {
            OutputKind::Dmol => dmol::sample_row(p, cfg.bit_depth, rng),
            OutputKind::Gaussian => {
                let std = p[1].exp().max(cfg.var_floor).sqrt();
                let eps: f64 = rng.sample(StandardNormal);
                quantize((p[0] + std * eps).clamp(-1.0, 1.0), cfg.bit_depth)
            }
        })
        .collect()
}
