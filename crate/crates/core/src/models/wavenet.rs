use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{dilation_schedule, Conv, Init, ResidualStack};
use super::{output, rows_of, Carry, ElboGraph, LatentLayer, LatentTrajectory, ModelConfig, Noise, SequenceModel, Window};
use crate::error::Result;
use crate::numcore::{Bound, ParamStore, Tape, Tensor, Var};

/// `blocks * (2^layers - 1) + 1` for kernel-2 layers with doubling dilations.
pub fn wavenet_receptive_field(blocks: usize, layers: usize) -> usize {
    blocks * ((1 << layers) - 1) + 1
}

/// Causal dilated convolutions over the shifted input.
pub struct WaveNet {
    cfg: ModelConfig,
    store: ParamStore,
    input: Conv,
    stack: ResidualStack,
    post1: Conv,
    post2: Conv,
}

impl WaveNet {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init {
            store: &mut store,
            rng: &mut rng,
        };
        let dc = cfg.dc;
        let input = init.conv("wavenet.in", cfg.stack, dc, 1);
        let dil = dilation_schedule(cfg.wavenet_blocks, cfg.wavenet_layers);
        let stack = init.residual_stack("wavenet.stack", dc, Some(dc), &dil);
        let post1 = init.conv("wavenet.post1", dc, dc, 1);
        let post2 = init.conv("wavenet.post2", dc, cfg.stack * cfg.head_width(), 1);
        Ok(Self {
            cfg,
            store,
            input,
            stack,
            post1,
            post2,
        })
    }

    /// Output parameters `[n, s * width]` and skip features `[dc, n]` for
    /// shifted inputs `[n, s]`.
    fn run(&self, tape: &mut Tape, p: &Bound, shifted: Tensor) -> Result<(Var, Var)> {
        let x = tape.constant(shifted);
        let x = tape.transpose(x)?;
        let h = self.input.pointwise(tape, p, x)?;
        let (_, skip) = self.stack.forward(tape, p, h, self.cfg.dc)?;
        let feat = tape.tanh(skip.expect("at least one layer"))?;
        let o = self.post1.pointwise(tape, p, feat)?;
        let o = tape.tanh(o)?;
        let o = self.post2.pointwise(tape, p, o)?;
        Ok((tape.transpose(o)?, feat))
    }
}

impl SequenceModel for WaveNet {
    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn receptive_field(&self) -> Option<usize> {
        Some(self.stack.receptive_field())
    }

    fn forward(
        &self,
        tape: &mut Tape,
        p: &Bound,
        win: &Window,
        _carry: &Carry,
        _noise: &Noise,
        rec: Option<&mut LatentTrajectory>,
    ) -> Result<(ElboGraph, Carry)> {
        let (out, feat) = self.run(tape, p, win.shifted_inputs())?;
        let (targets, weights, frames) = win.targets();
        let recon = output::log_lik(tape, &self.cfg, out, &targets, &weights)?;
        if let Some(traj) = rec {
            super::record_outputs(tape, out, win, traj);
            let ft = tape.transpose(feat)?;
            let mut layer = LatentLayer::new("skip", 1, false);
            for (i, r) in rows_of(tape, ft).into_iter().enumerate().skip(win.count_from - win.start) {
                layer.steps.push(win.start + i);
                layer.samples.push(r.clone());
                layer.means.push(r);
            }
            traj.layers.push(layer);
        }
        Ok((ElboGraph { recon, kl: Vec::new(), frames }, Carry::default()))
    }

    fn sample_steps(&self, steps: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let s = self.cfg.stack;
        let rf = self.stack.receptive_field();
        let mut out: Vec<f64> = Vec::with_capacity(steps * s);
        for t in 0..steps {
            // shifted inputs for steps t-rf+1 ..= t
            let first = t.saturating_sub(rf - 1);
            let n = t - first + 1;
            let mut data = vec![0.0; n * s];
            for i in 0..n {
                let step = first + i;
                if step >= 1 {
                    data[i * s..(i + 1) * s].copy_from_slice(&out[(step - 1) * s..step * s]);
                }
            }
            let mut tape = Tape::new();
            let p = self.store.bind(&mut tape, false);
            let (params, _) = self.run(&mut tape, &p, Tensor::matrix(n, s, data)?)?;
            let last = tape.value(params).row_slice(n - 1).to_vec();
            out.extend(output::sample_step(&self.cfg, &last, rng));
        }
        Ok(out)
    }
}
