use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Init, Lstm, Mlp};
use super::{output, rows_of, Carry, ElboGraph, LatentLayer, LatentTrajectory, ModelConfig, Noise, SequenceModel, Window};
use crate::error::Result;
use crate::numcore::{Bound, ParamStore, Tape, Tensor, Var};

/// Encoder MLP, one recurrent cell, decoder MLP. The state after reading
/// `x_{t-1}` parameterizes `x_t`.
pub struct LstmModel {
    cfg: ModelConfig,
    store: ParamStore,
    enc: Mlp,
    cell: Lstm,
    dec: Mlp,
}

impl LstmModel {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init {
            store: &mut store,
            rng: &mut rng,
        };
        let (s, dc, dd) = (cfg.stack, cfg.dc, cfg.dd);
        let enc = init.mlp("lstm.enc", s, dc, dc);
        let cell = init.lstm("lstm.cell", dc, dd);
        let dec = init.mlp("lstm.dec", dd, dc, s * cfg.head_width());
        Ok(Self {
            cfg,
            store,
            enc,
            cell,
            dec,
        })
    }

    fn initial(&self, tape: &mut Tape, carry: &Carry) -> (Var, Var) {
        match carry.0.as_slice() {
            [h, c] => (tape.constant(h.clone()), tape.constant(c.clone())),
            _ => {
                let z = Tensor::zeros(&[1, self.cfg.dd]);
                (tape.constant(z.clone()), tape.constant(z))
            }
        }
    }
}

impl SequenceModel for LstmModel {
    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward(
        &self,
        tape: &mut Tape,
        p: &Bound,
        win: &Window,
        carry: &Carry,
        _noise: &Noise,
        rec: Option<&mut LatentTrajectory>,
    ) -> Result<(ElboGraph, Carry)> {
        let x = tape.constant(win.shifted_inputs());
        let e = self.enc.forward(tape, p, x)?;
        let gx = self.cell.project(tape, p, e)?;
        let (mut h, mut c) = self.initial(tape, carry);
        let mut hs = Vec::with_capacity(win.len());
        for i in 0..win.len() {
            let g = tape.slice(gx, 0, i, 1)?;
            (h, c) = self.cell.step(tape, p, g, h, c)?;
            hs.push(h);
        }
        let states = tape.concat(&hs, 0)?;
        let out = self.dec.forward(tape, p, states)?;
        let (targets, weights, frames) = win.targets();
        let recon = output::log_lik(tape, &self.cfg, out, &targets, &weights)?;
        if let Some(traj) = rec {
            super::record_outputs(tape, out, win, traj);
            let mut layer = LatentLayer::new("h", 1, false);
            let rows = rows_of(tape, states);
            for (i, r) in rows.into_iter().enumerate().skip(win.count_from - win.start) {
                layer.steps.push(win.start + i);
                layer.samples.push(r.clone());
                layer.means.push(r);
            }
            traj.layers.push(layer);
        }
        let next = Carry(vec![tape.value(h).clone(), tape.value(c).clone()]);
        Ok((ElboGraph { recon, kl: Vec::new(), frames }, next))
    }

    fn sample_steps(&self, steps: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let s = self.cfg.stack;
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape, false);
        let (mut h, mut c) = self.initial(&mut tape, &Carry::default());
        let mut prev = vec![0.0; s];
        let mut out = Vec::with_capacity(steps * s);
        for _ in 0..steps {
            let x = tape.constant(Tensor::row(prev.clone()));
            let e = self.enc.forward(&mut tape, &p, x)?;
            let g = self.cell.project(&mut tape, &p, e)?;
            (h, c) = self.cell.step(&mut tape, &p, g, h, c)?;
            let params = self.dec.forward(&mut tape, &p, h)?;
            prev = output::sample_step(&self.cfg, tape.value(params).data(), rng);
            out.extend_from_slice(&prev);
        }
        Ok(out)
    }
}
