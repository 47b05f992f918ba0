use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::layers::{Gru, Init, Mlp};
use super::{
    output, split_gaussian, Carry, ElboGraph, KlRows, LatentLayer, LatentTrajectory, ModelConfig, Noise, SequenceModel,
    Window,
};
use crate::audio::StackedSequence;
use crate::dists::reparam_var;
use crate::error::Result;
use crate::numcore::{Bound, ParamStore, Tape, Tensor, Var};

/// Smoothing latent model. A forward recurrence `d_t` filters `x_{<t}`; a
/// backward recurrence `a_t` over `[x_t, d_t]` summarizes the future. The
/// prior sees `(z_{t-1}, d_t)`, the posterior `(z_{t-1}, a_t)`, the output
/// `(z_t, d_t)`. The backward state past the end of the sequence is zero.
pub struct Srnn {
    cfg: ModelConfig,
    store: ParamStore,
    phi_x: Mlp,
    fwd: Gru,
    bwd: Gru,
    prior: Mlp,
    post: Mlp,
    dec: Mlp,
}

impl Srnn {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init {
            store: &mut store,
            rng: &mut rng,
        };
        let (s, dc, dd, dz) = (cfg.stack, cfg.dc, cfg.dd, cfg.dz);
        let phi_x = init.mlp("srnn.phi_x", s, dc, dc);
        let fwd = init.gru("srnn.fwd", dc, dd);
        let bwd = init.gru("srnn.bwd", dc + dd, dd);
        let prior = init.mlp("srnn.prior", dz + dd, dz, 2 * dz);
        let post = init.mlp("srnn.post", dz + dd, dz, 2 * dz);
        let dec = init.mlp("srnn.dec", dz + dd, dc, s * cfg.head_width());
        Ok(Self {
            cfg,
            store,
            phi_x,
            fwd,
            bwd,
            prior,
            post,
            dec,
        })
    }

    fn zeros(&self, tape: &mut Tape, dim: usize) -> Var {
        tape.constant(Tensor::zeros(&[1, dim]))
    }

    /// `d_start .. d_{end-1}` from the state before `start`.
    fn forward_states(&self, tape: &mut Tape, p: &Bound, win: &Window, mut d: Var) -> Result<Vec<Var>> {
        let xs = tape.constant(win.shifted_inputs());
        let fx_prev = self.phi_x.forward(tape, p, xs)?;
        let gx = self.fwd.project(tape, p, fx_prev)?;
        let mut ds = Vec::with_capacity(win.len());
        for i in 0..win.len() {
            let g = tape.slice(gx, 0, i, 1)?;
            d = self.fwd.step(tape, p, g, d)?;
            ds.push(d);
        }
        Ok(ds)
    }

    /// `a_start .. a_{end-1}` from the state after `end - 1`.
    fn backward_states(&self, tape: &mut Tape, p: &Bound, win: &Window, ds: &[Var], mut a: Var) -> Result<Vec<Var>> {
        let xc = tape.constant(win.inputs());
        let fx = self.phi_x.forward(tape, p, xc)?;
        let dm = tape.concat(ds, 0)?;
        let bin = tape.concat(&[fx, dm], 1)?;
        let gx = self.bwd.project(tape, p, bin)?;
        let mut states = vec![a; win.len()];
        for i in (0..win.len()).rev() {
            let g = tape.slice(gx, 0, i, 1)?;
            a = self.bwd.step(tape, p, g, a)?;
            states[i] = a;
        }
        Ok(states)
    }
}

impl SequenceModel for Srnn {
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
        noise: &Noise,
        rec: Option<&mut LatentTrajectory>,
    ) -> Result<(ElboGraph, Carry)> {
        let (dd, dz) = (self.cfg.dd, self.cfg.dz);
        let (d0, mut z) = match carry.0.as_slice() {
            [d, z] => (tape.constant(d.clone()), tape.constant(z.clone())),
            _ => (self.zeros(tape, dd), self.zeros(tape, dz)),
        };
        let a_next = match win.lookahead {
            Some(a) => tape.constant(a.clone()),
            None => self.zeros(tape, dd),
        };
        let ds = self.forward_states(tape, p, win, d0)?;
        let a_states = self.backward_states(tape, p, win, &ds, a_next)?;

        let mut kl = KlRows::default();
        let mut dec_rows = Vec::with_capacity(win.len());
        let mut layer = LatentLayer::new("z", 1, true);
        for i in 0..win.len() {
            let t = win.start + i;
            let pin = tape.concat(&[z, ds[i]], 1)?;
            let prior = self.prior.forward(tape, p, pin)?;
            let pq = split_gaussian(tape, prior)?;
            let qq = if self.cfg.tie_posterior {
                pq
            } else {
                let qin = tape.concat(&[z, a_states[i]], 1)?;
                let post = self.post.forward(tape, p, qin)?;
                split_gaussian(tape, post)?
            };
            z = reparam_var(tape, qq.0, qq.1, &noise.row(0, t, dz))?;
            dec_rows.push(tape.concat(&[z, ds[i]], 1)?);
            if win.counts_step(t) {
                kl.push(qq, pq);
                if rec.is_some() {
                    layer.steps.push(t);
                    layer.samples.push(tape.value(z).data().to_vec());
                    layer.means.push(tape.value(qq.0).data().to_vec());
                    layer.prior_means.push(tape.value(pq.0).data().to_vec());
                }
            }
        }
        let dec_in = tape.concat(&dec_rows, 0)?;
        let out = self.dec.forward(tape, p, dec_in)?;
        let (targets, weights, frames) = win.targets();
        let recon = output::log_lik(tape, &self.cfg, out, &targets, &weights)?;
        let kl = vec![kl.total(tape)?];
        if let Some(traj) = rec {
            super::record_outputs(tape, out, win, traj);
            traj.layers.push(layer);
        }
        let d_last = *ds.last().expect("non-empty window");
        let next = Carry(vec![tape.value(d_last).clone(), tape.value(z).clone()]);
        Ok((ElboGraph { recon, kl, frames }, next))
    }

    /// Sweeps the deterministic recurrences segment by segment: left to
    /// right for the filter states at each segment start, then right to
    /// left for the backward state entering each segment.
    fn lookahead(&self, x: &StackedSequence, bounds: &[(usize, usize)]) -> Result<Vec<Option<Tensor>>> {
        let dd = self.cfg.dd;
        let mut starts = Vec::with_capacity(bounds.len());
        let mut d = Tensor::zeros(&[1, dd]);
        for &(s, e) in bounds {
            starts.push(d.clone());
            let win = Window::new(x, s, s, e)?;
            let mut tape = Tape::new();
            let p = self.store.bind(&mut tape, false);
            let d0 = tape.constant(d);
            let ds = self.forward_states(&mut tape, &p, &win, d0)?;
            d = tape.value(*ds.last().expect("non-empty")).clone();
        }
        let mut out = vec![None; bounds.len()];
        let mut a = Tensor::zeros(&[1, dd]);
        for (k, &(s, e)) in bounds.iter().enumerate().rev() {
            out[k] = Some(a.clone());
            let win = Window::new(x, s, s, e)?;
            let mut tape = Tape::new();
            let p = self.store.bind(&mut tape, false);
            let d0 = tape.constant(starts[k].clone());
            let ds = self.forward_states(&mut tape, &p, &win, d0)?;
            let a0 = tape.constant(a);
            let states = self.backward_states(&mut tape, &p, &win, &ds, a0)?;
            a = tape.value(states[0]).clone();
        }
        Ok(out)
    }

    fn sample_steps(&self, steps: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let (s, dd, dz) = (self.cfg.stack, self.cfg.dd, self.cfg.dz);
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape, false);
        let mut d = self.zeros(&mut tape, dd);
        let mut z = self.zeros(&mut tape, dz);
        let mut prev = vec![0.0; s];
        let mut out = Vec::with_capacity(steps * s);
        for _ in 0..steps {
            let xv = tape.constant(Tensor::row(prev.clone()));
            let fx = self.phi_x.forward(&mut tape, &p, xv)?;
            let g = self.fwd.project(&mut tape, &p, fx)?;
            d = self.fwd.step(&mut tape, &p, g, d)?;
            let pin = tape.concat(&[z, d], 1)?;
            let prior = self.prior.forward(&mut tape, &p, pin)?;
            let (pm, plv) = split_gaussian(&mut tape, prior)?;
            let eps = Tensor::row((0..dz).map(|_| StandardNormal.sample(rng)).collect());
            z = reparam_var(&mut tape, pm, plv, &eps)?;
            let din = tape.concat(&[z, d], 1)?;
            let params = self.dec.forward(&mut tape, &p, din)?;
            prev = output::sample_step(&self.cfg, tape.value(params).data(), rng);
            out.extend_from_slice(&prev);
        }
        Ok(out)
    }
}
