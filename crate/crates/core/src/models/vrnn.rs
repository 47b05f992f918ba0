use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::layers::{Gru, Init, Mlp};
use super::{
    output, split_gaussian, Carry, ElboGraph, KlRows, LatentLayer, LatentTrajectory, ModelConfig, Noise, SequenceModel,
    Window,
};
use crate::dists::reparam_var;
use crate::error::Result;
use crate::numcore::{Bound, ParamStore, Tape, Tensor, Var};

/// Filtering latent model: `d_t = GRU([phi_x(x_{t-1}), phi_z(z_{t-1})], d_{t-1})`,
/// prior from `d_t`, posterior from `[phi_x(x_t), d_t]`, output from
/// `[phi_z(z_t), d_t]`.
pub struct Vrnn {
    cfg: ModelConfig,
    store: ParamStore,
    phi_x: Mlp,
    phi_z: Mlp,
    cell: Gru,
    prior: Mlp,
    post: Mlp,
    dec: Mlp,
}

impl Vrnn {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init {
            store: &mut store,
            rng: &mut rng,
        };
        let (s, dc, dd, dz) = (cfg.stack, cfg.dc, cfg.dd, cfg.dz);
        let phi_x = init.mlp("vrnn.phi_x", s, dc, dc);
        let phi_z = init.mlp("vrnn.phi_z", dz, dc, dc);
        let cell = init.gru("vrnn.cell", 2 * dc, dd);
        let prior = init.mlp("vrnn.prior", dd, dz, 2 * dz);
        let post = init.mlp("vrnn.post", dc + dd, dz, 2 * dz);
        let dec = init.mlp("vrnn.dec", dc + dd, dc, s * cfg.head_width());
        Ok(Self {
            cfg,
            store,
            phi_x,
            phi_z,
            cell,
            prior,
            post,
            dec,
        })
    }

    fn initial(&self, tape: &mut Tape, carry: &Carry) -> (Var, Var) {
        match carry.0.as_slice() {
            [d, z] => (tape.constant(d.clone()), tape.constant(z.clone())),
            _ => (
                tape.constant(Tensor::zeros(&[1, self.cfg.dd])),
                tape.constant(Tensor::zeros(&[1, self.cfg.dz])),
            ),
        }
    }

    /// Advances the recurrence and returns `(d_t, prior params)`.
    fn transition(&self, tape: &mut Tape, p: &Bound, fx_prev: Var, fz_prev: Var, d: Var) -> Result<(Var, Var)> {
        let gin = tape.concat(&[fx_prev, fz_prev], 1)?;
        let gx = self.cell.project(tape, p, gin)?;
        let d = self.cell.step(tape, p, gx, d)?;
        let prior = self.prior.forward(tape, p, d)?;
        Ok((d, prior))
    }
}

impl SequenceModel for Vrnn {
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
        let n = win.len();
        let xs = tape.constant(win.shifted_inputs());
        let fx_prev_all = self.phi_x.forward(tape, p, xs)?;
        let xc = tape.constant(win.inputs());
        let fx_all = self.phi_x.forward(tape, p, xc)?;
        let (mut d, mut z) = self.initial(tape, carry);
        let mut fz = self.phi_z.forward(tape, p, z)?;
        let mut kl = KlRows::default();
        let mut dec_rows = Vec::with_capacity(n);
        let mut layer = LatentLayer::new("z", 1, true);
        for i in 0..n {
            let t = win.start + i;
            let fx_prev = tape.slice(fx_prev_all, 0, i, 1)?;
            let prior;
            (d, prior) = self.transition(tape, p, fx_prev, fz, d)?;
            let pq = split_gaussian(tape, prior)?;
            let qq = if self.cfg.tie_posterior {
                pq
            } else {
                let fx = tape.slice(fx_all, 0, i, 1)?;
                let qin = tape.concat(&[fx, d], 1)?;
                let post = self.post.forward(tape, p, qin)?;
                split_gaussian(tape, post)?
            };
            z = reparam_var(tape, qq.0, qq.1, &noise.row(0, t, self.cfg.dz))?;
            fz = self.phi_z.forward(tape, p, z)?;
            dec_rows.push(tape.concat(&[fz, d], 1)?);
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
        let next = Carry(vec![tape.value(d).clone(), tape.value(z).clone()]);
        Ok((ElboGraph { recon, kl, frames }, next))
    }

    fn sample_steps(&self, steps: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let (s, dz) = (self.cfg.stack, self.cfg.dz);
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape, false);
        let (mut d, z0) = self.initial(&mut tape, &Carry::default());
        let mut fz = self.phi_z.forward(&mut tape, &p, z0)?;
        let mut prev = vec![0.0; s];
        let mut out = Vec::with_capacity(steps * s);
        for _ in 0..steps {
            let xv = tape.constant(Tensor::row(prev.clone()));
            let fx_prev = self.phi_x.forward(&mut tape, &p, xv)?;
            let prior;
            (d, prior) = self.transition(&mut tape, &p, fx_prev, fz, d)?;
            let (pm, plv) = split_gaussian(&mut tape, prior)?;
            let eps = Tensor::row((0..dz).map(|_| StandardNormal.sample(rng)).collect());
            let z = reparam_var(&mut tape, pm, plv, &eps)?;
            fz = self.phi_z.forward(&mut tape, &p, z)?;
            let din = tape.concat(&[fz, d], 1)?;
            let params = self.dec.forward(&mut tape, &p, din)?;
            prev = output::sample_step(&self.cfg, tape.value(params).data(), rng);
            out.extend_from_slice(&prev);
        }
        Ok(out)
    }
}
