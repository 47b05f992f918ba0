use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::layers::{Conv, Gru, Init, Mlp};
use super::{
    output, rows_of, split_gaussian, Carry, ElboGraph, KlRows, LatentLayer, LatentTrajectory, ModelConfig, Noise,
    SequenceModel, Window,
};
use crate::dists::reparam_var;
use crate::error::{ensure, Result};
use crate::numcore::{Bound, ConvGeom, ParamStore, Tape, Tensor, Var};

/// Update sets `T_l = {t in 1..=T : (t - 1) mod s_l = 0}` with
/// `s_l = c^(l-1) s_1`, one list per layer, bottom first.
pub fn cwvae_schedule(t_max: usize, s1: usize, c: usize, layers: usize) -> Result<Vec<Vec<usize>>> {
    ensure!(c >= 2, "stride factor c must be >= 2, got {c}");
    ensure!(s1 >= 1 && layers >= 1, "need s_1 >= 1 and at least one layer");
    Ok((0..layers)
        .map(|l| {
            let sl = s1 * c.pow(l as u32);
            (1..=t_max).step_by(sl).collect()
        })
        .collect())
}

/// `J_t`: 1-based layers whose latent updates at 1-based step `t`.
pub fn update_layers(t: usize, strides: &[usize]) -> Vec<usize> {
    strides
        .iter()
        .enumerate()
        .filter(|(_, &s)| (t - 1) % s == 0)
        .map(|(l, _)| l + 1)
        .collect()
}

struct LayerNets {
    cell: Gru,
    prior: Mlp,
    post: Mlp,
}

/// Clockwork hierarchy. Layer `l` keeps a recurrent state updated every
/// `s_l` steps from its previous latent and the latent above; a strided conv
/// ladder embeds the matching span of `x` for the posterior. Observations
/// are decoded from the bottom layer's cell state by a transposed conv, with
/// no autoregression on `x`.
pub struct CwVae {
    cfg: ModelConfig,
    store: ParamStore,
    strides: Vec<usize>,
    enc0: Conv,
    enc: Vec<(Conv, Conv)>,
    nets: Vec<LayerNets>,
    dec: Conv,
    post1: Conv,
    post2: Conv,
}

impl CwVae {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let strides = cfg.strides();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init {
            store: &mut store,
            rng: &mut rng,
        };
        let (s, dc, dd, dz, c, nl) = (cfg.stack, cfg.dc, cfg.dd, cfg.dz, cfg.factor, cfg.layers);
        let enc0 = init.conv("cwvae.enc0", s, dc, cfg.stride);
        let enc = (1..nl)
            .map(|l| (init.conv(&format!("cwvae.enc{l}"), dc, dc, c), init.conv(&format!("cwvae.enc{l}.lin"), dc, dc, c)))
            .collect();
        let nets = (0..nl)
            .map(|l| {
                let ctx = if l + 1 < nl { dz } else { 0 };
                LayerNets {
                    cell: init.gru(&format!("cwvae.cell{l}"), dz + ctx, dd),
                    prior: init.mlp(&format!("cwvae.prior{l}"), dd, dz, 2 * dz),
                    post: init.mlp(&format!("cwvae.post{l}"), dd + dc, dz, 2 * dz),
                }
            })
            .collect();
        let dec = init.conv_transpose("cwvae.dec", dz + dd, dc, cfg.stride);
        let post1 = init.conv("cwvae.post1", dc, dc, 1);
        let post2 = init.conv("cwvae.post2", dc, s * cfg.head_width(), 1);
        Ok(Self {
            cfg,
            store,
            strides,
            enc0,
            enc,
            nets,
            dec,
            post1,
            post2,
        })
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    fn top_stride(&self) -> usize {
        *self.strides.last().expect("at least one layer")
    }

    /// Per-layer embeddings `[n_l, dc]` of zero-padded inputs `[n_pad, s]`.
    fn encode(&self, tape: &mut Tape, p: &Bound, x: Tensor) -> Result<Vec<Var>> {
        let x = tape.constant(x);
        let x = tape.transpose(x)?;
        let e = self.enc0.forward(tape, p, x, ConvGeom::strided(self.cfg.stride))?;
        let mut e = tape.tanh(e)?;
        let mut out = vec![tape.transpose(e)?];
        for (conv, lin) in &self.enc {
            let g = ConvGeom::strided(self.cfg.factor);
            let h = conv.forward(tape, p, e, g)?;
            let h = tape.tanh(h)?;
            let r = lin.forward(tape, p, e, g)?;
            e = tape.add(h, r)?;
            out.push(tape.transpose(e)?);
        }
        Ok(out)
    }

    /// Output parameters `[n_1 * s_1, s * width]` from bottom-layer latents
    /// and cell states (`[n_1, dz]`, `[n_1, dd]`). Observations never enter.
    fn decode(&self, tape: &mut Tape, p: &Bound, z: Var, d: Var) -> Result<Var> {
        let zd = tape.concat(&[z, d], 1)?;
        let zd = tape.transpose(zd)?;
        let h = self.dec.transpose(tape, p, zd, self.cfg.stride)?;
        let h = tape.tanh(h)?;
        let o = self.post1.pointwise(tape, p, h)?;
        let o = tape.tanh(o)?;
        let o = self.post2.pointwise(tape, p, o)?;
        tape.transpose(o)
    }

    /// Output parameters for the bottom-layer entries of a trajectory.
    pub fn decode_latents(&self, traj: &LatentTrajectory) -> Result<Tensor> {
        let layer = traj.layer("z1").ok_or_else(|| crate::Error::Contract("trajectory has no layer z1".into()))?;
        ensure!(!layer.samples.is_empty() && layer.states.len() == layer.samples.len(), "layer z1 lacks states");
        let n = layer.samples.len();
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape, false);
        let z = tape.constant(Tensor::matrix(n, self.cfg.dz, layer.samples.concat())?);
        let d = tape.constant(Tensor::matrix(n, self.cfg.dd, layer.states.concat())?);
        let out = self.decode(&mut tape, &p, z, d)?;
        Ok(tape.value(out).clone())
    }

    fn initial(&self, tape: &mut Tape, carry: &Carry) -> Vec<(Var, Var)> {
        (0..self.nets.len())
            .map(|l| match (carry.0.get(2 * l), carry.0.get(2 * l + 1)) {
                (Some(d), Some(z)) => (tape.constant(d.clone()), tape.constant(z.clone())),
                _ => (
                    tape.constant(Tensor::zeros(&[1, self.cfg.dd])),
                    tape.constant(Tensor::zeros(&[1, self.cfg.dz])),
                ),
            })
            .collect()
    }

    /// One cell update: new state and prior parameters.
    fn advance(&self, tape: &mut Tape, p: &Bound, l: usize, d: Var, z_prev: Var, ctx: Option<Var>) -> Result<(Var, Var)> {
        let net = &self.nets[l];
        let gin = match ctx {
            Some(c) => tape.concat(&[z_prev, c], 1)?,
            None => z_prev,
        };
        let gx = net.cell.project(tape, p, gin)?;
        let d = net.cell.step(tape, p, gx, d)?;
        let prior = net.prior.forward(tape, p, d)?;
        Ok((d, prior))
    }
}

impl SequenceModel for CwVae {
    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn step_multiple(&self) -> usize {
        self.top_stride()
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
        let top = self.top_stride();
        ensure!(win.start % top == 0, "CW-VAE windows must start on a multiple of {top} steps");
        let (s, n) = (win.stack(), win.len());
        let n_pad = n.div_ceil(top) * top;
        let mut xdata = win.inputs().into_data();
        xdata.resize(n_pad * s, 0.0);
        let emb = self.encode(tape, p, Tensor::matrix(n_pad, s, xdata)?)?;

        let nl = self.nets.len();
        let mut state = self.initial(tape, carry);
        let mut above: Vec<Var> = Vec::new();
        let mut kls = vec![None; nl];
        let mut layers = Vec::new();
        let mut bottom = (Vec::new(), Vec::new());
        for l in (0..nl).rev() {
            let sl = self.strides[l];
            let n_l = n_pad / sl;
            let (mut d, mut z) = state[l];
            let mut kl = KlRows::default();
            let mut zs = Vec::with_capacity(n_l);
            let mut ds = Vec::with_capacity(n_l);
            let mut layer = LatentLayer::new(format!("z{}", l + 1), sl, true);
            for j in 0..n_l {
                let ctx = (l + 1 < nl).then(|| above[j / self.cfg.factor]);
                let prior;
                (d, prior) = self.advance(tape, p, l, d, z, ctx)?;
                let pq = split_gaussian(tape, prior)?;
                let qq = if self.cfg.tie_posterior {
                    pq
                } else {
                    let e = tape.slice(emb[l], 0, j, 1)?;
                    let qin = tape.concat(&[d, e], 1)?;
                    let post = self.nets[l].post.forward(tape, p, qin)?;
                    split_gaussian(tape, post)?
                };
                let t = win.start + j * sl;
                z = reparam_var(tape, qq.0, qq.1, &noise.row(l, t / sl, self.cfg.dz))?;
                zs.push(z);
                ds.push(d);
                if win.counts_step(t) {
                    kl.push(qq, pq);
                    if rec.is_some() {
                        layer.steps.push(t);
                        layer.samples.push(tape.value(z).data().to_vec());
                        layer.means.push(tape.value(qq.0).data().to_vec());
                        layer.prior_means.push(tape.value(pq.0).data().to_vec());
                        layer.states.push(tape.value(d).data().to_vec());
                    }
                }
            }
            kls[l] = Some(kl.total(tape)?);
            layers.push(layer);
            state[l] = (d, z);
            if l == 0 {
                bottom = (zs, ds);
            } else {
                above = zs;
            }
        }
        let zm = tape.concat(&bottom.0, 0)?;
        let dm = tape.concat(&bottom.1, 0)?;
        let out = self.decode(tape, p, zm, dm)?;
        let out = tape.slice(out, 0, 0, n)?;
        let (targets, weights, frames) = win.targets();
        let recon = output::log_lik(tape, &self.cfg, out, &targets, &weights)?;
        if let Some(traj) = rec {
            super::record_outputs(tape, out, win, traj);
            layers.reverse();
            traj.layers.extend(layers);
        }
        let next = Carry(
            state
                .iter()
                .flat_map(|&(d, z)| [tape.value(d).clone(), tape.value(z).clone()])
                .collect(),
        );
        let kl = kls.into_iter().map(|k| k.expect("every layer has a KL")).collect();
        Ok((ElboGraph { recon, kl, frames }, next))
    }

    /// Top-down prior sampling, then one decode. Never reads generated frames.
    fn sample_steps(&self, steps: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let top = self.top_stride();
        let n_pad = steps.div_ceil(top) * top;
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape, false);
        let mut state = self.initial(&mut tape, &Carry::default());
        let nl = self.nets.len();
        let mut above: Vec<Var> = Vec::new();
        let mut bottom = (Vec::new(), Vec::new());
        for l in (0..nl).rev() {
            let (mut d, mut z) = state[l];
            let mut zs = Vec::new();
            let mut ds = Vec::new();
            for j in 0..n_pad / self.strides[l] {
                let ctx = (l + 1 < nl).then(|| above[j / self.cfg.factor]);
                let prior;
                (d, prior) = self.advance(&mut tape, &p, l, d, z, ctx)?;
                let (pm, plv) = split_gaussian(&mut tape, prior)?;
                let eps = Tensor::row((0..self.cfg.dz).map(|_| StandardNormal.sample(rng)).collect());
                z = reparam_var(&mut tape, pm, plv, &eps)?;
                zs.push(z);
                ds.push(d);
            }
            state[l] = (d, z);
            if l == 0 {
                bottom = (zs, ds);
            } else {
                above = zs;
            }
        }
        let zm = tape.concat(&bottom.0, 0)?;
        let dm = tape.concat(&bottom.1, 0)?;
        let out = self.decode(&mut tape, &p, zm, dm)?;
        let rows = rows_of(&tape, out);
        Ok(rows.iter().take(steps).flat_map(|r| output::sample_step(&self.cfg, r, rng)).collect())
    }
}
