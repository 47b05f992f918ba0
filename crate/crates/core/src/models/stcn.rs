use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::layers::{dilation_schedule, Conv, Init, Mlp, ResidualStack};
use super::{output, rows_of, split_gaussian, Carry, ElboGraph, LatentLayer, LatentTrajectory, ModelConfig, Noise, SequenceModel, Window};
use crate::dists::{gaussian_kl_var, reparam_var};
use crate::error::{ensure, Result};
use crate::numcore::{Bound, ParamStore, Tape, Tensor, Var};

/// Hierarchy widths, bottom first, halving upwards from `16 * base`. With
/// `base = 16`: `[256, 128, 64, 32, 16]` for five layers and `[256]` for one.
pub fn stcn_latent_dims(layers: usize, base: usize) -> Result<Vec<usize>> {
    ensure!((1..=5).contains(&layers), "STCN supports 1 to 5 latent layers, got {layers}");
    Ok((0..layers).map(|l| (base << 4) >> l).collect())
}

/// Starting log-variance of every prior and posterior. Unit-variance noise
/// swamps the decoder input at initialization and the latents collapse
/// before the decoder learns to read them.
const LOG_VAR_INIT: f64 = -4.0;

/// Ladder of dilated conv blocks over `x_{<=t}`; layer `l` reads the output
/// of its block. Latents have no transitions in time: the posterior at `t`
/// uses `(d_t, z_t^{l+1})`, the prior `(d_{t-1}, z_t^{l+1})`. A causal conv
/// decoder reads all layers' latents.
pub struct Stcn {
    cfg: ModelConfig,
    store: ParamStore,
    dims: Vec<usize>,
    input: Conv,
    blocks: Vec<ResidualStack>,
    prior: Vec<Mlp>,
    post: Vec<Mlp>,
    dec_in: Conv,
    dec: Option<ResidualStack>,
    post1: Conv,
    post2: Conv,
}

impl Stcn {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let dims = stcn_latent_dims(cfg.layers, cfg.dz)?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init {
            store: &mut store,
            rng: &mut rng,
        };
        let dc = cfg.dc;
        let input = init.conv("stcn.in", cfg.stack, dc, 1);
        let nb = cfg.wavenet_blocks.max(cfg.layers);
        let dil = dilation_schedule(1, cfg.wavenet_layers);
        let blocks = (0..nb).map(|b| init.residual_stack(&format!("stcn.enc{b}"), dc, None, &dil)).collect();
        let mut prior = Vec::new();
        let mut post = Vec::new();
        for (l, &dim) in dims.iter().enumerate() {
            let ctx = dims.get(l + 1).copied().unwrap_or(0);
            prior.push(init.mlp(&format!("stcn.prior{l}"), dc + ctx, dc, 2 * dim));
            post.push(init.mlp(&format!("stcn.post{l}"), dc + ctx, dc, 2 * dim));
        }
        for (l, &dim) in dims.iter().enumerate() {
            for m in [&prior[l], &post[l]] {
                init.store.get_mut(m.l2.b).data_mut()[dim..].iter_mut().for_each(|b| *b = LOG_VAR_INIT);
            }
        }
        let total: usize = dims.iter().sum();
        let dec_in = init.conv("stcn.dec_in", total, dc, 1);
        let dec = (cfg.decoder_layers > 0)
            .then(|| init.residual_stack("stcn.dec", dc, Some(dc), &dilation_schedule(1, cfg.decoder_layers)));
        let post1 = init.conv("stcn.post1", dc, dc, 1);
        let post2 = init.conv("stcn.post2", dc, cfg.stack * cfg.head_width(), 1);
        Ok(Self {
            cfg,
            store,
            dims,
            input,
            blocks,
            prior,
            post,
            dec_in,
            dec,
            post1,
            post2,
        })
    }

    pub fn latent_dims(&self) -> &[usize] {
        &self.dims
    }

    fn encoder_rf(&self) -> usize {
        1 + self.blocks.iter().map(|b| b.receptive_field() - 1).sum::<usize>()
    }

    fn decoder_rf(&self) -> usize {
        self.dec.as_ref().map_or(1, ResidualStack::receptive_field)
    }

    /// Per-layer deterministic features `[n, dc]` for inputs `[n, s]`.
    fn encode(&self, tape: &mut Tape, p: &Bound, x: Tensor) -> Result<Vec<Var>> {
        let x = tape.constant(x);
        let x = tape.transpose(x)?;
        let mut h = self.input.pointwise(tape, p, x)?;
        let mut outs = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (taps, _) = b.forward(tape, p, h, self.cfg.dc)?;
            h = *taps.last().expect("block has layers");
            outs.push(h);
        }
        let first = outs.len() - self.dims.len();
        outs[first..].iter().map(|&d| tape.transpose(d)).collect()
    }

    /// Output parameters `[n, s * width]` from concatenated latents `[n, sum dims]`.
    fn decode(&self, tape: &mut Tape, p: &Bound, z: Var) -> Result<Var> {
        let zt = tape.transpose(z)?;
        let h = self.dec_in.pointwise(tape, p, zt)?;
        let feat = match &self.dec {
            Some(stack) => stack.forward(tape, p, h, self.cfg.dc)?.1.expect("skip path"),
            None => h,
        };
        let o = tape.tanh(feat)?;
        let o = self.post1.pointwise(tape, p, o)?;
        let o = tape.tanh(o)?;
        let o = self.post2.pointwise(tape, p, o)?;
        tape.transpose(o)
    }

    /// `d` shifted down one row with a zero first row.
    fn delayed(&self, tape: &mut Tape, d: Var) -> Result<Var> {
        let n = tape.shape(d)[0];
        let zero = tape.constant(Tensor::zeros(&[1, self.cfg.dc]));
        if n == 1 {
            return Ok(zero);
        }
        let head = tape.slice(d, 0, 0, n - 1)?;
        tape.concat(&[zero, head], 0)
    }
}

impl SequenceModel for Stcn {
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
        Some(self.encoder_rf() + self.decoder_rf())
    }

    fn forward(
        &self,
        tape: &mut Tape,
        p: &Bound,
        win: &Window,
        _carry: &Carry,
        noise: &Noise,
        mut rec: Option<&mut LatentTrajectory>,
    ) -> Result<(ElboGraph, Carry)> {
        let n = win.len();
        let c0 = win.count_from - win.start;
        let ds = self.encode(tape, p, win.inputs())?;
        let nl = self.dims.len();
        let mut zs: Vec<Option<Var>> = vec![None; nl];
        let mut kl = vec![None; nl];
        let mut layers = Vec::new();
        for l in (0..nl).rev() {
            let dim = self.dims[l];
            let d_prev = self.delayed(tape, ds[l])?;
            let (pin, qin) = match zs.get(l + 1).copied().flatten() {
                Some(ctx) => (tape.concat(&[d_prev, ctx], 1)?, tape.concat(&[ds[l], ctx], 1)?),
                None => (d_prev, ds[l]),
            };
            let prior = self.prior[l].forward(tape, p, pin)?;
            let pq = split_gaussian(tape, prior)?;
            let qq = if self.cfg.tie_posterior {
                pq
            } else {
                let post = self.post[l].forward(tape, p, qin)?;
                split_gaussian(tape, post)?
            };
            let z = reparam_var(tape, qq.0, qq.1, &noise.rows(l, win.start, n, dim))?;
            zs[l] = Some(z);
            kl[l] = Some(if c0 < n {
                let sl = |t: &mut Tape, v: Var| t.slice(v, 0, c0, n - c0);
                let (a, b, c, d) = (sl(tape, qq.0)?, sl(tape, qq.1)?, sl(tape, pq.0)?, sl(tape, pq.1)?);
                gaussian_kl_var(tape, a, b, c, d)?
            } else {
                tape.constant(Tensor::scalar(0.0))
            });
            if rec.is_some() {
                let mut layer = LatentLayer::new(format!("z{}", l + 1), 1, true);
                let (zr, mr, pr) = (rows_of(tape, z), rows_of(tape, qq.0), rows_of(tape, pq.0));
                for i in c0..n {
                    layer.steps.push(win.start + i);
                    layer.samples.push(zr[i].clone());
                    layer.means.push(mr[i].clone());
                    layer.prior_means.push(pr[i].clone());
                }
                layers.push(layer);
            }
        }
        let zcat: Vec<Var> = zs.into_iter().map(|z| z.expect("every layer sampled")).collect();
        let zcat = tape.concat(&zcat, 1)?;
        let out = self.decode(tape, p, zcat)?;
        let (targets, weights, frames) = win.targets();
        let recon = output::log_lik(tape, &self.cfg, out, &targets, &weights)?;
        if let Some(traj) = rec.as_deref_mut() {
            super::record_outputs(tape, out, win, traj);
            layers.reverse();
            traj.layers.extend(layers);
        }
        let kl = kl.into_iter().map(|k| k.expect("every layer has a KL")).collect();
        Ok((ElboGraph { recon, kl, frames }, Carry::default()))
    }

    fn sample_steps(&self, steps: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let s = self.cfg.stack;
        let (erf, drf) = (self.encoder_rf(), self.decoder_rf());
        let total: usize = self.dims.iter().sum();
        let mut xs: Vec<f64> = Vec::with_capacity(steps * s);
        let mut zhist: Vec<f64> = Vec::with_capacity(steps * total);
        for t in 0..steps {
            let mut tape = Tape::new();
            let p = self.store.bind(&mut tape, false);
            // d_{t-1} per layer from the last `erf` generated steps
            let d_prev: Vec<Var> = if t == 0 {
                (0..self.dims.len()).map(|_| tape.constant(Tensor::zeros(&[1, self.cfg.dc]))).collect()
            } else {
                let first = t.saturating_sub(erf);
                let x = Tensor::matrix(t - first, s, xs[first * s..t * s].to_vec())?;
                let ds = self.encode(&mut tape, &p, x)?;
                ds.into_iter().map(|d| {
                    let m = tape.shape(d)[0];
                    tape.slice(d, 0, m - 1, 1)
                }).collect::<Result<_>>()?
            };
            let mut above: Option<Var> = None;
            let mut row = vec![Vec::new(); self.dims.len()];
            for l in (0..self.dims.len()).rev() {
                let pin = match above {
                    Some(ctx) => tape.concat(&[d_prev[l], ctx], 1)?,
                    None => d_prev[l],
                };
                let prior = self.prior[l].forward(&mut tape, &p, pin)?;
                let (pm, plv) = split_gaussian(&mut tape, prior)?;
                let eps = Tensor::row((0..self.dims[l]).map(|_| StandardNormal.sample(rng)).collect());
                let z = reparam_var(&mut tape, pm, plv, &eps)?;
                row[l] = tape.value(z).data().to_vec();
                above = Some(z);
            }
            zhist.extend(row.concat());
            let first = (t + 1).saturating_sub(drf);
            let zwin = tape.constant(Tensor::matrix(t + 1 - first, total, zhist[first * total..].to_vec())?);
            let params = self.decode(&mut tape, &p, zwin)?;
            let last = tape.value(params).row_slice(t - first).to_vec();
            xs.extend(output::sample_step(&self.cfg, &last, rng));
        }
        Ok(xs)
    }
}
