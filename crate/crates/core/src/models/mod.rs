//! The six sequence models behind one contract: a windowed ELBO with
//! explicit state carry, ancestral sampling and posterior inference.
//!
//! Models work on stacked sequences (`s` frames per step). Step `t` is
//! predicted from context up to `t - 1`; deterministic models report exact
//! log-likelihoods, latent models a one-sample ELBO.

mod config;
mod cwvae;
pub(crate) mod layers;
mod lstm;
mod noise;
mod output;
mod srnn;
mod stcn;
mod vrnn;
mod wavenet;

use rand_chacha::ChaCha8Rng;

pub use config::{ModelConfig, ModelKind, OutputKind};
pub use cwvae::{cwvae_schedule, update_layers, CwVae};
pub use lstm::LstmModel;
pub use noise::Noise;
pub use srnn::Srnn;
pub use stcn::{stcn_latent_dims, Stcn};
pub use vrnn::Vrnn;
pub use wavenet::{wavenet_receptive_field, WaveNet};

use crate::audio::StackedSequence;
use crate::error::{ensure, Result};
use crate::numcore::{Bound, ParamStore, Tape, Tensor, Var};

/// Graph handles for one window's objective terms.
#[derive(Clone, Debug)]
pub struct ElboGraph {
    /// Summed `log p(x | ...)` over counted frames (nats).
    pub recon: Var,
    /// Summed KL per latent layer, bottom layer first (nats).
    pub kl: Vec<Var>,
    /// Real frames whose likelihood is counted.
    pub frames: usize,
}

impl ElboGraph {
    pub fn terms(&self, tape: &Tape) -> ElboTerms {
        ElboTerms {
            recon: tape.value(self.recon).item(),
            kl: self.kl.iter().map(|&v| tape.value(v).item()).collect(),
            frames: self.frames,
        }
    }

    /// `recon - weight * sum(kl)` as a graph node.
    pub fn objective(&self, tape: &mut Tape, kl_weight: f64) -> Result<Var> {
        let mut obj = self.recon;
        for &k in &self.kl {
            let scaled = tape.scale(k, kl_weight)?;
            obj = tape.sub(obj, scaled)?;
        }
        Ok(obj)
    }
}

/// Numeric values of an [`ElboGraph`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ElboTerms {
    pub recon: f64,
    pub kl: Vec<f64>,
    pub frames: usize,
}

impl ElboTerms {
    pub fn kl_total(&self) -> f64 {
        self.kl.iter().sum()
    }

    pub fn elbo(&self) -> f64 {
        self.recon - self.kl_total()
    }

    pub fn accumulate(&mut self, other: &ElboTerms) {
        self.recon += other.recon;
        self.frames += other.frames;
        if self.kl.len() < other.kl.len() {
            self.kl.resize(other.kl.len(), 0.0);
        }
        for (a, b) in self.kl.iter_mut().zip(&other.kl) {
            *a += b;
        }
    }
}

/// Opaque recurrent state handed from one window to the next. Empty means
/// "start of sequence".
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Carry(pub Vec<Tensor>);

/// Steps `[start, end)` of a sequence. Likelihood and KL are counted only
/// for steps `>= count_from`; earlier steps are context.
#[derive(Clone, Copy, Debug)]
pub struct Window<'a> {
    pub x: &'a StackedSequence,
    pub start: usize,
    pub count_from: usize,
    pub end: usize,
    /// Backward-recurrence state entering from the right (smoothing models).
    pub lookahead: Option<&'a Tensor>,
}

impl<'a> Window<'a> {
    pub fn new(x: &'a StackedSequence, start: usize, count_from: usize, end: usize) -> Result<Self> {
        let end = end.min(valid_steps(x));
        ensure!(start <= count_from && count_from <= end && start < end, "bad window [{start}, {count_from}, {end})");
        Ok(Self {
            x,
            start,
            count_from,
            end,
            lookahead: None,
        })
    }

    pub fn full(x: &'a StackedSequence) -> Self {
        Self::new(x, 0, 0, x.num_steps()).expect("non-empty sequence")
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn stack(&self) -> usize {
        self.x.stack_size
    }

    /// Rows `x_start .. x_{end-1}` as `[n, s]`, padding frames zeroed.
    pub fn inputs(&self) -> Tensor {
        let s = self.stack();
        let mut steps = self.x.window(self.start, self.end).steps;
        let real = self.x.total_frames.saturating_sub(self.start * s);
        steps.data_mut().iter_mut().skip(real).for_each(|v| *v = 0.0);
        steps
    }

    /// Rows `x_{start-1} .. x_{end-2}`, with zeros before the sequence start.
    pub fn shifted_inputs(&self) -> Tensor {
        let s = self.stack();
        let n = self.len();
        let mut data = vec![0.0; n * s];
        for i in 0..n {
            let t = self.start + i;
            if t >= 1 {
                let real = self.x.total_frames.saturating_sub((t - 1) * s).min(s);
                data[i * s..i * s + real].copy_from_slice(&self.x.step(t - 1)[..real]);
            }
        }
        Tensor::matrix(n, s, data).expect("window shape")
    }

    pub fn counts_step(&self, t: usize) -> bool {
        t >= self.count_from && t < self.end
    }

    /// Flat targets and 0/1 weights over the window's frames.
    pub fn targets(&self) -> (Vec<f64>, Vec<f64>, usize) {
        let s = self.stack();
        let mut targets = Vec::with_capacity(self.len() * s);
        let mut weights = Vec::with_capacity(self.len() * s);
        let mut frames = 0;
        for t in self.start..self.end {
            for (k, &v) in self.x.step(t).iter().enumerate() {
                targets.push(v);
                let real = self.counts_step(t) && t * s + k < self.x.total_frames;
                weights.push(if real { 1.0 } else { 0.0 });
                frames += real as usize;
            }
        }
        (targets, weights, frames)
    }
}

/// Steps holding at least one real frame.
pub fn valid_steps(x: &StackedSequence) -> usize {
    x.total_frames.div_ceil(x.stack_size)
}

/// Posterior (or deterministic) trajectory of one layer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LatentLayer {
    pub name: String,
    /// Update period in steps.
    pub stride: usize,
    /// 0-based step index of every entry (the first step it covers).
    pub steps: Vec<usize>,
    pub samples: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    pub prior_means: Vec<Vec<f64>>,
    /// Deterministic state paired with each entry, when the model has one.
    pub states: Vec<Vec<f64>>,
    pub stochastic: bool,
}

impl LatentLayer {
    pub(crate) fn new(name: impl Into<String>, stride: usize, stochastic: bool) -> Self {
        Self {
            name: name.into(),
            stride,
            stochastic,
            ..Self::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }
}

/// Per-layer latent sequences with timestep bookkeeping.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LatentTrajectory {
    pub stack: usize,
    pub layers: Vec<LatentLayer>,
    /// Output distribution parameters (`s * width` reals) per counted step.
    pub outputs: Vec<Vec<f64>>,
}

impl LatentTrajectory {
    pub fn layer(&self, name: &str) -> Option<&LatentLayer> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Appends `other`'s entries layer by layer (segmented inference).
    pub fn extend(&mut self, other: LatentTrajectory) {
        if self.layers.is_empty() && self.outputs.is_empty() {
            *self = other;
            return;
        }
        self.outputs.extend(other.outputs);
        for (a, b) in self.layers.iter_mut().zip(other.layers) {
            a.steps.extend(b.steps);
            a.samples.extend(b.samples);
            a.means.extend(b.means);
            a.prior_means.extend(b.prior_means);
            a.states.extend(b.states);
        }
    }
}

/// The contract every model implements.
pub trait SequenceModel: Send + Sync {
    fn config(&self) -> &ModelConfig;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;

    /// Steps of left context an output depends on, for models without
    /// recurrent state. `None` for stateful models.
    fn receptive_field(&self) -> Option<usize> {
        None
    }

    /// Segment boundaries must fall on multiples of this many steps.
    fn step_multiple(&self) -> usize {
        1
    }

    /// Builds the objective graph for `win`, starting from `carry`.
    fn forward(
        &self,
        tape: &mut Tape,
        p: &Bound,
        win: &Window,
        carry: &Carry,
        noise: &Noise,
        rec: Option<&mut LatentTrajectory>,
    ) -> Result<(ElboGraph, Carry)>;

    /// Right-to-left state entering each segment, for models whose
    /// inference runs backwards in time.
    fn lookahead(&self, _x: &StackedSequence, bounds: &[(usize, usize)]) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![None; bounds.len()])
    }

    /// Ancestral sample of `steps` stacked steps, flattened to frames.
    fn sample_steps(&self, steps: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;
}

pub type Model = Box<dyn SequenceModel>;

pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<Model> {
    cfg.validate()?;
    Ok(match cfg.kind {
        ModelKind::Lstm => Box::new(LstmModel::new(cfg.clone(), seed)?),
        ModelKind::Wavenet => Box::new(WaveNet::new(cfg.clone(), seed)?),
        ModelKind::Vrnn => Box::new(Vrnn::new(cfg.clone(), seed)?),
        ModelKind::Srnn => Box::new(Srnn::new(cfg.clone(), seed)?),
        ModelKind::Stcn => Box::new(Stcn::new(cfg.clone(), seed)?),
        ModelKind::Cwvae => Box::new(CwVae::new(cfg.clone(), seed)?),
    })
}

fn check_stack(model: &dyn SequenceModel, x: &StackedSequence) -> Result<()> {
    ensure!(
        x.stack_size == model.config().stack,
        "model expects stack size {} but data has {}",
        model.config().stack,
        x.stack_size
    );
    Ok(())
}

/// One-sample ELBO (exact log-likelihood for deterministic models) over a
/// whole sequence.
pub fn elbo(model: &dyn SequenceModel, x: &StackedSequence, noise: &Noise) -> Result<ElboTerms> {
    check_stack(model, x)?;
    let mut tape = Tape::new();
    let p = model.params().bind(&mut tape, false);
    let (g, _) = model.forward(&mut tape, &p, &Window::full(x), &Carry::default(), noise, None)?;
    Ok(g.terms(&tape))
}

/// Posterior samples and means for every layer.
pub fn infer(model: &dyn SequenceModel, x: &StackedSequence, noise: &Noise) -> Result<LatentTrajectory> {
    check_stack(model, x)?;
    let mut tape = Tape::new();
    let p = model.params().bind(&mut tape, false);
    let mut traj = LatentTrajectory {
        stack: x.stack_size,
        ..LatentTrajectory::default()
    };
    model.forward(&mut tape, &p, &Window::full(x), &Carry::default(), noise, Some(&mut traj))?;
    Ok(traj)
}

/// Exactly `frames` sampled frames.
pub fn sample(model: &dyn SequenceModel, frames: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    ensure!(frames >= 1, "sample length must be >= 1");
    let steps = frames.div_ceil(model.config().stack);
    let mut out = model.sample_steps(steps, rng)?;
    out.truncate(frames);
    Ok(out)
}

/// Per-layer KL accumulator over counted steps.
#[derive(Default)]
pub(crate) struct KlRows {
    q_mean: Vec<Var>,
    q_log_var: Vec<Var>,
    p_mean: Vec<Var>,
    p_log_var: Vec<Var>,
}

impl KlRows {
    pub fn push(&mut self, q: (Var, Var), p: (Var, Var)) {
        self.q_mean.push(q.0);
        self.q_log_var.push(q.1);
        self.p_mean.push(p.0);
        self.p_log_var.push(p.1);
    }

    pub fn total(&self, tape: &mut Tape) -> Result<Var> {
        if self.q_mean.is_empty() {
            return Ok(tape.constant(Tensor::scalar(0.0)));
        }
        let qm = tape.concat(&self.q_mean, 0)?;
        let ql = tape.concat(&self.q_log_var, 0)?;
        let pm = tape.concat(&self.p_mean, 0)?;
        let pl = tape.concat(&self.p_log_var, 0)?;
        crate::dists::gaussian_kl_var(tape, qm, ql, pm, pl)
    }
}

/// Splits `[rows, 2d]` Gaussian parameters into mean and log-variance.
pub(crate) fn split_gaussian(tape: &mut Tape, params: Var) -> Result<(Var, Var)> {
    let d = tape.shape(params)[1] / 2;
    Ok((tape.slice(params, 1, 0, d)?, tape.slice(params, 1, d, d)?))
}

pub(crate) fn record_outputs(tape: &Tape, out: Var, win: &Window, traj: &mut LatentTrajectory) {
    traj.outputs.extend(rows_of(tape, out).into_iter().skip(win.count_from - win.start));
}

pub(crate) fn rows_of(tape: &Tape, v: Var) -> Vec<Vec<f64>> {
    let t = tape.value(v);
    let (r, _) = t.rows_cols();
    (0..r).map(|i| t.row_slice(i).to_vec()).collect()
}

#[cfg(test)]
mod tests;
