use std::f64::consts::LN_2;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{adam_step, clip_grad_norm, AdamState, Regime, TrainConfig};
use crate::audio::{shuffled_batches, Batch, EncodedSequence};
use crate::error::{ensure, Result};
use crate::eval::{evaluate, to_bpf, MetricsRecord, SegmentConfig};
use crate::models::{valid_steps, Carry, ElboTerms, Noise, SequenceModel, Window};
use crate::numcore::{Tape, Tensor};

/// Optimizer and bookkeeping state between steps.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Updates applied so far.
    pub step: u64,
    pub adam: AdamState,
    /// Source of per-step noise seeds.
    pub rng: ChaCha8Rng,
    /// Consecutive steps above the divergence threshold.
    pub over_budget: u64,
    /// First step at which the run was flagged as diverged.
    pub diverged_at: Option<u64>,
}

impl TrainState {
    pub fn new(params: &crate::numcore::ParamStore, seed: u64) -> Self {
        Self {
            step: 0,
            adam: AdamState::new(params),
            rng: ChaCha8Rng::seed_from_u64(seed),
            over_budget: 0,
            diverged_at: None,
        }
    }
}

/// One line of the metrics log. Costs are positive (nats and bits of
/// negative log-likelihood bound).
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub step: u64,
    pub split: String,
    pub nats: f64,
    pub frames: usize,
    pub bpf: f64,
    pub recon_bpf: f64,
    pub kl_bpf_total: f64,
    pub kl_bpf: Vec<f64>,
}

impl MetricRow {
    pub fn csv_header(layers: usize) -> String {
        let mut h = String::from("step,split,nats,frames,bpf,recon_bpf,kl_bpf_total");
        for l in 1..=layers {
            h.push_str(&format!(",kl_bpf_l{l}"));
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{},{},{}",
            self.step, self.split, self.nats, self.frames, self.bpf, self.recon_bpf, self.kl_bpf_total
        );
        for k in &self.kl_bpf {
            s.push_str(&format!(",{k}"));
        }
        s
    }

    fn from_terms(step: u64, split: &str, t: &ElboTerms) -> Result<Self> {
        let f = t.frames as f64;
        let kl_bpf: Vec<f64> = t.kl.iter().map(|k| k / LN_2 / f).collect();
        Ok(Self {
            step,
            split: split.into(),
            nats: -t.elbo(),
            frames: t.frames,
            bpf: to_bpf(t.elbo(), t.frames)?,
            recon_bpf: to_bpf(t.recon, t.frames)?,
            kl_bpf_total: kl_bpf.iter().sum(),
            kl_bpf,
        })
    }

    fn from_record(step: u64, split: &str, r: &MetricsRecord) -> Result<Self> {
        Self::from_terms(
            step,
            split,
            &ElboTerms {
                recon: r.recon(),
                kl: r.kl(),
                frames: r.frames(),
            },
        )
    }
}

/// The batches of one epoch and each member's first step.
pub(crate) struct EpochPlan {
    pub batches: Vec<Batch>,
    pub offsets: Vec<usize>,
}

pub(crate) fn plan_epoch(cfg: &TrainConfig, regime: Regime, steps: &[usize], epoch: u64) -> Result<EpochPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(epoch + 1);
    let batches = shuffled_batches(steps, cfg.batch_size, &mut rng)?;
    let offsets = steps
        .iter()
        .map(|&n| match regime {
            Regime::Subsegment(len) if n > len => rng.random_range(0..=n - len),
            _ => 0,
        })
        .collect();
    Ok(EpochPlan { batches, offsets })
}

/// KL weight at (1-based) step `step`.
pub fn kl_weight(cfg: &TrainConfig, step: u64) -> f64 {
    if cfg.kl_warmup_steps == 0 {
        1.0
    } else {
        (step as f64 / cfg.kl_warmup_steps as f64).min(1.0)
    }
}

/// Summed objective gradients and terms of one sequence window. Padding
/// frames carry zero weight and contribute nothing.
pub fn window_gradients(
    model: &dyn SequenceModel,
    win: &Window,
    noise: &Noise,
    kl_weight: f64,
) -> Result<(Vec<Tensor>, ElboTerms)> {
    let mut tape = Tape::new();
    let p = model.params().bind(&mut tape, true);
    let (g, _) = model.forward(&mut tape, &p, win, &Carry::default(), noise, None)?;
    let obj = g.objective(&mut tape, kl_weight)?;
    tape.backward(obj)?;
    Ok((p.grads(&tape, model.params()), g.terms(&tape)))
}

/// Runs until `cfg.max_steps` updates have been applied, starting from
/// `state` (fresh when `None`). Every metrics row is handed to `log` as it is
/// produced. A run flagged as diverged keeps going.
pub fn train(
    model: &mut dyn SequenceModel,
    data: &[EncodedSequence],
    val: &[EncodedSequence],
    cfg: &TrainConfig,
    state: Option<TrainState>,
    log: &mut dyn FnMut(&MetricRow) -> Result<()>,
) -> Result<TrainState> {
    cfg.validate(model)?;
    ensure!(!data.is_empty(), "no training data");
    let s = model.config().stack;
    let bits = model.config().bit_depth;
    let stacked = data
        .iter()
        .map(|seq| {
            ensure!(seq.bit_depth == bits, "sequence {} has bit depth {} but the model expects {bits}", seq.id, seq.bit_depth);
            seq.stack(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let steps: Vec<usize> = stacked.iter().map(valid_steps).collect();
    let regime = cfg.regime(model);
    let mut st = state.unwrap_or_else(|| TrainState::new(model.params(), cfg.seed));
    let mut current: Option<(u64, EpochPlan)> = None;
    let adam = cfg.adam();

    while st.step < cfg.max_steps {
        let n_batches = steps.len().div_ceil(cfg.batch_size) as u64;
        let epoch = st.step / n_batches;
        if current.as_ref().is_none_or(|(e, _)| *e != epoch) {
            current = Some((epoch, plan_epoch(cfg, regime, &steps, epoch)?));
        }
        let plan = &current.as_ref().expect("planned").1;
        let batch = &plan.batches[(st.step % n_batches) as usize];
        let step = st.step + 1;
        let weight = kl_weight(cfg, step);
        let noise_seed = st.rng.next_u64();

        let mut total = ElboTerms::default();
        let mut grads: Option<Vec<Tensor>> = None;
        for (k, &i) in batch.indices.iter().enumerate() {
            let x = &stacked[i];
            let win = match regime {
                Regime::Subsegment(len) => {
                    let o = plan.offsets[i];
                    Window::new(x, o, o, o + len)?
                }
                Regime::FullSequence => Window::full(x),
            };
            let noise = Noise::seeded(noise_seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let (g, t) = window_gradients(model, &win, &noise, weight)?;
            total.accumulate(&t);
            match grads.as_mut() {
                None => grads = Some(g),
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(&g) {
                        a.data_mut().iter_mut().zip(b.data()).for_each(|(u, v)| *u += v);
                    }
                }
            }
        }
        // minimize the per-frame negative objective
        let mut grads = grads.expect("non-empty batch");
        let scale = -1.0 / total.frames as f64;
        for g in &mut grads {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
        clip_grad_norm(&mut grads, cfg.clip_norm);
        adam_step(model.params_mut(), &grads, &mut st.adam, &adam)?;
        st.step = step;

        let row = MetricRow::from_terms(step, "train", &total)?;
        if row.bpf > bits as f64 + 1.0 {
            st.over_budget += 1;
        } else {
            st.over_budget = 0;
        }
        if st.over_budget >= cfg.divergence_patience && st.diverged_at.is_none() {
            st.diverged_at = Some(step);
        }
        log(&row)?;

        if cfg.val_every > 0 && step % cfg.val_every == 0 && !val.is_empty() {
            let rec = evaluate(model, val, SegmentConfig::whole(), cfg.seed)?;
            log(&MetricRow::from_record(step, "val", &rec)?)?;
        }
    }
    Ok(st)
}
